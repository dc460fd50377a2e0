#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference implementation;
// vectorised variants (AVX2+FMA on x86-64, NEON on aarch64) are chosen once at
// runtime and must agree with the reference to a few ulps per term.

#include <cstddef>
#include <span>
#include <string_view>

namespace nsmkl::simd {

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // out[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* out, std::size_t n);
};

const KernelTable& scalar_table();

/// Vectorised table for this CPU, or nullptr when none was compiled in or the CPU lacks it.
const KernelTable* vector_table();

/// The table used by the library. Resolved on first use; NSMKL_SIMD=scalar forces the reference path.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> out) {
  active().axpy(alpha, x.data(), out.data(), x.size());
}

}  // namespace nsmkl::simd
