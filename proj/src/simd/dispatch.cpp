#include <cstdlib>
#include <string_view>

#include "nsmkl/simd.hpp"

namespace nsmkl::simd {

#if defined(NSMKL_HAVE_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* out, std::size_t n);
}  // namespace avx2
#endif

#if defined(NSMKL_HAVE_NEON)
namespace neon {
double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* out, std::size_t n);
}  // namespace neon
#endif

const KernelTable* vector_table() {
#if defined(NSMKL_HAVE_AVX2)
  static const KernelTable table{"avx2", avx2::dot, avx2::squared_distance, avx2::axpy};
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &table : nullptr;
#elif defined(NSMKL_HAVE_NEON)
  static const KernelTable table{"neon", neon::dot, neon::squared_distance, neon::axpy};
  return &table;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = [&]() -> const KernelTable& {
    const char* env = std::getenv("NSMKL_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    if (const KernelTable* vec = vector_table()) return *vec;
    return scalar_table();
  }();
  return chosen;
}

}  // namespace nsmkl::simd
