#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "nsmkl/types.hpp"

namespace nsmkl::testing {

inline Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  }
  return m;
}

// RBF Gram of random points, computed independently of the library.
inline Matrix random_rbf_gram(std::mt19937_64& rng, Index n, Index dim, double sigma) {
  const Matrix x = random_matrix(rng, n, dim);
  Matrix k(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) k(i, j) = std::exp(-(x.row(i) - x.row(j)).squaredNorm() / (2 * sigma * sigma));
  }
  return k;
}

inline Matrix random_psd(std::mt19937_64& rng, Index n) {
  const Matrix a = random_matrix(rng, n, n);
  return a * a.transpose() / static_cast<double>(n);
}

// Rows drawn uniformly from the probability simplex.
inline Matrix random_memberships(std::mt19937_64& rng, Index n, Index c) {
  std::exponential_distribution<double> e(1.0);
  Matrix p(n, c);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < c; ++j) p(i, j) = e(rng);
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline Vector random_unit(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (auto& x : v) x = normal(rng);
  return v / v.norm();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nsmkl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace nsmkl::testing
