#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "nsmkl/config.hpp"
#include "nsmkl/types.hpp"

namespace nsmkl {

struct KernelSpec {
  KernelKind kind = KernelKind::rbf;
  double width = 1.0;  // RBF sigma; kappa(x, y) = exp(-||x - y||^2 / (2 sigma^2))
  int view_index = 0;

  void validate() const;
};

struct GramMatrix {
  Matrix values;
  KernelSpec spec;
};

/// Half the mean Euclidean distance over unordered pairs i < j of rows.
double rbf_width(const Matrix& view);

/// values(i, j) = kappa(a_i, b_j). Not valid for precomputed specs.
GramMatrix gram(const Matrix& a, const Matrix& b, const KernelSpec& spec);

/// Symmetric training Gram; only the upper triangle is evaluated and mirrored.
GramMatrix gram(const Matrix& x, const KernelSpec& spec);

/// kappa(y, y) for every row of y.
Vector gram_diagonal(const Matrix& y, const KernelSpec& spec);

struct PsdReport {
  double asymmetry = 0.0;       // max |K - K^T|
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool symmetric = false;       // asymmetry <= 1e-12 (scaled by max |K|)
  bool psd = false;             // min eigenvalue >= -1e-8 * max eigenvalue
};

PsdReport check_psd(const Matrix& k);

/// Loads an n x n precomputed Gram (id table) and rejects it unless symmetric and PSD.
GramMatrix load_precomputed_gram(const std::filesystem::path& path, int view_index,
                                 std::vector<std::string>* ids = nullptr);

double lp_norm(std::span<const double> v, double p);

/// Matrix l_{p,q} norm evaluated by its defining double sum: columns by l_p, then l_q.
double lpq_matrix_norm(const Matrix& m, double p, double q);

/// ||v v^T||_{p,q} evaluated through the factorisation ||v||_p * ||v||_q.
double lpq_matrix_norm_of_outer(std::span<const double> v, double p, double q);

/// C x G membership-scaled kernels K_cg[i, j] = p_c(x_i) kappa_g(x_i, x_j) p_c(x_j).
class LocalisedKernelStack {
 public:
  LocalisedKernelStack(std::span<const Matrix> grams, const Matrix& memberships);

  Index clusters() const { return clusters_; }
  Index kernels() const { return kernels_; }
  Index size() const { return n_; }
  Index weight_count() const { return clusters_ * kernels_; }

  /// Cluster-major: (c, g) is at c * G + g, matching the weight-vector blocking.
  const Matrix& at(Index c, Index g) const { return matrices_[static_cast<std::size_t>(c * kernels_ + g)]; }
  const Matrix& at(Index flat) const { return matrices_[static_cast<std::size_t>(flat)]; }
  const Matrix& memberships() const { return memberships_; }

  /// sum_k weights[k] * K_k
  Matrix combine(std::span<const double> weights) const;

 private:
  Index clusters_ = 0;
  Index kernels_ = 0;
  Index n_ = 0;
  Matrix memberships_;
  std::vector<Matrix> matrices_;
};

}  // namespace nsmkl
