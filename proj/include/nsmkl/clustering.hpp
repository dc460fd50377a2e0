#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nsmkl/types.hpp"

namespace nsmkl {

/// Hard kernel k-means partition of the training set, plus what is needed to
/// measure RKHS distances from new points to the frozen cluster means.
struct ClusterModel {
  int clusters = 1;
  std::vector<int> assignment;          // cluster of each training point
  std::vector<double> cluster_sizes;    // |c|
  std::vector<double> mean_self_term;   // (1/|c|^2) sum_{j,l in c} K_jl
  double temperature = 1.0;
  std::uint64_t seed = 0;
  double objective = 0.0;
  // Objective after each Lloyd step of the kept restart; non-increasing.
  std::vector<double> objective_history;

  Index size() const { return static_cast<Index>(assignment.size()); }
  Matrix one_hot() const;
};

struct KMeansOptions {
  int clusters = 3;
  std::uint64_t seed = 0;
  int restarts = 8;
  int max_iter = 100;
};

ClusterModel kernel_kmeans(const Matrix& gram, const KMeansOptions& options);

/// Trivial single-cluster model over n points (memberships identically 1).
ClusterModel single_cluster(const Matrix& gram);

/// Uniform average of the training Grams; the kernel clustering runs on.
Matrix average_gram(std::span<const Matrix> grams);

/// m x C matrix of d^2(y, c) = K(y,y) - (2/|c|) sum_{j in c} K(y,j) + mean_self_term[c].
Matrix cluster_distances(const ClusterModel& model, const Matrix& gram_query_vs_train,
                         std::span<const double> gram_query_diag);

/// Mean over rows of the smallest squared distance; falls back to 1 when that is zero.
double default_temperature(const Matrix& squared_distances);

/// Row-wise softmax of -d^2 / T.
Matrix softmax_memberships(const Matrix& squared_distances, double temperature);

/// p_c(y) for each query row, using the model's temperature unless one is given.
Matrix memberships(const ClusterModel& model, const Matrix& gram_query_vs_train,
                   std::span<const double> gram_query_diag);
Matrix memberships(const ClusterModel& model, const Matrix& gram_query_vs_train,
                   std::span<const double> gram_query_diag, double temperature);

}  // namespace nsmkl
