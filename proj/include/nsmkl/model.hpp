#pragma once

#include <span>
#include <string>
#include <vector>

#include "nsmkl/clustering.hpp"
#include "nsmkl/config.hpp"
#include "nsmkl/dataio.hpp"
#include "nsmkl/kernels.hpp"
#include "nsmkl/solver.hpp"

namespace nsmkl {

/// A trained localised MKL Fisher null-space classifier. Immutable once built.
struct TrainedModel {
  MklConfig config;
  double delta = 1.0;                  // resolved regularisation
  std::vector<KernelSpec> kernel_specs;
  std::vector<Matrix> train_views;     // empty for precomputed kernels
  ClusterModel clusters;
  Matrix train_memberships;            // n x C, p_c(x_i)
  Vector mu;                           // C*G, cluster-major
  Vector lambda;                       // n
  SolveTrace trace;

  Index size() const { return lambda.size(); }
  Index cluster_count() const { return train_memberships.cols(); }
  Index kernel_count() const { return static_cast<Index>(kernel_specs.size()); }

  /// Throws Error(shape) if n, C, G disagree anywhere.
  void validate() const;
};

/// Everything computed on the way to a trained model, for diagnostics.
struct FitResult {
  TrainedModel model;
  std::vector<Matrix> train_grams;
};

/// Full pipeline on feature views: kernel widths, Grams, clustering, localised stack, alternating solve.
FitResult fit(const FeatureDataset& train, const MklConfig& config);

/// Same pipeline on precomputed training Grams.
FitResult fit_precomputed(std::span<const GramMatrix> grams, const MklConfig& config);

/// Rebuilds the localised stack a model was trained on.
LocalisedKernelStack training_stack(const TrainedModel& model, std::span<const Matrix> train_grams);

/// Training Grams recomputed from the retained views.
std::vector<Matrix> training_grams(const TrainedModel& model);

struct ScoreReport {
  std::vector<std::string> sample_ids;
  Vector scores;
  // Filled by decide().
  std::vector<Label> decisions;
};

/// f(y) = sum_c p_c(y) sum_g mu_cg [kappa_g(y, x_i) p_c(x_i)]_i . lambda, from query-vs-train Grams
/// (one m x n matrix per kernel) and kappa_g(y, y) diagonals. Scores follow model.config.score_mode.
Vector project_grams(const TrainedModel& model, std::span<const Matrix> query_grams,
                     std::span<const Vector> query_diagonals);

/// Projection of feature-view queries.
ScoreReport project(const TrainedModel& model, const FeatureDataset& queries);

/// Raw contribution of a single (cluster, kernel) pair with unit weight.
Vector project_component(const TrainedModel& model, std::span<const Matrix> query_grams,
                         std::span<const Vector> query_diagonals, Index cluster, Index kernel);

/// Query-vs-train Grams and diagonals for feature-view queries.
void query_grams(const TrainedModel& model, const FeatureDataset& queries, std::vector<Matrix>& grams,
                 std::vector<Vector>& diagonals);

/// target iff score >= threshold.
ScoreReport decide(ScoreReport report, double threshold);

}  // namespace nsmkl
