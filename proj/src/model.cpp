#include "nsmkl/model.hpp"

#include <cmath>
#include <string>

#include "nsmkl/error.hpp"
#include "nsmkl/simd.hpp"

namespace nsmkl {
namespace {

FitResult fit_from_grams(std::vector<KernelSpec> specs, std::vector<Matrix> grams, std::vector<Matrix> views,
                         const MklConfig& config) {
  config.validate();
  const Index n = grams.front().rows();
  const auto kernels = static_cast<Index>(grams.size());
  if (config.regime == Regime::single_kernel) {
    require(kernels == 1, ErrorCode::invalid_argument,
            "the single-kernel regime needs exactly one view, got " + std::to_string(kernels));
  }

  FitResult fit;
  TrainedModel& model = fit.model;
  model.config = config;
  model.delta = config.resolved_delta(n);
  model.kernel_specs = std::move(specs);
  model.train_views = std::move(views);

  const Matrix avg = average_gram(grams);
  const int clusters = config.effective_clusters();
  if (clusters == 1) {
    model.clusters = single_cluster(avg);
  } else {
    model.clusters = kernel_kmeans(avg, {clusters, config.rng_seed, config.kmeans_restarts, 100});
  }
  if (config.temperature) model.clusters.temperature = *config.temperature;
  const Vector diag = avg.diagonal();
  model.train_memberships = memberships(model.clusters, avg, {diag.data(), static_cast<std::size_t>(diag.size())});

  SolveResult solved;
  if (config.regime == Regime::non_localised) {
    solved = train_non_localised(grams, config);
  } else {
    const LocalisedKernelStack stack(grams, model.train_memberships);
    solved = train(stack, config);
  }
  model.mu = std::move(solved.mu);
  model.lambda = std::move(solved.lambda);
  model.trace = std::move(solved.trace);
  fit.train_grams = std::move(grams);
  model.validate();
  return fit;
}

std::span<const double> row_span(const Matrix& m, Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

void check_query_shapes(const TrainedModel& model, std::span<const Matrix> query_grams,
                        std::span<const Vector> query_diagonals) {
  require(static_cast<Index>(query_grams.size()) == model.kernel_count(), ErrorCode::shape,
          "expected " + std::to_string(model.kernel_count()) + " query Grams, got " + std::to_string(query_grams.size()));
  require(query_diagonals.size() == query_grams.size(), ErrorCode::shape, "one query diagonal per Gram is required");
  const Index m = query_grams[0].rows();
  for (std::size_t g = 0; g < query_grams.size(); ++g) {
    require(query_grams[g].rows() == m && query_grams[g].cols() == model.size(), ErrorCode::shape,
            "query Gram " + std::to_string(g) + " must be " + std::to_string(m) + "x" + std::to_string(model.size()));
    require(query_diagonals[g].size() == m, ErrorCode::shape, "query diagonal has the wrong length");
  }
}

Matrix query_memberships(const TrainedModel& model, std::span<const Matrix> query_grams,
                         std::span<const Vector> query_diagonals) {
  const Matrix avg = average_gram(query_grams);
  Vector diag = query_diagonals[0];
  for (std::size_t g = 1; g < query_diagonals.size(); ++g) diag += query_diagonals[g];
  diag /= static_cast<double>(query_diagonals.size());
  return memberships(model.clusters, avg, {diag.data(), static_cast<std::size_t>(diag.size())});
}

// Columns c of the result hold p_c(x_i) * lambda_i.
Matrix weighted_duals(const TrainedModel& model) {
  Matrix w(model.cluster_count(), model.size());
  for (Index c = 0; c < model.cluster_count(); ++c) {
    w.row(c) = (model.train_memberships.col(c).array() * model.lambda.array()).transpose();
  }
  return w;
}

}  // namespace

void TrainedModel::validate() const {
  const Index n = size();
  const Index c = cluster_count();
  const Index g = kernel_count();
  require(n >= 1 && g >= 1 && c >= 1, ErrorCode::shape, "model is not trained");
  require(train_memberships.rows() == n, ErrorCode::shape, "membership rows differ from lambda length");
  require(mu.size() == c * g, ErrorCode::shape, "weight vector length differs from C*G");
  require(clusters.size() == n && clusters.clusters == c, ErrorCode::shape, "cluster model disagrees with memberships");
  require(train_views.empty() || static_cast<Index>(train_views.size()) == g, ErrorCode::shape,
          "retained views differ from kernel count");
  for (const auto& v : train_views) require(v.rows() == n, ErrorCode::shape, "retained view has the wrong row count");
  require(delta > 0.0, ErrorCode::shape, "delta must be > 0");
}

FitResult fit(const FeatureDataset& train, const MklConfig& config) {
  config.validate();
  train.validate();
  require(config.kernel != KernelKind::precomputed, ErrorCode::invalid_argument,
          "feature training needs an rbf or linear kernel; use fit_precomputed for precomputed Grams");
  std::vector<KernelSpec> specs;
  std::vector<Matrix> grams;
  for (Index g = 0; g < train.view_count(); ++g) {
    KernelSpec spec{config.kernel, 1.0, static_cast<int>(g)};
    if (spec.kind == KernelKind::rbf) spec.width = rbf_width(train.views[static_cast<std::size_t>(g)]);
    grams.push_back(gram(train.views[static_cast<std::size_t>(g)], spec).values);
    specs.push_back(spec);
  }
  return fit_from_grams(std::move(specs), std::move(grams), train.views, config);
}

FitResult fit_precomputed(std::span<const GramMatrix> grams, const MklConfig& config) {
  require(!grams.empty(), ErrorCode::invalid_argument, "no Grams supplied");
  std::vector<KernelSpec> specs;
  std::vector<Matrix> values;
  for (std::size_t g = 0; g < grams.size(); ++g) {
    require(grams[g].values.rows() == grams[0].values.rows() && grams[g].values.cols() == grams[0].values.rows(),
            ErrorCode::shape, "precomputed Grams must all be n x n");
    specs.push_back(KernelSpec{KernelKind::precomputed, 1.0, static_cast<int>(g)});
    values.push_back(grams[g].values);
  }
  return fit_from_grams(std::move(specs), std::move(values), {}, config);
}

std::vector<Matrix> training_grams(const TrainedModel& model) {
  require(!model.train_views.empty(), ErrorCode::invalid_argument, "model was trained on precomputed Grams");
  std::vector<Matrix> grams;
  for (std::size_t g = 0; g < model.kernel_specs.size(); ++g) {
    grams.push_back(gram(model.train_views[g], model.kernel_specs[g]).values);
  }
  return grams;
}

LocalisedKernelStack training_stack(const TrainedModel& model, std::span<const Matrix> train_grams) {
  return LocalisedKernelStack(train_grams, model.train_memberships);
}

void query_grams(const TrainedModel& model, const FeatureDataset& queries, std::vector<Matrix>& grams,
                 std::vector<Vector>& diagonals) {
  require(!model.train_views.empty(), ErrorCode::invalid_argument,
          "model was trained on precomputed Grams; score with query Grams instead");
  queries.validate();
  require(queries.view_count() == model.kernel_count(), ErrorCode::shape,
          "query has " + std::to_string(queries.view_count()) + " views, model expects " +
              std::to_string(model.kernel_count()));
  grams.clear();
  diagonals.clear();
  for (std::size_t g = 0; g < model.kernel_specs.size(); ++g) {
    const auto& spec = model.kernel_specs[g];
    grams.push_back(gram(queries.views[g], model.train_views[g], spec).values);
    diagonals.push_back(gram_diagonal(queries.views[g], spec));
  }
}

Vector project_grams(const TrainedModel& model, std::span<const Matrix> query_grams,
                     std::span<const Vector> query_diagonals) {
  model.validate();
  check_query_shapes(model, query_grams, query_diagonals);
  const Index m = query_grams[0].rows();
  const Index clusters = model.cluster_count();
  const Index kernels = model.kernel_count();
  const Matrix p_query = query_memberships(model, query_grams, query_diagonals);
  const Matrix w = weighted_duals(model);

  Vector scores(m);
  for (Index y = 0; y < m; ++y) {
    double f = 0.0;
    for (Index c = 0; c < clusters; ++c) {
      double inner = 0.0;
      for (Index g = 0; g < kernels; ++g) {
        const double weight = model.mu(c * kernels + g);
        if (weight == 0.0) continue;
        inner += weight * simd::dot(row_span(query_grams[static_cast<std::size_t>(g)], y), row_span(w, c));
      }
      f += p_query(y, c) * inner;
    }
    scores(y) = model.config.score_mode == ScoreMode::raw ? f : -std::abs(f - 1.0);
  }
  return scores;
}

Vector project_component(const TrainedModel& model, std::span<const Matrix> query_grams,
                         std::span<const Vector> query_diagonals, Index cluster, Index kernel) {
  model.validate();
  check_query_shapes(model, query_grams, query_diagonals);
  require(cluster >= 0 && cluster < model.cluster_count() && kernel >= 0 && kernel < model.kernel_count(),
          ErrorCode::invalid_argument, "component index out of range");
  const Matrix p_query = query_memberships(model, query_grams, query_diagonals);
  const Matrix w = weighted_duals(model);
  Vector out(query_grams[0].rows());
  for (Index y = 0; y < out.size(); ++y) {
    out(y) = p_query(y, cluster) * simd::dot(row_span(query_grams[static_cast<std::size_t>(kernel)], y), row_span(w, cluster));
  }
  return out;
}

ScoreReport project(const TrainedModel& model, const FeatureDataset& queries) {
  std::vector<Matrix> grams;
  std::vector<Vector> diagonals;
  query_grams(model, queries, grams, diagonals);
  ScoreReport report;
  report.sample_ids = queries.sample_ids;
  report.scores = project_grams(model, grams, diagonals);
  require(report.scores.allFinite(), ErrorCode::internal, "non-finite score");
  return report;
}

ScoreReport decide(ScoreReport report, double threshold) {
  require(!std::isnan(threshold), ErrorCode::invalid_argument, "threshold must not be NaN");
  report.decisions.clear();
  for (Index i = 0; i < report.scores.size(); ++i) {
    report.decisions.push_back(report.scores(i) >= threshold ? Label::target : Label::nontarget);
  }
  return report;
}

}  // namespace nsmkl
