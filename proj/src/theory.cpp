#include "nsmkl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "nsmkl/error.hpp"
#include "nsmkl/kernels.hpp"

namespace nsmkl {
namespace {

void check_pq(double p, double q) {
  require(std::isfinite(p) && std::isfinite(q) && p >= 1.0 && q >= 1.0, ErrorCode::invalid_argument,
          "p and q must be >= 1");
}

bool within(double smaller, double larger) { return smaller <= larger + 1e-12 * std::max(1.0, std::abs(larger)); }

}  // namespace

void BoundInput::validate() const {
  require(clusters >= 1 && kernels >= 1 && n >= 1, ErrorCode::invalid_argument, "C, G and n must be >= 1");
  check_pq(p, q);
  require(radius > 0.0 && kernel_bound > 0.0, ErrorCode::invalid_argument, "Lambda and r must be > 0");
  require(membership_energy > 0.0 && membership_energy <= static_cast<double>(n) * (1.0 + 1e-12),
          ErrorCode::invalid_argument, "membership energy must lie in (0, n]");
}

double weight_sum_cap(Regime regime, int clusters, int kernels, double p, double q) {
  check_pq(p, q);
  require(clusters >= 1 && kernels >= 1, ErrorCode::invalid_argument, "C and G must be >= 1");
  const double c = clusters;
  const double g = kernels;
  switch (regime) {
    case Regime::joint_matrix: return std::pow(c * g, 1.0 - 1.0 / (2.0 * p) - 1.0 / (2.0 * q));
    case Regime::joint_vector: return std::pow(c * g, 1.0 - 1.0 / p);
    case Regime::disjoint_vector: return c * std::pow(g, 1.0 - 1.0 / p);
    case Regime::disjoint_matrix: return c * std::pow(g, 1.0 - 1.0 / (2.0 * p) - 1.0 / (2.0 * q));
    case Regime::non_localised: return std::pow(g, 1.0 - 1.0 / (2.0 * p) - 1.0 / (2.0 * q));
    case Regime::single_kernel: return 1.0;
  }
  fail(ErrorCode::internal, "unhandled regime");
}

double rademacher_bound(const BoundInput& in) {
  in.validate();
  const double cg = static_cast<double>(in.clusters) * in.kernels;
  return in.radius * in.kernel_bound / static_cast<double>(in.n) *
         std::pow(cg, 0.5 - 1.0 / (4.0 * in.p) - 1.0 / (4.0 * in.q)) * std::sqrt(in.membership_energy);
}

double regime_bound(const BoundInput& in, Regime regime) {
  in.validate();
  return in.radius * in.kernel_bound / static_cast<double>(in.n) *
         std::sqrt(weight_sum_cap(regime, in.clusters, in.kernels, in.p, in.q)) * std::sqrt(in.membership_energy);
}

BoundReport regime_bounds(const BoundInput& in, double delta) {
  BoundReport r;
  r.joint_matrix = regime_bound(in, Regime::joint_matrix);
  r.joint_vector = regime_bound(in, Regime::joint_vector);
  r.disjoint_vector = regime_bound(in, Regime::disjoint_vector);
  r.disjoint_matrix = regime_bound(in, Regime::disjoint_matrix);
  r.ratio_joint_vector = r.joint_matrix / r.joint_vector;
  r.ratio_disjoint_vector = r.joint_matrix / r.disjoint_vector;
  r.ratio_disjoint_matrix = r.joint_matrix / r.disjoint_matrix;
  if (delta > 0.0) r.lambda_norm_bound = std::sqrt(static_cast<double>(in.n)) / delta;
  if (in.q <= in.p) {
    require(within(r.joint_matrix, r.joint_vector) && within(r.joint_matrix, r.disjoint_vector) &&
                within(r.joint_matrix, r.disjoint_matrix),
            ErrorCode::internal, "joint-matrix bound is not the smallest for q <= p");
  }
  return r;
}

double empirical_weight_sums(Regime regime, double p, double q, int clusters, int kernels, int trials,
                             std::uint64_t seed) {
  require(trials >= 1, ErrorCode::invalid_argument, "trials must be >= 1");
  const double cap = weight_sum_cap(regime, clusters, kernels, p, q);
  const bool disjoint = regime == Regime::disjoint_vector || regime == Regime::disjoint_matrix;
  const bool vector_norm = regime == Regime::joint_vector || regime == Regime::disjoint_vector;
  const int total = (regime == Regime::non_localised ? 1 : clusters) * kernels;
  const int blocks = disjoint ? clusters : 1;
  const int block = total / blocks;

  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> magnitude(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double largest = 0.0;
  std::vector<double> v(static_cast<std::size_t>(total));
  for (int t = 0; t < trials; ++t) {
    // Mix dense, sparse and near-uniform draws so the search covers the whole surface.
    const double sparsity = unit(rng) < 0.3 ? unit(rng) : 0.0;
    const double spread = unit(rng) < 0.2 ? 0.05 : 1.0;
    for (auto& x : v) x = unit(rng) < sparsity ? 0.0 : 1.0 + spread * (magnitude(rng) - 1.0);
    double sum = 0.0;
    for (int b = 0; b < blocks; ++b) {
      std::span<double> part(v.data() + b * block, static_cast<std::size_t>(block));
      if (std::all_of(part.begin(), part.end(), [](double x) { return x <= 0.0; })) {
        part[static_cast<std::size_t>(b) % part.size()] = 1.0;
      }
      const double np = lp_norm(part, p);
      const double scale = vector_norm ? np : std::sqrt(np * lp_norm(part, q));
      for (double& x : part) {
        x /= scale;
        sum += x;
      }
    }
    require(sum <= cap + 1e-10, ErrorCode::internal,
            "feasible weights sum to " + std::to_string(sum) + ", above the analytic cap " + std::to_string(cap));
    largest = std::max(largest, sum);
  }
  return largest;
}

LambdaNormDiagnostic lambda_norm_check(const TrainedModel& model) {
  LambdaNormDiagnostic d;
  d.norm = model.lambda.norm();
  d.bound = std::sqrt(static_cast<double>(model.size())) / model.delta;
  d.pass = d.norm <= d.bound + 1e-9;
  return d;
}

double generalisation_bound(double empirical_loss, double complexity, double loss_bound, double confidence, Index n) {
  require(confidence > 0.0 && confidence < 1.0, ErrorCode::invalid_argument, "confidence level must lie in (0, 1)");
  require(loss_bound >= 0.0 && n >= 1, ErrorCode::invalid_argument, "loss bound must be >= 0 and n >= 1");
  return empirical_loss + complexity +
         3.0 * loss_bound * std::sqrt(std::log(2.0 / confidence) / (2.0 * static_cast<double>(n)));
}

ModelDiagnosis diagnose(const TrainedModel& model, std::span<const Matrix> train_grams, double loss_bound,
                        double confidence) {
  model.validate();
  require(static_cast<Index>(train_grams.size()) == model.kernel_count(), ErrorCode::shape,
          "one training Gram per kernel is required");
  const LocalisedKernelStack stack = training_stack(model, train_grams);
  const Matrix combined = stack.combine({model.mu.data(), static_cast<std::size_t>(model.mu.size())});
  const Vector fitted = combined * model.lambda;

  ModelDiagnosis d;
  d.loss_bound = loss_bound;
  d.confidence = confidence;
  d.input.clusters = static_cast<int>(model.cluster_count());
  d.input.kernels = static_cast<int>(model.kernel_count());
  d.input.p = model.config.p;
  d.input.q = model.config.q;
  d.input.n = model.size();
  d.input.radius = std::sqrt(std::max(model.lambda.dot(fitted), std::numeric_limits<double>::min()));
  double max_diag = 0.0;
  for (const auto& k : train_grams) max_diag = std::max(max_diag, k.diagonal().maxCoeff());
  d.input.kernel_bound = std::sqrt(std::max(max_diag, std::numeric_limits<double>::min()));
  d.input.membership_energy = model.train_memberships.squaredNorm();

  d.bounds = regime_bounds(d.input, model.delta);
  d.lambda_norm = lambda_norm_check(model);
  d.empirical_loss = (fitted.array() - 1.0).square().mean();
  d.generalisation = generalisation_bound(d.empirical_loss, d.bounds.joint_matrix, loss_bound, confidence, model.size());
  return d;
}

}  // namespace nsmkl
