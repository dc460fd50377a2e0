#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "nsmkl/config.hpp"
#include "nsmkl/model.hpp"

namespace nsmkl {

// Rademacher complexity bounds for the localised MKL hypothesis classes. All of them share
//   R <= (Lambda r / n) * sqrt(S) * sqrt(sum_c sum_i p_c(x_i)^2)
// and differ only in the cap S on sum_cg mu_cg that each weight constraint implies.

struct BoundInput {
  int clusters = 1;
  int kernels = 1;
  double p = 2.0;
  double q = 2.0;
  Index n = 1;
  double radius = 1.0;         // Lambda, Ivanov radius
  double kernel_bound = 1.0;   // r, sqrt(max kappa(x, x))
  double membership_energy = 1.0;

  void validate() const;
};

/// Largest sum of weights feasible under the regime's constraint.
double weight_sum_cap(Regime regime, int clusters, int kernels, double p, double q);

/// Bound for the joint l_{p,q} (proposed) class.
double rademacher_bound(const BoundInput& input);

double regime_bound(const BoundInput& input, Regime regime);

struct BoundReport {
  double joint_matrix = 0.0;
  double joint_vector = 0.0;
  double disjoint_vector = 0.0;
  double disjoint_matrix = 0.0;
  // joint_matrix divided by each alternative.
  double ratio_joint_vector = 1.0;
  double ratio_disjoint_vector = 1.0;
  double ratio_disjoint_matrix = 1.0;
  double lambda_norm_bound = 0.0;  // sqrt(n) / delta when delta is known, else 0
};

/// Throws Error(internal) if q <= p and the joint-matrix bound is not the smallest.
BoundReport regime_bounds(const BoundInput& input, double delta = 0.0);

/// Samples `trials` feasible weight vectors on the regime's constraint surface and returns the
/// largest observed weight sum. Throws Error(internal) if any exceeds the analytic cap.
double empirical_weight_sums(Regime regime, double p, double q, int clusters, int kernels, int trials,
                             std::uint64_t seed = 0);

struct LambdaNormDiagnostic {
  double norm = 0.0;
  double bound = 0.0;  // sqrt(n) / delta
  bool pass = false;
};

LambdaNormDiagnostic lambda_norm_check(const TrainedModel& model);

/// Empirical loss + complexity term + 3 B_l sqrt(ln(2/confidence) / (2n)).
double generalisation_bound(double empirical_loss, double complexity, double loss_bound, double confidence,
                            Index n);

struct ModelDiagnosis {
  BoundInput input;
  BoundReport bounds;
  LambdaNormDiagnostic lambda_norm;
  double empirical_loss = 0.0;  // mean (f(x_i) - 1)^2 over training points
  double generalisation = 0.0;
  double loss_bound = 1.0;
  double confidence = 0.05;
};

/// Bounds for a trained model, with the attained radius sqrt(lambda^T K lambda) standing in for Lambda.
/// `train_grams` are the G training Grams the model was fitted on.
ModelDiagnosis diagnose(const TrainedModel& model, std::span<const Matrix> train_grams, double loss_bound = 1.0,
                        double confidence = 0.05);

}  // namespace nsmkl
