#pragma once

#include <optional>
#include <span>
#include <vector>

#include "nsmkl/config.hpp"
#include "nsmkl/kernels.hpp"
#include "nsmkl/types.hpp"

namespace nsmkl {

/// Per-iteration record of the alternating solve.
struct SolveTrace {
  int iterations = 0;
  bool converged = false;
  std::vector<double> lambda_change;  // relative inf-norm change of lambda
  std::vector<double> objective;      // saddle value 2 lambda^T 1 - delta lambda^T lambda - mu^T u
  double residual = 0.0;              // ||(delta I + K_mu) lambda - 1||_inf of the returned pair
};

struct SolveResult {
  Vector mu;
  Vector lambda;
  SolveTrace trace;
};

/// u[(c, g)] = lambda^T K_cg lambda, cluster-major.
Vector compute_u(const LocalisedKernelStack& stack, const Vector& lambda);

/// One closed-form weight update under the joint l_{p,q} constraint:
///   ubar = u .* (mu^{p-2}/||mu||_p^p + mu^{q-2}/||mu||_q^q)^{-1},  mu = ubar / sqrt(||ubar||_p ||ubar||_q)
/// mu_prev is floored at weight_floor before the powers are taken. With q == p this is the
/// l_p vector-norm update (normalised by ||ubar||_p).
Vector mu_update(std::span<const double> u, std::span<const double> mu_prev, double p, double q,
                 double weight_floor = 1e-12);

/// Applies mu_update per regime: whole vector for joint regimes, per G-block for disjoint ones.
Vector regime_mu_update(Regime regime, Index clusters, std::span<const double> u,
                        std::span<const double> mu_prev, double p, double q, double weight_floor);

/// Weights on the constraint surface that maximise mu^T u, i.e. the fixed point of mu_update for
/// this u. Zero entries of u get zero weight. Used by train in place of a single mu_update step.
Vector mu_optimal(std::span<const double> u, double p, double q, double weight_floor = 1e-12);

Vector regime_mu_optimal(Regime regime, Index clusters, std::span<const double> u, double p, double q,
                         double weight_floor);

/// Uniform weights lying on the regime's constraint surface.
Vector uniform_weights(Regime regime, Index clusters, Index kernels, double p, double q);

/// lambda = (delta I + sum_k mu_k K_k)^{-1} 1 through a Cholesky factorisation.
Vector lambda_solve(const LocalisedKernelStack& stack, std::span<const double> mu, double delta);

/// lambda for the uniform joint weights (CG)^{-(p+q)/(2pq)}.
Vector init_lambda(const LocalisedKernelStack& stack, double delta, double p, double q);

/// max_lambda of the saddle objective for fixed mu: 1^T (delta I + K_mu)^{-1} 1.
double saddle_value(const LocalisedKernelStack& stack, std::span<const double> mu, double delta);

/// Objective 2 lambda^T 1 - delta lambda^T lambda - mu^T u(lambda) at an arbitrary pair.
double saddle_objective(const LocalisedKernelStack& stack, std::span<const double> mu, const Vector& lambda,
                        double delta);

struct TrainOptions {
  // Starting dual vector; defaults to init_lambda (or its regime analogue).
  std::optional<Vector> initial_lambda;
};

/// Alternates compute_u -> mu_optimal -> lambda_solve until the relative lambda change is
/// at most tol, or max_iter iterations. Non-convergence is reported in the trace, not thrown.
/// The non-localised and single-kernel regimes require a one-cluster stack.
SolveResult train(const LocalisedKernelStack& stack, const MklConfig& config, const TrainOptions& options = {});

/// Non-localised l_{p,q} MKL directly on the G base Grams (no membership scaling).
SolveResult train_non_localised(std::span<const Matrix> grams, const MklConfig& config,
                                const TrainOptions& options = {});

/// Closed-form single-kernel solution (delta I + K)^{-1} 1.
Vector single_kernel_lambda(const Matrix& k, double delta);

/// Diagnostics of a solved pair.
struct StationarityReport {
  double constraint_violation = 0.0;  // max over regime constraints of |norm - 1|
  double kkt_residual = 0.0;          // relative to ||u||_inf, on coordinates above the floor
  double linear_residual = 0.0;
  double min_weight = 0.0;
};

StationarityReport check_stationarity(const LocalisedKernelStack& stack, const MklConfig& config,
                                      const Vector& mu, const Vector& lambda);

}  // namespace nsmkl
