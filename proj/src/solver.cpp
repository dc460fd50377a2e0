#include "nsmkl/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nsmkl/error.hpp"
#include "nsmkl/parallel.hpp"
#include "nsmkl/simd.hpp"

namespace nsmkl {
namespace {

bool is_disjoint(Regime regime) { return regime == Regime::disjoint_vector || regime == Regime::disjoint_matrix; }

bool is_vector_norm(Regime regime) { return regime == Regime::joint_vector || regime == Regime::disjoint_vector; }

double relative_change(const Vector& next, const Vector& prev) {
  const double scale = std::max(next.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (next - prev).cwiseAbs().maxCoeff() / scale;
}

Vector ones(Index n) { return Vector::Ones(n); }

Vector solve_spd(Eigen::MatrixXd a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  require(llt.info() == Eigen::Success, ErrorCode::internal,
          "Cholesky factorisation of delta I + K failed; the kernel stack is not PSD");
  return llt.solve(ones(a.rows()));
}

void check_regime_shape(Regime regime, Index clusters, Index kernels) {
  if (regime == Regime::non_localised) {
    require(clusters == 1, ErrorCode::invalid_argument, "the non-localised regime needs a one-cluster stack");
  }
  if (regime == Regime::single_kernel) {
    require(clusters == 1 && kernels == 1, ErrorCode::invalid_argument,
            "the single-kernel regime needs exactly one cluster and one kernel");
  }
}

// The alternating fixed-point iteration, parameterised on how u and lambda are obtained.
template <typename ComputeU, typename Solve>
SolveResult alternate(const MklConfig& config, Index clusters, Vector mu, Vector lambda, ComputeU&& compute,
                      Solve&& solve) {
  SolveResult result;
  Vector best_mu = mu;
  Vector best_lambda = lambda;
  double best_objective = std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= config.max_iter; ++iter) {
    const Vector u = compute(lambda);
    mu = regime_mu_optimal(config.regime, clusters, {u.data(), static_cast<std::size_t>(u.size())}, config.p,
                           config.q, config.weight_floor);
    Vector next = solve(mu);
    const double change = relative_change(next, lambda);
    lambda = std::move(next);
    // At the inner optimum (delta I + K_mu) lambda = 1, so the saddle value reduces to 1^T lambda.
    const double objective = lambda.sum();
    result.trace.iterations = iter;
    result.trace.lambda_change.push_back(change);
    result.trace.objective.push_back(objective);
    if (objective < best_objective) {
      best_objective = objective;
      best_mu = mu;
      best_lambda = lambda;
    }
    if (change <= config.tol) {
      result.trace.converged = true;
      break;
    }
  }
  if (result.trace.converged) {
    result.mu = std::move(mu);
    result.lambda = std::move(lambda);
  } else {
    result.mu = std::move(best_mu);
    result.lambda = std::move(best_lambda);
  }
  return result;
}

}  // namespace

Vector compute_u(const LocalisedKernelStack& stack, const Vector& lambda) {
  require(lambda.size() == stack.size(), ErrorCode::shape, "lambda length differs from the stack size");
  const Index n = stack.size();
  Vector u(stack.weight_count());
  const std::span<const double> lam(lambda.data(), static_cast<std::size_t>(n));
  parallel_for(0, static_cast<std::size_t>(u.size()), [&](std::size_t k) {
    const Matrix& m = stack.at(static_cast<Index>(k));
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      acc += lambda(i) * simd::dot({m.data() + i * n, static_cast<std::size_t>(n)}, lam);
    }
    // PSD kernels give u >= 0; clip roundoff.
    u(static_cast<Index>(k)) = std::max(0.0, acc);
  });
  return u;
}

Vector mu_update(std::span<const double> u, std::span<const double> mu_prev, double p, double q, double weight_floor) {
  require(u.size() == mu_prev.size() && !u.empty(), ErrorCode::shape, "u and mu must have the same non-zero length");
  require(p >= 1.0 && q >= 1.0, ErrorCode::invalid_argument, "p and q must be >= 1");
  require(weight_floor > 0.0, ErrorCode::invalid_argument, "weight floor must be > 0");
  bool any_positive = false;
  for (double x : u) {
    require(std::isfinite(x) && x >= 0.0, ErrorCode::invalid_argument, "u must be finite and non-negative");
    any_positive = any_positive || x > 0.0;
  }
  require(any_positive, ErrorCode::degenerate, "degenerate weights: u is identically zero");

  const std::size_t len = u.size();
  std::vector<double> floored(len);
  double sum_p = 0.0;
  double sum_q = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    floored[k] = std::max(mu_prev[k], weight_floor);
    sum_p += std::pow(floored[k], p);
    sum_q += std::pow(floored[k], q);
  }

  std::vector<double> ubar(len);
  for (std::size_t k = 0; k < len; ++k) {
    const double denom = std::pow(floored[k], p - 2.0) / sum_p + std::pow(floored[k], q - 2.0) / sum_q;
    require(std::isfinite(denom) && denom > 0.0, ErrorCode::degenerate, "weight update denominator is not finite");
    ubar[k] = u[k] / denom;
  }
  Eigen::Map<const Vector> ubar_vec(ubar.data(), static_cast<Index>(len));
  const double gamma = std::sqrt(lp_norm(ubar, p) * lp_norm(ubar, q));
  require(std::isfinite(gamma) && gamma > 0.0, ErrorCode::degenerate, "weight normaliser is not finite");
  return ubar_vec / gamma;
}

namespace {

// log(sum_k exp(s * y_k)) over the active coordinates.
double log_sum_exp(const std::vector<double>& y, const std::vector<bool>& active, double s) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (active[k]) top = std::max(top, s * y[k]);
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (active[k]) acc += std::exp(s * y[k] - top);
  }
  return top + std::log(acc);
}

// Solves exp(a y) + exp(t + b y) = exp(log_u) for y. The left side is convex and increasing in y,
// so Newton from the smaller single-term root approaches monotonically from above.
double membership_log_root(double log_u, double a, double b, double t) {
  double y = std::min(log_u / a, (log_u - t) / b);
  for (int it = 0; it < 100; ++it) {
    const double e1 = a * y;
    const double e2 = t + b * y;
    const double top = std::max(e1, e2);
    const double w1 = std::exp(e1 - top);
    const double w2 = std::exp(e2 - top);
    const double f = top + std::log(w1 + w2) - log_u;
    const double step = f / ((a * w1 + b * w2) / (w1 + w2));
    y -= step;
    if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(y))) break;
  }
  return y;
}

}  // namespace

Vector mu_optimal(std::span<const double> u, double p, double q, double weight_floor) {
  require(!u.empty(), ErrorCode::shape, "u must be non-empty");
  require(p >= 1.0 && q >= 1.0, ErrorCode::invalid_argument, "p and q must be >= 1");
  bool any_positive = false;
  for (double x : u) {
    require(std::isfinite(x) && x >= 0.0, ErrorCode::invalid_argument, "u must be finite and non-negative");
    any_positive = any_positive || x > 0.0;
  }
  require(any_positive, ErrorCode::degenerate, "degenerate weights: u is identically zero");
  const std::size_t len = u.size();

  if (p == 1.0 || q == 1.0) {
    // No interior stationary point to solve for; iterate the one-step map from uniform weights.
    Vector mu = Vector::Constant(static_cast<Index>(len), 1.0);
    mu /= std::sqrt(lp_norm({mu.data(), len}, p) * lp_norm({mu.data(), len}, q));
    for (int it = 0; it < 500; ++it) {
      Vector next = mu_update(u, {mu.data(), len}, p, q, weight_floor);
      const double change = (next - mu).cwiseAbs().maxCoeff();
      mu = std::move(next);
      if (change <= 1e-15) break;
    }
    return mu;
  }

  // Stationarity u_k = gamma (mu_k^{p-1}/||mu||_p^p + mu_k^{q-1}/||mu||_q^q). Up to scale this is
  // u_k = m_k^{p-1} + beta m_k^{q-1} with beta = ||m||_p^p / ||m||_q^q, a scalar root in t = log beta.
  std::vector<bool> active(len);
  std::vector<double> log_u(len), y(len, 0.0);
  for (std::size_t k = 0; k < len; ++k) {
    active[k] = u[k] > 0.0;
    log_u[k] = active[k] ? std::log(u[k]) : 0.0;
  }
  const double a = p - 1.0;
  const double b = q - 1.0;
  auto residual = [&](double t) {
    for (std::size_t k = 0; k < len; ++k) {
      if (active[k]) y[k] = membership_log_root(log_u[k], a, b, t);
    }
    return log_sum_exp(y, active, p) - log_sum_exp(y, active, q) - t;
  };

  double t = 0.0;
  if (p != q) {
    // The residual is positive as t -> -inf and negative as t -> +inf.
    double lo = 0.0, hi = 0.0;
    double f_lo = residual(0.0), f_hi = f_lo;
    for (double span = 1.0; f_lo < 0.0; span *= 2.0) {
      hi = lo;
      f_hi = f_lo;
      lo = -span;
      f_lo = residual(lo);
      require(span < 1e6, ErrorCode::degenerate, "weight solve could not bracket its scale");
    }
    for (double span = 1.0; f_hi > 0.0; span *= 2.0) {
      lo = hi;
      f_lo = f_hi;
      hi = span;
      f_hi = residual(hi);
      require(span < 1e6, ErrorCode::degenerate, "weight solve could not bracket its scale");
    }
    // Illinois-style regula falsi.
    int side = 0;
    t = lo;
    for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, std::abs(lo)); ++it) {
      t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
      if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
      const double f = residual(t);
      if (f == 0.0) break;
      if (f > 0.0) {
        lo = t;
        f_lo = f;
        if (side == 1) f_hi *= 0.5;
        side = 1;
      } else {
        hi = t;
        f_hi = f;
        if (side == -1) f_lo *= 0.5;
        side = -1;
      }
    }
  }
  residual(t);

  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < len; ++k) {
    if (active[k]) top = std::max(top, y[k]);
  }
  Vector mu = Vector::Zero(static_cast<Index>(len));
  for (std::size_t k = 0; k < len; ++k) {
    if (active[k]) mu[static_cast<Index>(k)] = std::exp(y[k] - top);
  }
  const double scale = std::sqrt(lp_norm({mu.data(), len}, p) * lp_norm({mu.data(), len}, q));
  return mu / scale;
}

Vector regime_mu_optimal(Regime regime, Index clusters, std::span<const double> u, double p, double q,
                         double weight_floor) {
  const double q_eff = is_vector_norm(regime) ? p : q;
  if (!is_disjoint(regime)) return mu_optimal(u, p, q_eff, weight_floor);
  require(clusters >= 1 && u.size() % static_cast<std::size_t>(clusters) == 0, ErrorCode::shape,
          "weight vector does not split into cluster blocks");
  const std::size_t block = u.size() / static_cast<std::size_t>(clusters);
  Vector mu(static_cast<Index>(u.size()));
  for (Index c = 0; c < clusters; ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * block;
    mu.segment(static_cast<Index>(off), static_cast<Index>(block)) =
        mu_optimal(u.subspan(off, block), p, q_eff, weight_floor);
  }
  return mu;
}

Vector regime_mu_update(Regime regime, Index clusters, std::span<const double> u, std::span<const double> mu_prev,
                        double p, double q, double weight_floor) {
  const double q_eff = is_vector_norm(regime) ? p : q;
  if (!is_disjoint(regime)) return mu_update(u, mu_prev, p, q_eff, weight_floor);

  require(clusters >= 1 && u.size() % static_cast<std::size_t>(clusters) == 0, ErrorCode::shape,
          "weight vector does not split into cluster blocks");
  const std::size_t block = u.size() / static_cast<std::size_t>(clusters);
  Vector mu(static_cast<Index>(u.size()));
  for (Index c = 0; c < clusters; ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * block;
    mu.segment(static_cast<Index>(off), static_cast<Index>(block)) =
        mu_update(u.subspan(off, block), mu_prev.subspan(off, block), p, q_eff, weight_floor);
  }
  return mu;
}

Vector uniform_weights(Regime regime, Index clusters, Index kernels, double p, double q) {
  const double count = static_cast<double>(is_disjoint(regime) ? kernels : clusters * kernels);
  const double q_eff = is_vector_norm(regime) ? p : q;
  // ||w 1||_p ||w 1||_q = w^2 count^{1/p + 1/q} = 1
  const double w = std::pow(count, -(p + q_eff) / (2.0 * p * q_eff));
  return Vector::Constant(clusters * kernels, w);
}

Vector lambda_solve(const LocalisedKernelStack& stack, std::span<const double> mu, double delta) {
  require(delta > 0.0, ErrorCode::invalid_argument, "delta must be > 0");
  for (double w : mu) require(w >= 0.0, ErrorCode::invalid_argument, "kernel weights must be non-negative");
  Eigen::MatrixXd a = stack.combine(mu);
  a.diagonal().array() += delta;
  return solve_spd(std::move(a));
}

Vector init_lambda(const LocalisedKernelStack& stack, double delta, double p, double q) {
  const Vector mu0 = uniform_weights(Regime::joint_matrix, stack.clusters(), stack.kernels(), p, q);
  return lambda_solve(stack, {mu0.data(), static_cast<std::size_t>(mu0.size())}, delta);
}

double saddle_value(const LocalisedKernelStack& stack, std::span<const double> mu, double delta) {
  return lambda_solve(stack, mu, delta).sum();
}

double saddle_objective(const LocalisedKernelStack& stack, std::span<const double> mu, const Vector& lambda,
                        double delta) {
  const Vector u = compute_u(stack, lambda);
  Eigen::Map<const Vector> w(mu.data(), static_cast<Index>(mu.size()));
  return 2.0 * lambda.sum() - delta * lambda.squaredNorm() - w.dot(u);
}

SolveResult train(const LocalisedKernelStack& stack, const MklConfig& config, const TrainOptions& options) {
  config.validate();
  check_regime_shape(config.regime, stack.clusters(), stack.kernels());
  const double delta = config.resolved_delta(stack.size());
  Vector mu = uniform_weights(config.regime, stack.clusters(), stack.kernels(), config.p, config.q);
  Vector lambda;
  if (options.initial_lambda) {
    require(options.initial_lambda->size() == stack.size(), ErrorCode::shape, "initial lambda has the wrong length");
    lambda = *options.initial_lambda;
  } else {
    lambda = lambda_solve(stack, {mu.data(), static_cast<std::size_t>(mu.size())}, delta);
  }

  auto result = alternate(
      config, stack.clusters(), std::move(mu), std::move(lambda),
      [&](const Vector& lam) { return compute_u(stack, lam); },
      [&](const Vector& w) { return lambda_solve(stack, {w.data(), static_cast<std::size_t>(w.size())}, delta); });

  Eigen::MatrixXd a = stack.combine({result.mu.data(), static_cast<std::size_t>(result.mu.size())});
  a.diagonal().array() += delta;
  result.trace.residual = (a * result.lambda - ones(stack.size())).cwiseAbs().maxCoeff();
  return result;
}

SolveResult train_non_localised(std::span<const Matrix> grams, const MklConfig& config, const TrainOptions& options) {
  config.validate();
  require(!grams.empty(), ErrorCode::shape, "no kernels");
  const Index n = grams[0].rows();
  for (const auto& k : grams) require(k.rows() == n && k.cols() == n, ErrorCode::shape, "Gram shapes differ");
  const double delta = config.resolved_delta(n);
  const Index kernels = static_cast<Index>(grams.size());

  MklConfig joint = config;
  joint.regime = Regime::joint_matrix;

  auto combined = [&](const Vector& w) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) * delta;
    for (Index g = 0; g < kernels; ++g) a += w(g) * grams[static_cast<std::size_t>(g)];
    return a;
  };
  Vector mu = Vector::Constant(kernels, std::pow(static_cast<double>(kernels), -(config.p + config.q) / (2.0 * config.p * config.q)));
  Vector lambda = options.initial_lambda ? *options.initial_lambda : solve_spd(combined(mu));
  require(lambda.size() == n, ErrorCode::shape, "initial lambda has the wrong length");

  auto result = alternate(
      joint, 1, std::move(mu), std::move(lambda),
      [&](const Vector& lam) {
        Vector u(kernels);
        for (Index g = 0; g < kernels; ++g) {
          u(g) = std::max(0.0, lam.dot(grams[static_cast<std::size_t>(g)] * lam));
        }
        return u;
      },
      [&](const Vector& w) { return solve_spd(combined(w)); });
  result.trace.residual = (combined(result.mu) * result.lambda - ones(n)).cwiseAbs().maxCoeff();
  return result;
}

Vector single_kernel_lambda(const Matrix& k, double delta) {
  require(k.rows() == k.cols(), ErrorCode::shape, "Gram must be square");
  require(delta > 0.0, ErrorCode::invalid_argument, "delta must be > 0");
  Eigen::MatrixXd a = k;
  a.diagonal().array() += delta;
  return solve_spd(std::move(a));
}

StationarityReport check_stationarity(const LocalisedKernelStack& stack, const MklConfig& config, const Vector& mu,
                                      const Vector& lambda) {
  require(mu.size() == stack.weight_count(), ErrorCode::shape, "weight vector has the wrong length");
  StationarityReport report;
  report.min_weight = mu.minCoeff();
  const double delta = config.resolved_delta(stack.size());
  const double q_eff = is_vector_norm(config.regime) ? config.p : config.q;

  Eigen::MatrixXd a = stack.combine({mu.data(), static_cast<std::size_t>(mu.size())});
  a.diagonal().array() += delta;
  report.linear_residual = (a * lambda - ones(stack.size())).cwiseAbs().maxCoeff();

  const Vector u = compute_u(stack, lambda);
  const double u_scale = std::max(u.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  const Index blocks = is_disjoint(config.regime) ? stack.clusters() : 1;
  const Index block = mu.size() / blocks;
  for (Index b = 0; b < blocks; ++b) {
    const Vector w = mu.segment(b * block, block);
    const Vector ub = u.segment(b * block, block);
    const std::span<const double> ws(w.data(), static_cast<std::size_t>(w.size()));
    const double np = lp_norm(ws, config.p);
    const double nq = lp_norm(ws, q_eff);
    const double norm = is_vector_norm(config.regime) ? np : np * nq;
    report.constraint_violation = std::max(report.constraint_violation, std::abs(norm - 1.0));

    // KKT with zero multiplier on the non-negativity constraint:
    // u = gamma (mu^{p-1}/||mu||_p^p + mu^{q-1}/||mu||_q^q)
    Vector grad(block);
    for (Index k = 0; k < block; ++k) {
      grad(k) = std::pow(w(k), config.p - 1.0) / std::pow(np, config.p) + std::pow(w(k), q_eff - 1.0) / std::pow(nq, q_eff);
    }
    const double gamma = w.dot(ub) / w.dot(grad);
    for (Index k = 0; k < block; ++k) {
      if (w(k) <= config.weight_floor) continue;
      report.kkt_residual = std::max(report.kkt_residual, std::abs(ub(k) - gamma * grad(k)) / u_scale);
    }
  }
  return report;
}

}  // namespace nsmkl
