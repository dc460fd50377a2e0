#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "nsmkl/types.hpp"

namespace nsmkl {

/// Weight-regularisation regime of the MKL problem.
enum class Regime {
  joint_matrix,     // ||mu mu^T||_{p,q} <= 1 over all clusters
  joint_vector,     // ||mu||_p <= 1 over all clusters
  disjoint_vector,  // ||mu_c||_p <= 1 per cluster
  disjoint_matrix,  // ||mu_c mu_c^T||_{p,q} <= 1 per cluster
  non_localised,    // no clustering, ||mu mu^T||_{p,q} <= 1 over G kernels
  single_kernel,    // one kernel, one cluster, closed form
};

enum class KernelKind { rbf, linear, precomputed };

/// Statistic reported by project(): raw projection f(y), or -|f(y) - 1|.
enum class ScoreMode { raw, one_distance };

std::string_view to_string(Regime regime);
std::string_view to_string(KernelKind kind);
std::string_view to_string(ScoreMode mode);
Regime parse_regime(std::string_view text);
KernelKind parse_kernel_kind(std::string_view text);
ScoreMode parse_score_mode(std::string_view text);

struct MklConfig {
  double p = 2.0;
  double q = 2.0;
  double delta = 1.0;
  // When set, delta is derived as n / theta at training time.
  std::optional<double> theta;
  int clusters = 3;
  int max_iter = 200;
  double tol = 1e-6;
  double weight_floor = 1e-12;
  std::uint64_t rng_seed = 0;
  Regime regime = Regime::joint_matrix;

  KernelKind kernel = KernelKind::rbf;
  // Softmax temperature for memberships; unset means the data-adaptive default.
  std::optional<double> temperature;
  int kmeans_restarts = 8;
  ScoreMode score_mode = ScoreMode::raw;

  /// Throws Error(invalid_argument) on any out-of-range field.
  void validate() const;

  double resolved_delta(Index n) const;

  /// Clusters actually used: 1 for the non-localised and single-kernel regimes.
  int effective_clusters() const;
};

}  // namespace nsmkl
