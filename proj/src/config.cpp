#include "nsmkl/config.hpp"

#include <cmath>
#include <string>

#include "nsmkl/error.hpp"

namespace nsmkl {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::joint_matrix: return "joint-matrix";
    case Regime::joint_vector: return "joint-vector";
    case Regime::disjoint_vector: return "disjoint-vector";
    case Regime::disjoint_matrix: return "disjoint-matrix";
    case Regime::non_localised: return "non-localised";
    case Regime::single_kernel: return "single-kernel";
  }
  return "unknown";
}

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::rbf: return "rbf";
    case KernelKind::linear: return "linear";
    case KernelKind::precomputed: return "precomputed";
  }
  return "unknown";
}

std::string_view to_string(ScoreMode mode) {
  return mode == ScoreMode::raw ? "raw" : "one-distance";
}

Regime parse_regime(std::string_view text) {
  for (Regime r : {Regime::joint_matrix, Regime::joint_vector, Regime::disjoint_vector, Regime::disjoint_matrix,
                   Regime::non_localised, Regime::single_kernel}) {
    if (text == to_string(r)) return r;
  }
  fail(ErrorCode::invalid_argument, "unknown regime '" + std::string(text) + "'");
}

KernelKind parse_kernel_kind(std::string_view text) {
  for (KernelKind k : {KernelKind::rbf, KernelKind::linear, KernelKind::precomputed}) {
    if (text == to_string(k)) return k;
  }
  fail(ErrorCode::invalid_argument, "unknown kernel kind '" + std::string(text) + "'");
}

ScoreMode parse_score_mode(std::string_view text) {
  if (text == "raw") return ScoreMode::raw;
  if (text == "one-distance") return ScoreMode::one_distance;
  fail(ErrorCode::invalid_argument, "unknown score mode '" + std::string(text) + "'");
}

void MklConfig::validate() const {
  auto check = [](bool ok, const char* what) { require(ok, ErrorCode::invalid_argument, what); };
  check(std::isfinite(p) && p >= 1.0, "p must be >= 1");
  check(std::isfinite(q) && q >= 1.0, "q must be >= 1");
  if (theta) {
    check(std::isfinite(*theta) && *theta > 0.0, "theta must be > 0");
  } else {
    check(std::isfinite(delta) && delta > 0.0, "delta must be > 0");
  }
  check(clusters >= 1, "clusters must be >= 1");
  check(max_iter >= 1, "max_iter must be >= 1");
  check(std::isfinite(tol) && tol > 0.0, "tol must be > 0");
  check(std::isfinite(weight_floor) && weight_floor > 0.0, "weight_floor must be > 0");
  check(kmeans_restarts >= 1, "kmeans_restarts must be >= 1");
  if (temperature) check(std::isfinite(*temperature) && *temperature > 0.0, "temperature must be > 0");
}

double MklConfig::resolved_delta(Index n) const {
  return theta ? static_cast<double>(n) / *theta : delta;
}

int MklConfig::effective_clusters() const {
  return (regime == Regime::non_localised || regime == Regime::single_kernel) ? 1 : clusters;
}

}  // namespace nsmkl
