#include "nsmkl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "nsmkl/error.hpp"

namespace nsmkl {
namespace {

struct ClusterStats {
  std::vector<double> sizes;
  std::vector<double> self_term;
  Matrix row_sums;  // n x C: sum_{j in c} K_ij
};

ClusterStats cluster_stats(const Matrix& k, const std::vector<int>& assignment, int clusters) {
  const Index n = k.rows();
  ClusterStats s{std::vector<double>(static_cast<std::size_t>(clusters), 0.0),
                 std::vector<double>(static_cast<std::size_t>(clusters), 0.0), Matrix::Zero(n, clusters)};
  for (int a : assignment) s.sizes[static_cast<std::size_t>(a)] += 1.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) s.row_sums(i, assignment[static_cast<std::size_t>(j)]) += k(i, j);
  }
  for (Index j = 0; j < n; ++j) {
    const int c = assignment[static_cast<std::size_t>(j)];
    s.self_term[static_cast<std::size_t>(c)] += s.row_sums(j, c);
  }
  for (int c = 0; c < clusters; ++c) {
    const double size = s.sizes[static_cast<std::size_t>(c)];
    if (size > 0.0) s.self_term[static_cast<std::size_t>(c)] /= size * size;
  }
  return s;
}

double distance_to(const Matrix& k, const ClusterStats& s, Index i, int c) {
  const double size = s.sizes[static_cast<std::size_t>(c)];
  if (size == 0.0) return std::numeric_limits<double>::infinity();
  return std::max(0.0, k(i, i) - 2.0 * s.row_sums(i, c) / size + s.self_term[static_cast<std::size_t>(c)]);
}

double objective(const Matrix& k, const ClusterStats& s, const std::vector<int>& assignment) {
  double total = 0.0;
  for (Index i = 0; i < k.rows(); ++i) total += distance_to(k, s, i, assignment[static_cast<std::size_t>(i)]);
  return total;
}

double point_distance(const Matrix& k, Index i, Index j) { return std::max(0.0, k(i, i) + k(j, j) - 2.0 * k(i, j)); }

// k-means++ seeding in feature space.
std::vector<Index> seed_points(const Matrix& k, int clusters, std::mt19937_64& rng) {
  const Index n = k.rows();
  std::vector<Index> seeds;
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  seeds.push_back(pick(rng));
  chosen[static_cast<std::size_t>(seeds.back())] = true;
  std::vector<double> nearest(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) nearest[static_cast<std::size_t>(i)] = point_distance(k, i, seeds.back());

  while (static_cast<int>(seeds.size()) < clusters) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (!chosen[static_cast<std::size_t>(i)]) total += nearest[static_cast<std::size_t>(i)];
    }
    Index next = -1;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (Index i = 0; i < n; ++i) {
        if (chosen[static_cast<std::size_t>(i)]) continue;
        next = i;
        target -= nearest[static_cast<std::size_t>(i)];
        if (target < 0.0 && nearest[static_cast<std::size_t>(i)] > 0.0) break;
      }
    } else {
      // Remaining points all duplicate a seed: take any unchosen one.
      std::vector<Index> free;
      for (Index i = 0; i < n; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) free.push_back(i);
      }
      next = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
    }
    seeds.push_back(next);
    chosen[static_cast<std::size_t>(next)] = true;
    for (Index i = 0; i < n; ++i) {
      nearest[static_cast<std::size_t>(i)] = std::min(nearest[static_cast<std::size_t>(i)], point_distance(k, i, next));
    }
  }
  return seeds;
}

// Moves the worst-fitting point of a multi-point cluster into each empty cluster.
bool fill_empty_clusters(const Matrix& k, std::vector<int>& assignment, int clusters) {
  for (int c = 0; c < clusters; ++c) {
    const auto stats = cluster_stats(k, assignment, clusters);
    if (stats.sizes[static_cast<std::size_t>(c)] > 0.0) continue;
    Index worst = -1;
    double worst_d = -1.0;
    for (Index i = 0; i < k.rows(); ++i) {
      const int a = assignment[static_cast<std::size_t>(i)];
      if (stats.sizes[static_cast<std::size_t>(a)] < 2.0) continue;
      const double d = distance_to(k, stats, i, a);
      if (d > worst_d) {
        worst_d = d;
        worst = i;
      }
    }
    if (worst < 0) return false;
    assignment[static_cast<std::size_t>(worst)] = c;
  }
  return true;
}

struct RunResult {
  std::vector<int> assignment;
  double objective = std::numeric_limits<double>::infinity();
  std::vector<double> history;
  bool ok = false;
};

RunResult lloyd(const Matrix& k, int clusters, int max_iter, std::mt19937_64& rng) {
  const Index n = k.rows();
  const auto seeds = seed_points(k, clusters, rng);
  RunResult run;
  run.assignment.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = point_distance(k, i, seeds[0]);
    for (int c = 1; c < clusters; ++c) {
      const double d = point_distance(k, i, seeds[static_cast<std::size_t>(c)]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    run.assignment[static_cast<std::size_t>(i)] = best;
  }
  // Seeds are their own nearest seed, so no cluster starts empty unless seeds coincide.
  if (!fill_empty_clusters(k, run.assignment, clusters)) return run;

  for (int iter = 0; iter < max_iter; ++iter) {
    const auto stats = cluster_stats(k, run.assignment, clusters);
    const double obj = objective(k, stats, run.assignment);
    if (!run.history.empty()) {
      const double prev = run.history.back();
      require(obj <= prev + 1e-10 * std::max(1.0, std::abs(prev)), ErrorCode::internal,
              "kernel k-means objective increased");
    }
    run.history.push_back(obj);

    std::vector<int> next = run.assignment;
    for (Index i = 0; i < n; ++i) {
      int best = run.assignment[static_cast<std::size_t>(i)];
      double best_d = distance_to(k, stats, i, best);
      for (int c = 0; c < clusters; ++c) {
        const double d = distance_to(k, stats, i, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      next[static_cast<std::size_t>(i)] = best;
    }
    if (!fill_empty_clusters(k, next, clusters)) return run;
    if (next == run.assignment) break;
    run.assignment = std::move(next);
  }
  const auto stats = cluster_stats(k, run.assignment, clusters);
  run.objective = objective(k, stats, run.assignment);
  if (run.objective < run.history.back()) run.history.push_back(run.objective);
  run.ok = true;
  return run;
}

ClusterModel finish(const Matrix& k, std::vector<int> assignment, int clusters) {
  ClusterModel model;
  model.clusters = clusters;
  model.assignment = std::move(assignment);
  const auto stats = cluster_stats(k, model.assignment, clusters);
  model.cluster_sizes = stats.sizes;
  model.mean_self_term = stats.self_term;
  model.objective = objective(k, stats, model.assignment);
  Vector diag = k.diagonal();
  model.temperature = default_temperature(cluster_distances(model, k, {diag.data(), static_cast<std::size_t>(diag.size())}));
  return model;
}

}  // namespace

Matrix ClusterModel::one_hot() const {
  Matrix m = Matrix::Zero(size(), clusters);
  for (Index i = 0; i < size(); ++i) m(i, assignment[static_cast<std::size_t>(i)]) = 1.0;
  return m;
}

ClusterModel kernel_kmeans(const Matrix& gram, const KMeansOptions& options) {
  const Index n = gram.rows();
  require(gram.cols() == n && n >= 1, ErrorCode::shape, "kernel k-means needs a square, non-empty Gram");
  require(options.clusters >= 1, ErrorCode::invalid_argument, "cluster count must be >= 1");
  require(options.clusters <= n, ErrorCode::invalid_argument,
          "cluster count " + std::to_string(options.clusters) + " exceeds sample count " + std::to_string(n));
  require(options.restarts >= 1 && options.max_iter >= 1, ErrorCode::invalid_argument, "restarts and max_iter must be >= 1");

  std::mt19937_64 rng(options.seed);
  RunResult best;
  for (int r = 0; r < options.restarts; ++r) {
    auto run = lloyd(gram, options.clusters, options.max_iter, rng);
    if (run.ok && run.objective < best.objective) best = std::move(run);
  }
  require(best.ok, ErrorCode::degenerate, "kernel k-means collapsed to empty clusters on every restart");
  auto model = finish(gram, std::move(best.assignment), options.clusters);
  model.seed = options.seed;
  model.objective_history = std::move(best.history);
  return model;
}

ClusterModel single_cluster(const Matrix& gram) {
  require(gram.rows() == gram.cols() && gram.rows() >= 1, ErrorCode::shape, "Gram must be square and non-empty");
  auto model = finish(gram, std::vector<int>(static_cast<std::size_t>(gram.rows()), 0), 1);
  model.objective_history = {model.objective};
  return model;
}

Matrix average_gram(std::span<const Matrix> grams) {
  require(!grams.empty(), ErrorCode::shape, "no Grams to average");
  Matrix avg = grams[0];
  for (std::size_t g = 1; g < grams.size(); ++g) {
    require(grams[g].rows() == avg.rows() && grams[g].cols() == avg.cols(), ErrorCode::shape, "Gram shapes differ");
    avg += grams[g];
  }
  return avg / static_cast<double>(grams.size());
}

Matrix cluster_distances(const ClusterModel& model, const Matrix& gram_query_vs_train,
                         std::span<const double> gram_query_diag) {
  const Index m = gram_query_vs_train.rows();
  require(gram_query_vs_train.cols() == model.size(), ErrorCode::shape, "query Gram has wrong column count");
  require(static_cast<Index>(gram_query_diag.size()) == m, ErrorCode::shape, "query diagonal has wrong length");
  Matrix sums = Matrix::Zero(m, model.clusters);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < model.size(); ++j) sums(i, model.assignment[static_cast<std::size_t>(j)]) += gram_query_vs_train(i, j);
  }
  Matrix d2(m, model.clusters);
  for (Index i = 0; i < m; ++i) {
    for (int c = 0; c < model.clusters; ++c) {
      const double size = model.cluster_sizes[static_cast<std::size_t>(c)];
      d2(i, c) = std::max(0.0, gram_query_diag[static_cast<std::size_t>(i)] - 2.0 * sums(i, c) / size +
                                   model.mean_self_term[static_cast<std::size_t>(c)]);
    }
  }
  return d2;
}

double default_temperature(const Matrix& squared_distances) {
  if (squared_distances.rows() == 0) return 1.0;
  const double t = squared_distances.rowwise().minCoeff().mean();
  return t > 0.0 ? t : 1.0;
}

Matrix softmax_memberships(const Matrix& squared_distances, double temperature) {
  require(std::isfinite(temperature) && temperature > 0.0, ErrorCode::invalid_argument, "temperature must be > 0");
  Matrix p(squared_distances.rows(), squared_distances.cols());
  for (Index i = 0; i < p.rows(); ++i) {
    const double nearest = squared_distances.row(i).minCoeff();
    double total = 0.0;
    for (Index c = 0; c < p.cols(); ++c) {
      p(i, c) = std::exp(-(squared_distances(i, c) - nearest) / temperature);
      total += p(i, c);
    }
    p.row(i) /= total;
  }
  return p;
}

Matrix memberships(const ClusterModel& model, const Matrix& gram_query_vs_train, std::span<const double> gram_query_diag) {
  return memberships(model, gram_query_vs_train, gram_query_diag, model.temperature);
}

Matrix memberships(const ClusterModel& model, const Matrix& gram_query_vs_train, std::span<const double> gram_query_diag,
                   double temperature) {
  return softmax_memberships(cluster_distances(model, gram_query_vs_train, gram_query_diag), temperature);
}

}  // namespace nsmkl
