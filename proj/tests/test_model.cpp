#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "nsmkl/archive.hpp"
#include "nsmkl/error.hpp"
#include "nsmkl/model.hpp"
#include "nsmkl/synth.hpp"
#include "support.hpp"

using namespace nsmkl;

namespace {

SynthData small_data(std::uint64_t seed) {
  LocalitySpec spec;
  spec.train_per_cluster = 12;
  spec.test_per_cluster = 4;
  spec.outliers = 10;
  spec.dim = 4;
  spec.seed = seed;
  return make_locality_data(spec);
}

MklConfig small_config() {
  MklConfig c;
  c.clusters = 3;
  c.delta = 36.0;
  c.p = 2;
  c.q = 4.0 / 3;
  c.rng_seed = 3;
  return c;
}

// Scores computed from scratch with explicit loops: RBF Grams, kernel-trick distances on the averaged
// Gram, softmax memberships, then the weighted projection.
Vector oracle_scores(const TrainedModel& m, const FeatureDataset& q) {
  const Index n = m.size(), G = m.kernel_count(), C = m.cluster_count(), Q = q.size();
  auto kappa = [&](Index g, const auto& a, const auto& b) {
    const double s = m.kernel_specs[static_cast<std::size_t>(g)].width;
    return std::exp(-(a - b).squaredNorm() / (2 * s * s));
  };
  Matrix kyx = Matrix::Zero(Q, n), kxx = Matrix::Zero(n, n);
  std::vector<Matrix> per(static_cast<std::size_t>(G), Matrix(Q, n));
  for (Index g = 0; g < G; ++g) {
    const Matrix& X = m.train_views[static_cast<std::size_t>(g)];
    const Matrix& Y = q.views[static_cast<std::size_t>(g)];
    for (Index y = 0; y < Q; ++y) {
      for (Index i = 0; i < n; ++i) {
        per[static_cast<std::size_t>(g)](y, i) = kappa(g, Y.row(y), X.row(i));
        kyx(y, i) += per[static_cast<std::size_t>(g)](y, i) / G;
      }
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) kxx(i, j) += kappa(g, X.row(i), X.row(j)) / G;
    }
  }
  Vector out(Q);
  for (Index y = 0; y < Q; ++y) {
    std::vector<double> d2(static_cast<std::size_t>(C));
    for (Index c = 0; c < C; ++c) {
      double cross = 0, self = 0, size = 0;
      for (Index i = 0; i < n; ++i) {
        if (m.clusters.assignment[static_cast<std::size_t>(i)] != c) continue;
        size += 1;
        cross += kyx(y, i);
        for (Index j = 0; j < n; ++j) {
          if (m.clusters.assignment[static_cast<std::size_t>(j)] == c) self += kxx(i, j);
        }
      }
      d2[static_cast<std::size_t>(c)] = 1.0 - 2.0 * cross / size + self / (size * size);
    }
    double z = 0;
    std::vector<double> p(static_cast<std::size_t>(C));
    for (Index c = 0; c < C; ++c) z += p[static_cast<std::size_t>(c)] = std::exp(-d2[static_cast<std::size_t>(c)] / m.clusters.temperature);
    double f = 0;
    for (Index c = 0; c < C; ++c) {
      for (Index g = 0; g < G; ++g) {
        double inner = 0;
        for (Index i = 0; i < n; ++i) inner += per[static_cast<std::size_t>(g)](y, i) * m.train_memberships(i, c) * m.lambda[i];
        f += p[static_cast<std::size_t>(c)] / z * m.mu[c * G + g] * inner;
      }
    }
    out[y] = f;
  }
  return out;
}

}  // namespace

TEST_CASE("projection matches an explicit evaluation") {
  const auto data = small_data(1);
  const auto fitted = fit(data.train, small_config());
  const auto report = project(fitted.model, data.test);
  const Vector expected = oracle_scores(fitted.model, data.test);
  CHECK((report.scores - expected).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(report.sample_ids == data.test.sample_ids);
}

TEST_CASE("projection is linear in the weights") {
  const auto data = small_data(2);
  const auto fitted = fit(data.train, small_config());
  const auto& m = fitted.model;
  std::vector<Matrix> grams;
  std::vector<Vector> diags;
  query_grams(m, data.test, grams, diags);
  const Vector f = project_grams(m, grams, diags);
  Vector sum = Vector::Zero(f.size());
  for (Index c = 0; c < m.cluster_count(); ++c) {
    for (Index g = 0; g < m.kernel_count(); ++g) sum += m.mu[c * m.kernel_count() + g] * project_component(m, grams, diags, c, g);
  }
  CHECK((f - sum).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("scalar model") {
  FeatureDataset one;
  one.views = {Matrix{{0.3, -0.2}}};
  one.sample_ids = {"x"};
  MklConfig c;
  c.regime = Regime::single_kernel;
  c.kernel = KernelKind::linear;
  for (double delta : {1.0, 1e-3, 1e-6}) {
    c.delta = delta;
    const auto m = fit(one, c).model;
    const double k = 0.13;
    CHECK(m.lambda[0] == doctest::Approx(1.0 / (delta + k)).epsilon(1e-12));
    CHECK(project(m, one).scores[0] == doctest::Approx(k / (delta + k)).epsilon(1e-12));
  }
}

TEST_CASE("a training point scores its own projection on a one-kernel model") {
  std::mt19937_64 rng(4);
  FeatureDataset ds;
  ds.views = {testing::random_matrix(rng, 10, 3)};
  for (int i = 0; i < 10; ++i) ds.sample_ids.push_back("s" + std::to_string(i));
  MklConfig c;
  c.regime = Regime::single_kernel;
  c.delta = 0.4;
  const auto fitted = fit(ds, c);
  const Vector expected = fitted.train_grams[0] * fitted.model.lambda;
  const auto scores = project(fitted.model, ds).scores;
  CHECK((scores - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("small delta pulls training scores towards one") {
  const auto data = small_data(5);
  MklConfig c = small_config();
  c.delta = 1e-3 * static_cast<double>(data.train.size());
  c.regime = Regime::non_localised;
  const auto fitted = fit(data.train, c);
  CHECK(std::abs(project(fitted.model, data.train).scores.mean() - 1.0) <= 0.15);
}

TEST_CASE("decisions and score modes") {
  ScoreReport r;
  r.scores = Vector{{0.9, 0.1}};
  const auto d = decide(r, 0.5);
  CHECK(d.decisions == std::vector<Label>{Label::target, Label::nontarget});
  const auto all = decide(r, -std::numeric_limits<double>::infinity());
  CHECK(all.decisions == std::vector<Label>{Label::target, Label::target});

  const auto data = small_data(6);
  auto fitted = fit(data.train, small_config());
  const Vector raw = project(fitted.model, data.test).scores;
  fitted.model.config.score_mode = ScoreMode::one_distance;
  const Vector dist = project(fitted.model, data.test).scores;
  for (Index i = 0; i < raw.size(); ++i) CHECK(dist[i] == -std::abs(raw[i] - 1.0));
}

TEST_CASE("query shape errors") {
  const auto data = small_data(7);
  const auto fitted = fit(data.train, small_config());
  FeatureDataset fewer = data.test;
  fewer.views.pop_back();
  CHECK_THROWS_AS(project(fitted.model, fewer), Error);
  FeatureDataset narrow = data.test;
  narrow.views[0] = narrow.views[0].leftCols(2).eval();
  CHECK_THROWS_AS(project(fitted.model, narrow), Error);
}

TEST_CASE("precomputed Grams give the same model as the equivalent features") {
  const auto data = small_data(8);
  const auto fitted = fit(data.train, small_config());
  std::vector<GramMatrix> grams;
  for (const auto& g : fitted.train_grams) grams.push_back({g, {KernelKind::precomputed, 1.0, 0}});
  MklConfig c = small_config();
  c.kernel = KernelKind::precomputed;
  const auto pre = fit_precomputed(grams, c);
  CHECK((pre.model.lambda - fitted.model.lambda).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pre.model.mu - fitted.model.mu).cwiseAbs().maxCoeff() == 0.0);

  std::vector<Matrix> qg;
  std::vector<Vector> qd;
  query_grams(fitted.model, data.test, qg, qd);
  CHECK((project_grams(pre.model, qg, qd) - project(fitted.model, data.test).scores).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(project(pre.model, data.test), Error);
}

TEST_CASE("archive round trip is exact") {
  const auto dir = testing::scratch_dir("archive");
  const auto data = small_data(9);
  MklConfig c = small_config();
  c.theta = 2.5;
  c.temperature = 0.7;
  const auto fitted = fit(data.train, c);
  save_model(fitted.model, dir / "m.json");
  const auto back = load_model(dir / "m.json");

  CHECK(back.delta == fitted.model.delta);
  CHECK(back.mu == fitted.model.mu);
  CHECK(back.lambda == fitted.model.lambda);
  CHECK(back.train_memberships == fitted.model.train_memberships);
  CHECK(back.clusters.assignment == fitted.model.clusters.assignment);
  CHECK(back.clusters.mean_self_term == fitted.model.clusters.mean_self_term);
  CHECK(back.clusters.temperature == fitted.model.clusters.temperature);
  CHECK(back.config.theta == c.theta);
  CHECK(back.config.temperature == c.temperature);
  CHECK(back.config.q == c.q);
  CHECK(back.trace.objective == fitted.model.trace.objective);
  for (std::size_t g = 0; g < back.train_views.size(); ++g) {
    CHECK(back.train_views[g] == fitted.model.train_views[g]);
    CHECK(back.kernel_specs[g].width == fitted.model.kernel_specs[g].width);
  }
  const Vector a = project(fitted.model, data.test).scores;
  const Vector b = project(back, data.test).scores;
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

  // Saving the reloaded model reproduces the file byte for byte.
  save_model(back, dir / "m2.json");
  std::ifstream f1(dir / "m.json"), f2(dir / "m2.json");
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
}

TEST_CASE("archive errors") {
  const auto dir = testing::scratch_dir("archive_errors");
  const auto data = small_data(10);
  save_model(fit(data.train, small_config()).model, dir / "m.json");
  std::stringstream text;
  text << std::ifstream(dir / "m.json").rdbuf();
  const std::string s = text.str();

  std::ofstream(dir / "truncated.json") << s.substr(0, s.size() / 2);
  try {
    load_model(dir / "truncated.json");
    FAIL("truncated archive loaded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
  }

  std::string foreign = s;
  const auto at = foreign.find("nsmkl-v1");
  REQUIRE(at != std::string::npos);
  foreign.replace(at, 8, "nsmkl-v0");
  std::ofstream(dir / "foreign.json") << foreign;
  try {
    load_model(dir / "foreign.json");
    FAIL("foreign archive loaded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::version);
  }

  try {
    load_model(dir / "missing.json");
    FAIL("missing archive loaded");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::io);
  }
}

TEST_CASE("scoring is deterministic") {
  const auto data = small_data(11);
  const auto a = fit(data.train, small_config());
  const auto b = fit(data.train, small_config());
  CHECK(a.model.lambda == b.model.lambda);
  CHECK(project(a.model, data.test).scores == project(b.model, data.test).scores);
}
