#include "nsmkl/synth.hpp"

#include <cstdio>
#include <random>

#include "nsmkl/error.hpp"

namespace nsmkl {
namespace {

std::string sample_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%05d", prefix, i);
  return buf;
}

}  // namespace

SynthData make_locality_data(const LocalitySpec& spec) {
  require(spec.clusters >= 1 && spec.views >= spec.clusters, ErrorCode::invalid_argument,
          "need at least one cluster and one view per cluster");
  require(spec.dim >= 1 && spec.train_per_cluster >= 1 && spec.test_per_cluster >= 0 && spec.outliers >= 0,
          ErrorCode::invalid_argument, "sizes must be positive");
  require(spec.inlier_spread > 0.0 && spec.outlier_spread > 0.0, ErrorCode::invalid_argument,
          "spreads must be > 0");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<Vector> centers;
  for (int c = 0; c < spec.clusters; ++c) {
    Vector v(spec.dim);
    for (auto& x : v) x = normal(rng);
    centers.push_back(v * (spec.center_norm / v.norm()));
  }

  auto fill_noise = [&](Matrix& m, Index row) {
    for (Index j = 0; j < m.cols(); ++j) m(row, j) = normal(rng);
  };
  auto fill_near = [&](Matrix& m, Index row, const Vector& center, double spread) {
    for (Index j = 0; j < m.cols(); ++j) m(row, j) = center[j] + spread * normal(rng);
  };

  const int n_train = spec.clusters * spec.train_per_cluster;
  const int n_test = spec.clusters * spec.test_per_cluster + spec.outliers;
  SynthData out;
  out.train.views.assign(spec.views, Matrix(n_train, spec.dim));
  out.test.views.assign(spec.views, Matrix(n_test, spec.dim));

  auto inlier = [&](FeatureDataset& ds, Index row, int c) {
    for (int v = 0; v < spec.views; ++v) {
      if (v == c) {
        fill_near(ds.views[v], row, centers[c], spec.inlier_spread);
      } else {
        fill_noise(ds.views[v], row);
      }
    }
  };

  for (int i = 0; i < n_train; ++i) {
    const int c = i % spec.clusters;
    inlier(out.train, i, c);
    out.train.sample_ids.push_back(sample_id("tr", i));
    out.train_cluster.push_back(c);
  }

  std::vector<SampleLabel> labels;
  std::uniform_int_distribution<int> pick(0, spec.clusters - 1);
  for (int i = 0; i < n_test; ++i) {
    out.test.sample_ids.push_back(sample_id("te", i));
    if (i < spec.clusters * spec.test_per_cluster) {
      inlier(out.test, i, i % spec.clusters);
      labels.push_back({Label::target, ""});
      continue;
    }
    const int c = pick(rng);
    for (int v = 0; v < spec.views; ++v) {
      if (v == c) {
        fill_near(out.test.views[v], i, centers[c], spec.outlier_spread);
      } else {
        fill_noise(out.test.views[v], i);
      }
    }
    labels.push_back({Label::nontarget, "view" + std::to_string(c)});
  }
  out.test.labels = std::move(labels);
  return out;
}

}  // namespace nsmkl
