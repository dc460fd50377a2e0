#pragma once

#include <cstdint>
#include <vector>

#include "nsmkl/dataio.hpp"

namespace nsmkl {

/// Target class made of well-separated clusters in which a different feature view carries the
/// cluster structure (the other views are isotropic noise). Out-of-class queries are noise in
/// every view except one, where they sit near a cluster centre with a wider spread.
struct LocalitySpec {
  int clusters = 3;
  int views = 3;
  int dim = 8;
  int train_per_cluster = 30;
  int test_per_cluster = 20;
  int outliers = 60;
  double center_norm = 4.0;
  double inlier_spread = 0.3;
  double outlier_spread = 1.5;
  std::uint64_t seed = 0;
};

struct SynthData {
  FeatureDataset train;          // targets only
  FeatureDataset test;           // labelled targets and outliers
  std::vector<int> train_cluster;
};

SynthData make_locality_data(const LocalitySpec& spec);

}  // namespace nsmkl
