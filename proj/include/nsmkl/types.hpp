#pragma once

#include <Eigen/Dense>

#include <cstddef>

namespace nsmkl {

// Row-major so that each sample (and each Gram row) is contiguous for the SIMD kernels.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Index = Eigen::Index;

}  // namespace nsmkl
