#include "nsmkl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nsmkl/dataio.hpp"
#include "nsmkl/error.hpp"
#include "nsmkl/parallel.hpp"
#include "nsmkl/simd.hpp"

namespace nsmkl {
namespace {

std::span<const double> row_span(const Matrix& m, Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

double kernel_value(const KernelSpec& spec, std::span<const double> a, std::span<const double> b) {
  switch (spec.kind) {
    case KernelKind::rbf: return std::exp(-simd::squared_distance(a, b) / (2.0 * spec.width * spec.width));
    case KernelKind::linear: return simd::dot(a, b);
    case KernelKind::precomputed: break;
  }
  fail(ErrorCode::invalid_argument, "precomputed kernels cannot be evaluated from features");
}

void check_norm_order(double p, const char* name) {
  require(std::isfinite(p) && p >= 1.0, ErrorCode::invalid_argument, std::string(name) + " must be >= 1");
}

}  // namespace

void KernelSpec::validate() const {
  if (kind == KernelKind::rbf) {
    require(std::isfinite(width) && width > 0.0, ErrorCode::invalid_argument, "rbf width must be > 0");
  }
  require(view_index >= 0, ErrorCode::invalid_argument, "view index must be >= 0");
}

double rbf_width(const Matrix& view) {
  const Index n = view.rows();
  require(n >= 2, ErrorCode::invalid_argument, "rbf width needs at least two points");
  // Row sums are accumulated per row then combined in row order, independent of thread count.
  std::vector<double> row_sums(static_cast<std::size_t>(n), 0.0);
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t i) {
    double s = 0.0;
    for (Index j = static_cast<Index>(i) + 1; j < n; ++j) {
      s += std::sqrt(simd::squared_distance(row_span(view, static_cast<Index>(i)), row_span(view, j)));
    }
    row_sums[i] = s;
  });
  double total = 0.0;
  for (double s : row_sums) total += s;
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double width = 0.5 * total / pairs;
  require(width > 0.0, ErrorCode::degenerate, "degenerate rbf width: all points coincide");
  return width;
}

GramMatrix gram(const Matrix& a, const Matrix& b, const KernelSpec& spec) {
  spec.validate();
  require(a.cols() == b.cols(), ErrorCode::shape,
          "dimension mismatch: " + std::to_string(a.cols()) + " vs " + std::to_string(b.cols()));
  GramMatrix out{Matrix(a.rows(), b.rows()), spec};
  parallel_for(0, static_cast<std::size_t>(a.rows()), [&](std::size_t i) {
    const auto ai = row_span(a, static_cast<Index>(i));
    for (Index j = 0; j < b.rows(); ++j) out.values(static_cast<Index>(i), j) = kernel_value(spec, ai, row_span(b, j));
  });
  return out;
}

GramMatrix gram(const Matrix& x, const KernelSpec& spec) {
  spec.validate();
  const Index n = x.rows();
  GramMatrix out{Matrix(n, n), spec};
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t ii) {
    const Index i = static_cast<Index>(ii);
    const auto xi = row_span(x, i);
    out.values(i, i) = spec.kind == KernelKind::rbf ? 1.0 : kernel_value(spec, xi, xi);
    for (Index j = i + 1; j < n; ++j) {
      const double v = kernel_value(spec, xi, row_span(x, j));
      out.values(i, j) = v;
      out.values(j, i) = v;
    }
  });
  return out;
}

Vector gram_diagonal(const Matrix& y, const KernelSpec& spec) {
  spec.validate();
  Vector d(y.rows());
  for (Index i = 0; i < y.rows(); ++i) {
    d(i) = spec.kind == KernelKind::rbf ? 1.0 : kernel_value(spec, row_span(y, i), row_span(y, i));
  }
  return d;
}

PsdReport check_psd(const Matrix& k) {
  require(k.rows() == k.cols(), ErrorCode::shape, "Gram matrix must be square");
  PsdReport report;
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  report.asymmetry = (k - k.transpose()).cwiseAbs().maxCoeff();
  report.symmetric = report.asymmetry <= 1e-12 * scale;
  const Eigen::MatrixXd sym = 0.5 * (k + k.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  require(eig.info() == Eigen::Success, ErrorCode::internal, "eigenvalue computation failed");
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.max_eigenvalue = eig.eigenvalues().maxCoeff();
  report.psd = report.min_eigenvalue >= -1e-8 * std::max(std::abs(report.max_eigenvalue), 1e-300);
  return report;
}

GramMatrix load_precomputed_gram(const std::filesystem::path& path, int view_index, std::vector<std::string>* ids) {
  auto table = read_id_table(path);
  require(table.values.rows() == table.values.cols(), ErrorCode::shape,
          "precomputed Gram '" + path.string() + "' is not square");
  const auto report = check_psd(table.values);
  require(report.symmetric, ErrorCode::invalid_argument, "precomputed Gram '" + path.string() + "' is not symmetric");
  require(report.psd, ErrorCode::invalid_argument,
          "precomputed Gram '" + path.string() + "' is not positive semi-definite (min eigenvalue " +
              format_double(report.min_eigenvalue) + ")");
  if (ids != nullptr) *ids = table.ids;
  return {std::move(table.values), KernelSpec{KernelKind::precomputed, 1.0, view_index}};
}

double lp_norm(std::span<const double> v, double p) {
  check_norm_order(p, "p");
  double largest = 0.0;
  for (double x : v) {
    require(x >= 0.0, ErrorCode::invalid_argument, "norm argument has a negative entry");
    largest = std::max(largest, x);
  }
  if (largest == 0.0) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += std::pow(x / largest, p);
  return largest * std::pow(acc, 1.0 / p);
}

double lpq_matrix_norm(const Matrix& m, double p, double q) {
  check_norm_order(p, "p");
  check_norm_order(q, "q");
  const double largest = m.cwiseAbs().maxCoeff();
  if (largest == 0.0) return 0.0;
  double outer = 0.0;
  for (Index s = 0; s < m.cols(); ++s) {
    double inner = 0.0;
    for (Index t = 0; t < m.rows(); ++t) inner += std::pow(std::abs(m(t, s)) / largest, p);
    outer += std::pow(inner, q / p);
  }
  return largest * std::pow(outer, 1.0 / q);
}

double lpq_matrix_norm_of_outer(std::span<const double> v, double p, double q) {
  return lp_norm(v, p) * lp_norm(v, q);
}

LocalisedKernelStack::LocalisedKernelStack(std::span<const Matrix> grams, const Matrix& memberships)
    : clusters_(memberships.cols()), kernels_(static_cast<Index>(grams.size())), n_(memberships.rows()),
      memberships_(memberships) {
  require(kernels_ >= 1, ErrorCode::shape, "stack needs at least one kernel");
  require(clusters_ >= 1 && n_ >= 1, ErrorCode::shape, "memberships must be n x C with n, C >= 1");
  for (const auto& k : grams) {
    require(k.rows() == n_ && k.cols() == n_, ErrorCode::shape,
            "Gram is " + std::to_string(k.rows()) + "x" + std::to_string(k.cols()) + ", expected " +
                std::to_string(n_) + "x" + std::to_string(n_));
  }
  for (Index i = 0; i < n_; ++i) {
    require(memberships.row(i).allFinite(), ErrorCode::invalid_argument, "non-finite membership");
    require(memberships.row(i).minCoeff() >= 0.0 && memberships.row(i).maxCoeff() <= 1.0,
            ErrorCode::invalid_argument, "memberships must lie in [0, 1]");
    require(std::abs(memberships.row(i).sum() - 1.0) <= 1e-9, ErrorCode::invalid_argument,
            "membership row " + std::to_string(i) + " does not sum to 1");
  }

  matrices_.resize(static_cast<std::size_t>(clusters_ * kernels_));
  parallel_for(0, matrices_.size(), [&](std::size_t flat) {
    const Index c = static_cast<Index>(flat) / kernels_;
    const Index g = static_cast<Index>(flat) % kernels_;
    const Matrix& k = grams[static_cast<std::size_t>(g)];
    Matrix out(n_, n_);
    for (Index i = 0; i < n_; ++i) {
      const double pi = memberships_(i, c);
      for (Index j = 0; j < n_; ++j) out(i, j) = pi * k(i, j) * memberships_(j, c);
    }
    matrices_[flat] = std::move(out);
  });
}

Matrix LocalisedKernelStack::combine(std::span<const double> weights) const {
  require(static_cast<Index>(weights.size()) == weight_count(), ErrorCode::shape, "weight count mismatch");
  Matrix out = Matrix::Zero(n_, n_);
  const auto len = static_cast<std::size_t>(n_ * n_);
  for (std::size_t k = 0; k < matrices_.size(); ++k) {
    if (weights[k] == 0.0) continue;
    simd::axpy(weights[k], {matrices_[k].data(), len}, {out.data(), len});
  }
  return out;
}

}  // namespace nsmkl
