#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nsmkl/config.hpp"
#include "nsmkl/dataio.hpp"

namespace nsmkl {

/// Scores with ground truth. Non-target samples may carry an instrument tag.
struct EvalSet {
  std::vector<double> scores;
  std::vector<Label> labels;
  std::vector<std::string> instruments;  // empty, or one entry per sample
  // false when low scores indicate targets (e.g. distances).
  bool higher_is_target = true;

  std::size_t targets() const;
  std::size_t nontargets() const;
  /// Throws unless sizes agree, scores are finite and both classes are present.
  void validate() const;
};

EvalSet make_eval_set(const std::vector<double>& scores, const std::vector<SampleLabel>& labels);

/// Mann-Whitney AUC: P(target outscores non-target), ties counted 1/2.
double auc(const EvalSet& eval);

struct ErrorRates {
  double false_accept = 0.0;  // non-targets accepted
  double false_reject = 0.0;  // targets rejected
};

/// A sample is accepted as target iff its (orientation-adjusted) score >= threshold.
ErrorRates error_rates(const EvalSet& eval, double threshold);

/// Threshold where false-accept and false-reject rates cross, linearly interpolated between
/// adjacent candidate thresholds. Returned in the eval set's own score orientation.
double eer_threshold(const EvalSet& eval);

/// Half total error rate on `test` at the equal-error threshold of `dev`.
double hter(const EvalSet& dev, const EvalSet& test);

struct AcerReport {
  double bpcer = 0.0;
  std::map<std::string, double> apcer;  // per instrument
  double max_apcer = 0.0;
  double acer = 0.0;
};

/// BPCER, per-instrument APCER and ACER = (BPCER + max APCER) / 2 at a fixed threshold.
AcerReport acer(const EvalSet& eval, double threshold);

enum class SelectionMetric { auc, hter };

struct GridSpec {
  std::vector<double> delta_multipliers;  // delta = multiplier * n
  std::vector<double> p_values;
  std::vector<double> q_values;
  SelectionMetric metric = SelectionMetric::auc;

  /// {1e-3 .. 1e2} x n, p, q in {32/31, 16/15, 8/7, 4/3, 2, 4, 8, 10}.
  static GridSpec standard();
  std::size_t cell_count() const;
  void validate() const;
};

struct CellOutcome {
  double metric = 0.0;  // larger is better
  bool converged = true;
};

struct CellRecord {
  double delta = 0.0;
  double p = 0.0;
  double q = 0.0;
  std::optional<CellOutcome> outcome;
  std::string error;
};

struct GridResult {
  MklConfig best;
  double best_metric = 0.0;
  std::vector<CellRecord> cells;  // in (delta, p, q) lexicographic order
};

using CellEvaluator = std::function<CellOutcome(const MklConfig&)>;

/// Evaluates every cell (concurrently, up to thread_count()) and returns the converged cell with the
/// largest metric; ties go to the lexicographically smallest (delta, p, q). Throws Error(not_converged)
/// when no cell converged.
GridResult grid_search(const MklConfig& base, Index n, const GridSpec& grid, const CellEvaluator& evaluate);

/// Evaluator that fits on `train` and scores the labelled `dev` set (AUC, or 1 - HTER using dev for
/// both threshold and error).
CellEvaluator fit_and_score(const FeatureDataset& train, const FeatureDataset& dev, SelectionMetric metric);

struct ClassSplit {
  std::string pseudo_target;
  std::vector<Index> train;             // even-position samples of the pseudo-target class
  std::vector<Index> dev_targets;       // odd-position samples of the pseudo-target class
  std::vector<Index> dev_nontargets;    // every sample of the remaining non-target classes
};

/// Tuning splits that never touch `target`: each other class in turn plays the target.
std::vector<ClassSplit> leave_other_classes(const std::vector<std::string>& classes, const std::string& target);

}  // namespace nsmkl
