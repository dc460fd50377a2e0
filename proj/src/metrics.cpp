#include "nsmkl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "nsmkl/error.hpp"
#include "nsmkl/model.hpp"
#include "nsmkl/parallel.hpp"

namespace nsmkl {
namespace {

// Scores flipped so that larger always means "more target-like".
std::vector<double> oriented(const EvalSet& eval) {
  std::vector<double> s = eval.scores;
  if (!eval.higher_is_target) {
    for (double& x : s) x = -x;
  }
  return s;
}

double orient(const EvalSet& eval, double threshold) { return eval.higher_is_target ? threshold : -threshold; }

ErrorRates oriented_rates(const std::vector<double>& s, const std::vector<Label>& labels, double t) {
  double fa = 0.0, fr = 0.0, nt = 0.0, tg = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool accept = s[i] >= t;
    if (labels[i] == Label::target) {
      tg += 1.0;
      if (!accept) fr += 1.0;
    } else {
      nt += 1.0;
      if (accept) fa += 1.0;
    }
  }
  return {nt > 0.0 ? fa / nt : 0.0, tg > 0.0 ? fr / tg : 0.0};
}

double oriented_eer_threshold(const std::vector<double>& s, const std::vector<Label>& labels) {
  std::vector<double> candidates = s;
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  candidates.push_back(std::nextafter(candidates.back(), std::numeric_limits<double>::infinity()));

  double prev_t = candidates.front();
  double prev_d = 0.0;
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const auto r = oriented_rates(s, labels, candidates[k]);
    const double d = r.false_reject - r.false_accept;
    if (d >= 0.0) {
      if (d == 0.0 || k == 0) return candidates[k];
      return prev_t + (candidates[k] - prev_t) * (-prev_d) / (d - prev_d);
    }
    prev_t = candidates[k];
    prev_d = d;
  }
  return candidates.back();
}

}  // namespace

std::size_t EvalSet::targets() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::target));
}

std::size_t EvalSet::nontargets() const { return labels.size() - targets(); }

void EvalSet::validate() const {
  require(scores.size() == labels.size(), ErrorCode::shape, "score and label counts differ");
  require(instruments.empty() || instruments.size() == labels.size(), ErrorCode::shape,
          "instrument tags must be absent or one per sample");
  for (double s : scores) require(std::isfinite(s), ErrorCode::invalid_argument, "scores must be finite");
  require(targets() > 0 && nontargets() > 0, ErrorCode::invalid_argument,
          "evaluation needs at least one target and one non-target sample");
}

EvalSet make_eval_set(const std::vector<double>& scores, const std::vector<SampleLabel>& labels) {
  EvalSet e;
  e.scores = scores;
  for (const auto& l : labels) {
    e.labels.push_back(l.label);
    e.instruments.push_back(l.instrument);
  }
  return e;
}

double auc(const EvalSet& eval) {
  eval.validate();
  const auto s = oriented(eval);
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });

  // Mid-ranks for ties; the target rank sum gives the Mann-Whitney count.
  double target_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && s[order[j + 1]] == s[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (eval.labels[order[k]] == Label::target) target_rank_sum += rank;
    }
    i = j + 1;
  }
  const double t = static_cast<double>(eval.targets());
  const double n = static_cast<double>(eval.nontargets());
  return (target_rank_sum - t * (t + 1.0) / 2.0) / (t * n);
}

ErrorRates error_rates(const EvalSet& eval, double threshold) {
  eval.validate();
  return oriented_rates(oriented(eval), eval.labels, orient(eval, threshold));
}

double eer_threshold(const EvalSet& eval) {
  eval.validate();
  return orient(eval, oriented_eer_threshold(oriented(eval), eval.labels));
}

double hter(const EvalSet& dev, const EvalSet& test) {
  require(dev.higher_is_target == test.higher_is_target, ErrorCode::invalid_argument,
          "dev and test score orientations differ");
  const double t = eer_threshold(dev);
  const auto r = error_rates(test, t);
  return 0.5 * (r.false_accept + r.false_reject);
}

AcerReport acer(const EvalSet& eval, double threshold) {
  eval.validate();
  require(!eval.instruments.empty(), ErrorCode::invalid_argument, "ACER needs instrument tags on non-targets");
  const auto s = oriented(eval);
  const double t = orient(eval, threshold);
  std::map<std::string, std::pair<double, double>> attacks;  // accepted, total
  double rejected = 0.0;
  double bona_fide = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool accept = s[i] >= t;
    if (eval.labels[i] == Label::target) {
      bona_fide += 1.0;
      if (!accept) rejected += 1.0;
    } else {
      require(!eval.instruments[i].empty(), ErrorCode::invalid_argument,
              "non-target sample " + std::to_string(i) + " has no instrument tag");
      auto& [accepted, total] = attacks[eval.instruments[i]];
      total += 1.0;
      if (accept) accepted += 1.0;
    }
  }
  AcerReport r;
  r.bpcer = rejected / bona_fide;
  for (const auto& [name, counts] : attacks) {
    const double apcer = counts.first / counts.second;
    r.apcer[name] = apcer;
    r.max_apcer = std::max(r.max_apcer, apcer);
  }
  r.acer = 0.5 * (r.bpcer + r.max_apcer);
  return r;
}

GridSpec GridSpec::standard() {
  GridSpec g;
  g.delta_multipliers = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};
  g.p_values = {32.0 / 31.0, 16.0 / 15.0, 8.0 / 7.0, 4.0 / 3.0, 2.0, 4.0, 8.0, 10.0};
  g.q_values = g.p_values;
  return g;
}

std::size_t GridSpec::cell_count() const { return delta_multipliers.size() * p_values.size() * q_values.size(); }

void GridSpec::validate() const {
  require(!delta_multipliers.empty() && !p_values.empty() && !q_values.empty(), ErrorCode::invalid_argument,
          "every grid axis needs at least one value");
  for (double d : delta_multipliers) require(d > 0.0, ErrorCode::invalid_argument, "delta multipliers must be > 0");
  for (double p : p_values) require(p >= 1.0, ErrorCode::invalid_argument, "p values must be >= 1");
  for (double q : q_values) require(q >= 1.0, ErrorCode::invalid_argument, "q values must be >= 1");
}

GridResult grid_search(const MklConfig& base, Index n, const GridSpec& grid, const CellEvaluator& evaluate) {
  grid.validate();
  require(n >= 1, ErrorCode::invalid_argument, "sample count must be >= 1");
  GridResult result;
  for (double d : grid.delta_multipliers) {
    for (double p : grid.p_values) {
      for (double q : grid.q_values) result.cells.push_back({d * static_cast<double>(n), p, q, std::nullopt, {}});
    }
  }
  std::sort(result.cells.begin(), result.cells.end(), [](const CellRecord& a, const CellRecord& b) {
    return std::tie(a.delta, a.p, a.q) < std::tie(b.delta, b.p, b.q);
  });

  auto config_for = [&](const CellRecord& cell) {
    MklConfig c = base;
    c.delta = cell.delta;
    c.theta.reset();
    c.p = cell.p;
    c.q = cell.q;
    return c;
  };

  parallel_for(0, result.cells.size(), [&](std::size_t i) {
    auto& cell = result.cells[i];
    try {
      cell.outcome = evaluate(config_for(cell));
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  const CellRecord* best = nullptr;
  for (const auto& cell : result.cells) {
    if (!cell.outcome || !cell.outcome->converged || !std::isfinite(cell.outcome->metric)) continue;
    if (best == nullptr || cell.outcome->metric > best->outcome->metric) best = &cell;
  }
  if (best == nullptr) {
    std::ostringstream msg;
    msg << "no grid cell converged:";
    for (const auto& cell : result.cells) {
      msg << " [delta=" << cell.delta << " p=" << cell.p << " q=" << cell.q << ": "
          << (cell.error.empty() ? "not converged" : cell.error) << "]";
    }
    fail(ErrorCode::not_converged, msg.str());
  }
  result.best = config_for(*best);
  result.best_metric = best->outcome->metric;
  return result;
}

CellEvaluator fit_and_score(const FeatureDataset& train, const FeatureDataset& dev, SelectionMetric metric) {
  require(dev.labels.has_value(), ErrorCode::invalid_argument, "the dev set needs labels");
  return [train, dev, metric](const MklConfig& config) {
    const auto fitted = fit(train, config);
    const auto report = project(fitted.model, dev);
    const EvalSet eval = make_eval_set(std::vector<double>(report.scores.begin(), report.scores.end()), *dev.labels);
    CellOutcome out;
    out.converged = fitted.model.trace.converged;
    out.metric = metric == SelectionMetric::auc ? auc(eval) : 1.0 - hter(eval, eval);
    return out;
  };
}

std::vector<ClassSplit> leave_other_classes(const std::vector<std::string>& classes, const std::string& target) {
  std::vector<std::string> order;
  for (const auto& c : classes) {
    if (c != target && std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);
  }
  require(order.size() >= 2, ErrorCode::invalid_argument,
          "tuning on other classes needs at least two classes besides the target");
  std::vector<ClassSplit> splits;
  for (const auto& pseudo : order) {
    ClassSplit split;
    split.pseudo_target = pseudo;
    std::size_t position = 0;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == pseudo) {
        (position++ % 2 == 0 ? split.train : split.dev_targets).push_back(static_cast<Index>(i));
      } else if (classes[i] != target) {
        split.dev_nontargets.push_back(static_cast<Index>(i));
      }
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

}  // namespace nsmkl
