#include "nsmkl/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <map>
#include <numeric>
#include <optional>

#include "nsmkl/archive.hpp"
#include "nsmkl/clustering.hpp"
#include "nsmkl/dataio.hpp"
#include "nsmkl/error.hpp"
#include "nsmkl/json_io.hpp"
#include "nsmkl/kernels.hpp"
#include "nsmkl/metrics.hpp"
#include "nsmkl/model.hpp"
#include "nsmkl/parallel.hpp"
#include "nsmkl/simd.hpp"
#include "nsmkl/synth.hpp"
#include "nsmkl/theory.hpp"

namespace nsmkl::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr std::string_view kManifestFormat = "nsmkl-manifest-v1";

// Bookkeeping for the run manifest of a single command.
struct RunLog {
  std::vector<std::string> argv;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  json config = nullptr;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, double>> timings;
  std::string manifest_path;

  void input(const std::string& p) { inputs.push_back(p); }
  void input(const std::vector<std::string>& ps) { inputs.insert(inputs.end(), ps.begin(), ps.end()); }
  void output(const std::string& p) { outputs.push_back(p); }
  void default_manifest(const std::string& primary) {
    if (manifest_path.empty()) manifest_path = primary + ".manifest.json";
  }
};

class Stopwatch {
 public:
  Stopwatch(RunLog& log, std::string stage) : log_(log), stage_(std::move(stage)), start_(Clock::now()) {}
  ~Stopwatch() {
    const std::chrono::duration<double> d = Clock::now() - start_;
    log_.timings.emplace_back(stage_, d.count());
  }

 private:
  RunLog& log_;
  std::string stage_;
  Clock::time_point start_;
};

json digests(const std::vector<std::string>& paths) {
  json arr = json::array();
  for (const auto& p : paths) arr.push_back({{"path", p}, {"fnv1a64", file_digest(p)}});
  return arr;
}

void write_manifest(const RunLog& log, const std::string& command) {
  if (log.manifest_path.empty()) return;
  json timings = json::object();
  for (const auto& [stage, seconds] : log.timings) timings[stage] = seconds;
  const json m{{"format", kManifestFormat},
               {"command", command},
               {"argv", log.argv},
               {"cwd", fs::current_path().string()},
               {"config", log.config},
               {"seed", log.seed ? json(*log.seed) : json(nullptr)},
               {"inputs", digests(log.inputs)},
               {"outputs", digests(log.outputs)},
               {"threads", thread_count()},
               {"simd", simd::active().name},
               {"timings_seconds", timings}};
  std::ofstream out(log.manifest_path);
  require(out.good(), ErrorCode::io, "cannot write manifest '" + log.manifest_path + "'");
  out << m.dump(1) << '\n';
}

void write_json(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(1) << '\n';
    return;
  }
  std::ofstream f(path);
  require(f.good(), ErrorCode::io, "cannot write '" + path + "'");
  f << j.dump(1) << '\n';
  require(f.good(), ErrorCode::io, "write failed for '" + path + "'");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "'" + path + "' is not valid JSON: " + e.what());
  }
}

// Model-config flags shared by cluster, train and tune. A JSON config file supplies the base and any
// flag given on the command line wins.
struct ConfigFlags {
  std::string file;
  double p = 0, q = 0, delta = 0, theta = 0, tol = 0, floor = 0, temperature = 0;
  int clusters = 0, max_iter = 0, restarts = 0;
  std::uint64_t seed = 0;
  std::string regime, kernel, score_mode;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app) {
    opts["config"] = app->add_option("--config", file, "JSON model configuration (flags override it)");
    opts["p"] = app->add_option("--p", p, "inner norm exponent (>= 1)");
    opts["q"] = app->add_option("--q", q, "outer norm exponent (>= 1)");
    opts["delta"] = app->add_option("--delta", delta, "regularisation delta (> 0)");
    opts["theta"] = app->add_option("--theta", theta, "set delta = n / theta");
    opts["delta"]->excludes(opts["theta"]);
    opts["clusters"] = app->add_option("--clusters", clusters, "number of kernel k-means clusters");
    opts["regime"] = app->add_option("--regime", regime, "weight regularisation regime")
                         ->check(CLI::IsMember({"joint-matrix", "joint-vector", "disjoint-vector", "disjoint-matrix",
                                                "non-localised", "single-kernel"}));
    opts["tol"] = app->add_option("--tol", tol, "relative lambda change that stops the alternation");
    opts["max-iter"] = app->add_option("--max-iter", max_iter, "iteration cap of the alternation");
    opts["seed"] = app->add_option("--seed", seed, "random seed (k-means seeding)");
    opts["kernel"] = app->add_option("--kernel", kernel, "base kernel for feature views")
                         ->check(CLI::IsMember({"rbf", "linear"}));
    opts["temperature"] = app->add_option("--temperature", temperature, "membership softmax temperature");
    opts["restarts"] = app->add_option("--restarts", restarts, "k-means restarts");
    opts["weight-floor"] = app->add_option("--weight-floor", floor, "smallest kernel weight kept");
    opts["score-mode"] = app->add_option("--score-mode", score_mode, "raw or one-distance")
                             ->check(CLI::IsMember({"raw", "one-distance"}));
  }

  bool given(const char* name) const { return opts.at(name)->count() > 0; }

  MklConfig resolve() const {
    MklConfig c;
    if (given("config")) c = config_from_json(read_json(file));
    if (given("p")) c.p = p;
    if (given("q")) c.q = q;
    if (given("delta")) {
      c.delta = delta;
      c.theta.reset();
    }
    if (given("theta")) c.theta = theta;
    if (given("clusters")) c.clusters = clusters;
    if (given("regime")) c.regime = parse_regime(regime);
    if (given("tol")) c.tol = tol;
    if (given("max-iter")) c.max_iter = max_iter;
    if (given("seed")) c.rng_seed = seed;
    if (given("kernel")) c.kernel = parse_kernel_kind(kernel);
    if (given("temperature")) c.temperature = temperature;
    if (given("restarts")) c.kmeans_restarts = restarts;
    if (given("weight-floor")) c.weight_floor = floor;
    if (given("score-mode")) c.score_mode = parse_score_mode(score_mode);
    return c;
  }
};

struct GramSet {
  std::vector<std::string> ids;
  std::vector<GramMatrix> grams;
};

GramSet load_training_grams(const std::vector<std::string>& paths) {
  GramSet s;
  for (std::size_t g = 0; g < paths.size(); ++g) {
    std::vector<std::string> ids;
    s.grams.push_back(load_precomputed_gram(paths[g], static_cast<int>(g), &ids));
    if (g == 0) {
      s.ids = std::move(ids);
    } else {
      require(ids == s.ids, ErrorCode::shape, "Gram '" + paths[g] + "' lists different sample ids");
    }
  }
  return s;
}

// Query Gram rows: sample_id, kappa(y, y), kappa(y, x_1) ... kappa(y, x_n).
void load_query_grams(const std::vector<std::string>& paths, Index n, std::vector<std::string>& ids,
                      std::vector<Matrix>& grams, std::vector<Vector>& diagonals) {
  for (std::size_t g = 0; g < paths.size(); ++g) {
    IdTable t = read_id_table(paths[g]);
    require(t.values.cols() == n + 1, ErrorCode::shape,
            "query Gram '" + paths[g] + "' needs " + std::to_string(n + 1) + " values per row (self term, then " +
                std::to_string(n) + " training columns)");
    if (g == 0) {
      ids = t.ids;
    } else {
      require(t.ids == ids, ErrorCode::shape, "query Gram '" + paths[g] + "' lists different sample ids");
    }
    diagonals.push_back(t.values.col(0));
    grams.push_back(t.values.rightCols(n));
  }
}

FeatureDataset load_targets(const std::vector<std::string>& views, const std::string& labels) {
  std::vector<fs::path> paths(views.begin(), views.end());
  FeatureDataset ds = load_dataset(paths, labels.empty() ? std::nullopt : std::optional<fs::path>(labels));
  if (!ds.labels) return ds;
  std::vector<Index> keep;
  for (Index i = 0; i < ds.size(); ++i) {
    if ((*ds.labels)[static_cast<std::size_t>(i)].label == Label::target) keep.push_back(i);
  }
  require(!keep.empty(), ErrorCode::invalid_argument, "no target samples to train on");
  FeatureDataset t = ds.subset(keep);
  t.labels.reset();
  return t;
}

std::vector<double> read_scores(const std::string& path, std::vector<std::string>& ids) {
  IdTable t = read_id_table(path);
  require(t.values.cols() >= 1, ErrorCode::shape, "score file '" + path + "' has no score column");
  ids = t.ids;
  return std::vector<double>(t.values.col(0).begin(), t.values.col(0).end());
}

void write_scores(const std::string& path, const ScoreReport& report, std::optional<double> threshold) {
  Matrix values(static_cast<Index>(report.sample_ids.size()), threshold ? 2 : 1);
  values.col(0) = report.scores;
  std::vector<std::string> header{"score"};
  if (threshold) {
    header.push_back("decision");
    for (Index i = 0; i < values.rows(); ++i) values(i, 1) = report.scores[i] >= *threshold ? 1.0 : 0.0;
  }
  write_id_table(path, report.sample_ids, header, values);
}

std::vector<std::string> numbered(const char* stem, Index count) {
  std::vector<std::string> out;
  for (Index i = 0; i < count; ++i) out.push_back(stem + std::to_string(i));
  return out;
}

// ---------------------------------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  LocalitySpec spec;
};

void run_synth(const SynthArgs& a, RunLog& log, std::ostream& out) {
  log.seed = a.spec.seed;
  log.config = {{"clusters", a.spec.clusters},
                {"views", a.spec.views},
                {"dim", a.spec.dim},
                {"train_per_cluster", a.spec.train_per_cluster},
                {"test_per_cluster", a.spec.test_per_cluster},
                {"outliers", a.spec.outliers},
                {"seed", a.spec.seed}};
  SynthData data;
  {
    Stopwatch w(log, "generate");
    data = make_locality_data(a.spec);
  }
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  const auto header = numbered("f", a.spec.dim);
  for (int v = 0; v < a.spec.views; ++v) {
    const std::string tr = (dir / ("train_view" + std::to_string(v) + ".csv")).string();
    const std::string te = (dir / ("test_view" + std::to_string(v) + ".csv")).string();
    write_id_table(tr, data.train.sample_ids, header, data.train.views[static_cast<std::size_t>(v)]);
    write_id_table(te, data.test.sample_ids, header, data.test.views[static_cast<std::size_t>(v)]);
    log.output(tr);
    log.output(te);
  }
  const std::string labels = (dir / "test_labels.csv").string();
  write_labels(labels, data.test.sample_ids, *data.test.labels);
  log.output(labels);
  Matrix clusters(data.train.size(), 1);
  for (Index i = 0; i < clusters.rows(); ++i) clusters(i, 0) = data.train_cluster[static_cast<std::size_t>(i)];
  const std::string cl = (dir / "train_clusters.csv").string();
  const std::vector<std::string> cl_header{"cluster"};
  write_id_table(cl, data.train.sample_ids, cl_header, clusters);
  log.output(cl);
  log.default_manifest((dir / "synth").string());
  out << json{{"train", data.train.size()}, {"test", data.test.size()}, {"directory", dir.string()}}.dump() << '\n';
}

struct ClusterArgs {
  ConfigFlags flags;
  std::vector<std::string> views, grams;
  std::string out;
};

void run_cluster(const ClusterArgs& a, RunLog& log, std::ostream& out) {
  MklConfig config = a.flags.resolve();
  config.validate();
  log.config = config_to_json(config);
  log.seed = config.rng_seed;
  log.input(a.views);
  log.input(a.grams);

  std::vector<std::string> ids;
  std::vector<Matrix> grams;
  {
    Stopwatch w(log, "kernels");
    if (!a.grams.empty()) {
      GramSet s = load_training_grams(a.grams);
      ids = s.ids;
      for (auto& g : s.grams) grams.push_back(std::move(g.values));
    } else {
      FeatureDataset ds = load_targets(a.views, "");
      ids = ds.sample_ids;
      for (const auto& v : ds.views) {
        KernelSpec spec{config.kernel, 1.0, 0};
        if (spec.kind == KernelKind::rbf) spec.width = rbf_width(v);
        grams.push_back(gram(v, spec).values);
      }
    }
  }
  ClusterModel model;
  Matrix p;
  {
    Stopwatch w(log, "kmeans");
    const Matrix avg = average_gram(grams);
    model = kernel_kmeans(avg, {config.clusters, config.rng_seed, config.kmeans_restarts, 100});
    const Vector diag = avg.diagonal();
    const std::span<const double> d(diag.data(), static_cast<std::size_t>(diag.size()));
    p = config.temperature ? memberships(model, avg, d, *config.temperature) : memberships(model, avg, d);
  }
  Matrix values(p.rows(), p.cols() + 1);
  for (Index i = 0; i < p.rows(); ++i) values(i, 0) = model.assignment[static_cast<std::size_t>(i)];
  values.rightCols(p.cols()) = p;
  std::vector<std::string> header{"cluster"};
  for (const auto& h : numbered("p", p.cols())) header.push_back(h);
  write_id_table(a.out, ids, header, values);
  log.output(a.out);
  log.default_manifest(a.out);
  out << json{{"clusters", model.clusters},
              {"objective", model.objective},
              {"temperature", config.temperature.value_or(model.temperature)},
              {"cluster_sizes", model.cluster_sizes}}
             .dump()
      << '\n';
}

struct TrainArgs {
  ConfigFlags flags;
  std::vector<std::string> views, grams;
  std::string labels, out, trace;
  std::string on_nonconvergence = "warn";
};

void run_train(const TrainArgs& a, RunLog& log, std::ostream& out, std::ostream& err) {
  MklConfig config = a.flags.resolve();
  if (!a.grams.empty()) config.kernel = KernelKind::precomputed;
  config.validate();
  log.config = config_to_json(config);
  log.seed = config.rng_seed;
  log.input(a.views);
  log.input(a.grams);
  if (!a.labels.empty()) log.input(a.labels);

  FitResult fitted;
  {
    Stopwatch w(log, "fit");
    if (!a.grams.empty()) {
      require(a.labels.empty(), ErrorCode::invalid_argument, "--labels filtering is not supported with --gram inputs");
      const GramSet s = load_training_grams(a.grams);
      fitted = fit_precomputed(s.grams, config);
    } else {
      fitted = fit(load_targets(a.views, a.labels), config);
    }
  }
  const auto& trace = fitted.model.trace;
  if (!trace.converged) {
    const std::string msg = "alternation stopped after " + std::to_string(trace.iterations) +
                            " iterations with relative lambda change " + format_double(trace.lambda_change.empty() ? 0.0 : trace.lambda_change.back());
    if (a.on_nonconvergence == "fail") fail(ErrorCode::not_converged, msg);
    err << json{{"warning", {{"code", "not_converged"}, {"message", msg}}}}.dump() << '\n';
  }
  save_model(fitted.model, a.out);
  log.output(a.out);
  const std::string trace_path = a.trace.empty() ? a.out + ".trace.json" : a.trace;
  json tj = trace_to_json(trace);
  tj["delta"] = fitted.model.delta;
  tj["mu"] = std::vector<double>(fitted.model.mu.begin(), fitted.model.mu.end());
  write_json(tj, trace_path, out);
  log.output(trace_path);
  log.default_manifest(a.out);
  out << json{{"model", a.out},
              {"converged", trace.converged},
              {"iterations", trace.iterations},
              {"objective", trace.objective.empty() ? 0.0 : trace.objective.back()}}
             .dump()
      << '\n';
}

struct ScoreArgs {
  std::string model, out, score_mode;
  std::vector<std::string> views, grams;
  double threshold = 0.0;
  CLI::Option* threshold_opt = nullptr;
};

void run_score(const ScoreArgs& a, RunLog& log, std::ostream& out) {
  log.input(a.model);
  log.input(a.views);
  log.input(a.grams);
  TrainedModel model = load_model(a.model);
  if (!a.score_mode.empty()) model.config.score_mode = parse_score_mode(a.score_mode);
  log.config = config_to_json(model.config);
  log.seed = model.config.rng_seed;

  ScoreReport report;
  {
    Stopwatch w(log, "score");
    if (!a.grams.empty()) {
      std::vector<Matrix> grams;
      std::vector<Vector> diagonals;
      load_query_grams(a.grams, model.size(), report.sample_ids, grams, diagonals);
      report.scores = project_grams(model, grams, diagonals);
    } else {
      std::vector<fs::path> paths(a.views.begin(), a.views.end());
      report = project(model, load_dataset(paths));
    }
  }
  std::optional<double> threshold;
  if (a.threshold_opt->count() > 0) threshold = a.threshold;
  write_scores(a.out, report, threshold);
  log.output(a.out);
  log.default_manifest(a.out);
  out << json{{"scores", a.out}, {"count", report.sample_ids.size()}}.dump() << '\n';
}

struct EvalArgs {
  std::string scores, labels, dev_scores, dev_labels, out, csv;
  bool lower_is_target = false;
  double threshold = 0.0;
  CLI::Option* threshold_opt = nullptr;
};

EvalSet load_eval(const std::string& scores, const std::string& labels, bool lower_is_target) {
  std::vector<std::string> ids;
  const auto s = read_scores(scores, ids);
  EvalSet e = make_eval_set(s, load_labels(labels, ids));
  e.higher_is_target = !lower_is_target;
  return e;
}

void run_eval(const EvalArgs& a, RunLog& log, std::ostream& out) {
  log.input({a.scores, a.labels});
  const EvalSet test = load_eval(a.scores, a.labels, a.lower_is_target);
  std::optional<EvalSet> dev;
  if (!a.dev_scores.empty()) {
    require(!a.dev_labels.empty(), ErrorCode::invalid_argument, "--dev-scores needs --dev-labels");
    log.input({a.dev_scores, a.dev_labels});
    dev = load_eval(a.dev_scores, a.dev_labels, a.lower_is_target);
  }
  const EvalSet& calib = dev ? *dev : test;
  const double eer_t = eer_threshold(calib);
  const double t = a.threshold_opt->count() > 0 ? a.threshold : eer_t;
  const auto rates = error_rates(test, t);

  json report{{"targets", test.targets()},
              {"nontargets", test.nontargets()},
              {"auc", auc(test)},
              {"eer_threshold", eer_t},
              {"threshold_source", a.threshold_opt->count() > 0 ? "flag" : (dev ? "dev" : "test")},
              {"threshold", t},
              {"hter", 0.5 * (rates.false_accept + rates.false_reject)},
              {"far", rates.false_accept},
              {"frr", rates.false_reject}};
  bool tagged = false;
  for (std::size_t i = 0; i < test.labels.size(); ++i) {
    if (test.labels[i] == Label::nontarget && !test.instruments[i].empty()) tagged = true;
  }
  if (tagged) {
    const AcerReport r = acer(test, t);
    report["bpcer"] = r.bpcer;
    report["apcer"] = r.apcer;
    report["max_apcer"] = r.max_apcer;
    report["acer"] = r.acer;
  }
  write_json(report, a.out, out);
  if (!a.out.empty()) log.output(a.out);
  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    require(f.good(), ErrorCode::io, "cannot write '" + a.csv + "'");
    f << "metric,value\n";
    for (const auto& [key, value] : report.items()) {
      if (value.is_number()) f << key << ',' << format_double(value.get<double>()) << '\n';
    }
    const json apcer = report.value("apcer", json::object());
    for (const auto& [name, value] : apcer.items()) {
      f << "apcer:" << name << ',' << format_double(value.get<double>()) << '\n';
    }
    log.output(a.csv);
  }
  if (!a.out.empty()) log.default_manifest(a.out);
}

struct TuneArgs {
  ConfigFlags flags;
  std::vector<std::string> views, dev_views;
  std::string labels, dev_labels, classes, target, out, csv, metric = "auc";
  std::vector<double> deltas, ps, qs;
};

void run_tune(const TuneArgs& a, RunLog& log, std::ostream& out) {
  MklConfig base = a.flags.resolve();
  base.validate();
  log.seed = base.rng_seed;
  log.input(a.views);
  GridSpec grid = GridSpec::standard();
  if (!a.deltas.empty()) grid.delta_multipliers = a.deltas;
  if (!a.ps.empty()) grid.p_values = a.ps;
  if (!a.qs.empty()) grid.q_values = a.qs;
  grid.metric = a.metric == "hter" ? SelectionMetric::hter : SelectionMetric::auc;

  CellEvaluator evaluate;
  Index n = 0;
  if (!a.classes.empty()) {
    // Every other class takes a turn as the target; the metric is averaged over turns.
    require(!a.target.empty(), ErrorCode::invalid_argument, "--classes needs --target");
    log.input(a.classes);
    const FeatureDataset all = load_targets(a.views, "");
    std::map<std::string, std::string> by_id;
    {
      std::ifstream in(a.classes);
      std::string line;
      while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        std::string cls = line.substr(comma + 1);
        while (!cls.empty() && (cls.back() == '\r' || cls.back() == ' ')) cls.pop_back();
        by_id[line.substr(0, comma)] = cls;
      }
    }
    std::vector<std::string> classes;
    for (const auto& id : all.sample_ids) {
      const auto it = by_id.find(id);
      require(it != by_id.end(), ErrorCode::shape, "sample '" + id + "' has no class");
      classes.push_back(it->second);
    }
    const auto splits = leave_other_classes(classes, a.target);
    std::vector<std::pair<FeatureDataset, FeatureDataset>> folds;
    for (const auto& s : splits) {
      FeatureDataset dev_set = all.subset(s.dev_targets);
      const FeatureDataset non = all.subset(s.dev_nontargets);
      std::vector<SampleLabel> labels(s.dev_targets.size(), {Label::target, ""});
      for (auto i : s.dev_nontargets) labels.push_back({Label::nontarget, classes[static_cast<std::size_t>(i)]});
      for (std::size_t v = 0; v < dev_set.views.size(); ++v) {
        Matrix joined(dev_set.views[v].rows() + non.views[v].rows(), dev_set.views[v].cols());
        joined << dev_set.views[v], non.views[v];
        dev_set.views[v] = std::move(joined);
      }
      dev_set.sample_ids.insert(dev_set.sample_ids.end(), non.sample_ids.begin(), non.sample_ids.end());
      dev_set.labels = std::move(labels);
      n = std::max<Index>(n, static_cast<Index>(s.train.size()));
      folds.emplace_back(all.subset(s.train), std::move(dev_set));
    }
    std::vector<CellEvaluator> per_fold;
    for (const auto& [tr, dv] : folds) per_fold.push_back(fit_and_score(tr, dv, grid.metric));
    evaluate = [per_fold](const MklConfig& c) {
      CellOutcome total{0.0, true};
      for (const auto& f : per_fold) {
        const CellOutcome o = f(c);
        total.metric += o.metric / static_cast<double>(per_fold.size());
        total.converged = total.converged && o.converged;
      }
      return total;
    };
  } else {
    require(!a.dev_views.empty() && !a.dev_labels.empty(), ErrorCode::invalid_argument,
            "tune needs --dev-view and --dev-labels, or --classes and --target");
    log.input(a.dev_views);
    log.input(a.dev_labels);
    if (!a.labels.empty()) log.input(a.labels);
    const FeatureDataset train = load_targets(a.views, a.labels);
    std::vector<fs::path> dev_paths(a.dev_views.begin(), a.dev_views.end());
    const FeatureDataset dev = load_dataset(dev_paths, fs::path(a.dev_labels));
    n = train.size();
    evaluate = fit_and_score(train, dev, grid.metric);
  }

  GridResult result;
  {
    Stopwatch w(log, "grid");
    result = grid_search(base, n, grid, evaluate);
  }
  // The emitted configuration is directly usable as `train --config`.
  MklConfig best = result.best;
  best.theta.reset();
  const json best_json = config_to_json(best);
  log.config = {{"base", config_to_json(base)},
                {"grid",
                 {{"delta_multipliers", grid.delta_multipliers},
                  {"p", grid.p_values},
                  {"q", grid.q_values},
                  {"metric", a.metric}}}};
  write_json(best_json, a.out, out);
  log.output(a.out);
  if (!a.csv.empty()) {
    std::ofstream f(a.csv);
    require(f.good(), ErrorCode::io, "cannot write '" + a.csv + "'");
    f << "delta,p,q,metric,converged,error\n";
    for (const auto& c : result.cells) {
      f << format_double(c.delta) << ',' << format_double(c.p) << ',' << format_double(c.q) << ','
        << (c.outcome ? format_double(c.outcome->metric) : "") << ','
        << (c.outcome ? (c.outcome->converged ? "1" : "0") : "") << ',';
      std::string e = c.error;
      for (char& ch : e) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      f << e << '\n';
    }
    log.output(a.csv);
  }
  log.default_manifest(a.out);
  out << json{{"best_metric", result.best_metric}, {"cells", result.cells.size()}, {"config", a.out}}.dump() << '\n';
}

struct DiagnoseArgs {
  std::string model, out;
  std::vector<std::string> grams;
  double loss_bound = 1.0, confidence = 0.05;
};

void run_diagnose(const DiagnoseArgs& a, RunLog& log, std::ostream& out) {
  log.input(a.model);
  log.input(a.grams);
  const TrainedModel model = load_model(a.model);
  log.config = config_to_json(model.config);
  std::vector<Matrix> grams;
  if (model.train_views.empty()) {
    require(!a.grams.empty(), ErrorCode::invalid_argument, "a model trained on precomputed Grams needs --gram");
    for (auto& g : load_training_grams(a.grams).grams) grams.push_back(std::move(g.values));
  } else {
    grams = training_grams(model);
  }
  const ModelDiagnosis d = diagnose(model, grams, a.loss_bound, a.confidence);
  const LocalisedKernelStack stack = training_stack(model, grams);
  const StationarityReport st = check_stationarity(stack, model.config, model.mu, model.lambda);
  const json report{
      {"input",
       {{"clusters", d.input.clusters},
        {"kernels", d.input.kernels},
        {"p", d.input.p},
        {"q", d.input.q},
        {"n", d.input.n},
        {"radius", d.input.radius},
        {"kernel_bound", d.input.kernel_bound},
        {"membership_energy", d.input.membership_energy}}},
      {"bounds",
       {{"joint_matrix", d.bounds.joint_matrix},
        {"joint_vector", d.bounds.joint_vector},
        {"disjoint_vector", d.bounds.disjoint_vector},
        {"disjoint_matrix", d.bounds.disjoint_matrix},
        {"ratio_joint_vector", d.bounds.ratio_joint_vector},
        {"ratio_disjoint_vector", d.bounds.ratio_disjoint_vector},
        {"ratio_disjoint_matrix", d.bounds.ratio_disjoint_matrix}}},
      {"lambda_norm", {{"norm", d.lambda_norm.norm}, {"bound", d.lambda_norm.bound}, {"pass", d.lambda_norm.pass}}},
      {"empirical_loss", d.empirical_loss},
      {"generalisation_bound", d.generalisation},
      {"loss_bound", d.loss_bound},
      {"confidence", d.confidence},
      {"stationarity",
       {{"constraint_violation", st.constraint_violation},
        {"kkt_residual", st.kkt_residual},
        {"linear_residual", st.linear_residual},
        {"min_weight", st.min_weight}}}};
  write_json(report, a.out, out);
  if (!a.out.empty()) {
    log.output(a.out);
    log.default_manifest(a.out);
  }
}

int run_replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
  const json m = read_json(manifest_path);
  require(m.value("format", std::string()) == kManifestFormat, ErrorCode::version,
          "'" + manifest_path + "' is not an " + std::string(kManifestFormat) + " manifest");
  std::vector<std::string> argv;
  std::string cwd;
  try {
    argv = m.at("argv").get<std::vector<std::string>>();
    cwd = m.at("cwd").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "manifest '" + manifest_path + "' is incomplete: " + e.what());
  }
  const fs::path here = fs::current_path();
  fs::current_path(cwd);
  std::ostringstream sink;
  const int status = run(argv, sink, err);
  json outputs = json::array();
  bool identical = status == 0;
  if (status == 0) {
    for (const auto& o : m.at("outputs")) {
      const std::string path = o.at("path").get<std::string>();
      const std::string now = file_digest(path);
      const bool same = now == o.at("fnv1a64").get<std::string>();
      identical = identical && same;
      outputs.push_back({{"path", path}, {"fnv1a64", now}, {"identical", same}});
    }
  }
  fs::current_path(here);
  out << json{{"replayed", argv}, {"status", status}, {"identical", identical}, {"outputs", outputs}}.dump(1)
      << '\n';
  if (status != 0) return status;
  require(identical, ErrorCode::internal, "replayed outputs differ from the manifest digests");
  return 0;
}

void report_error(std::ostream& err, std::string_view code, const std::string& message) {
  err << json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Localised multiple-kernel one-class classification", "nsmkl"};
  app.require_subcommand(1);
  RunLog log;
  log.argv = args;

  auto* synth = app.add_subcommand("synth", "write a synthetic multi-view locality dataset");
  SynthArgs sa;
  synth->add_option("--out", sa.out_dir, "output directory")->required();
  synth->add_option("--seed", sa.spec.seed, "random seed");
  synth->add_option("--clusters", sa.spec.clusters, "target clusters");
  synth->add_option("--views", sa.spec.views, "feature views (>= clusters)");
  synth->add_option("--dim", sa.spec.dim, "features per view");
  synth->add_option("--train-per-cluster", sa.spec.train_per_cluster, "training samples per cluster");
  synth->add_option("--test-per-cluster", sa.spec.test_per_cluster, "test targets per cluster");
  synth->add_option("--outliers", sa.spec.outliers, "test non-targets");

  auto* cluster = app.add_subcommand("cluster", "kernel k-means of the training set; writes assignments and memberships");
  ClusterArgs ca;
  ca.flags.add(cluster);
  auto* cv = cluster->add_option("--view", ca.views, "feature CSV, one per view");
  auto* cg = cluster->add_option("--gram", ca.grams, "precomputed n x n Gram CSV, one per kernel");
  cv->excludes(cg);
  cluster->add_option("--out", ca.out, "assignment CSV")->required();

  auto* train = app.add_subcommand("train", "fit a model and write the archive and trace");
  TrainArgs ta;
  ta.flags.add(train);
  auto* tv = train->add_option("--view", ta.views, "feature CSV, one per view");
  auto* tg = train->add_option("--gram", ta.grams, "precomputed n x n Gram CSV, one per kernel");
  tv->excludes(tg);
  train->add_option("--labels", ta.labels, "labels CSV; only targets are used");
  train->add_option("--out", ta.out, "model archive path")->required();
  train->add_option("--trace", ta.trace, "trace JSON path (default: <out>.trace.json)");
  train->add_option("--on-nonconvergence", ta.on_nonconvergence, "warn or fail")
      ->check(CLI::IsMember({"warn", "fail"}));

  auto* score = app.add_subcommand("score", "score queries with a trained model");
  ScoreArgs sc;
  score->add_option("--model", sc.model, "model archive")->required();
  auto* sv = score->add_option("--view", sc.views, "query feature CSV, one per view");
  auto* sg = score->add_option("--gram", sc.grams, "query Gram CSV (sample_id, self term, n train columns)");
  sv->excludes(sg);
  score->add_option("--out", sc.out, "score CSV")->required();
  sc.threshold_opt = score->add_option("--threshold", sc.threshold, "also write accept (1) / reject (0)");
  score->add_option("--score-mode", sc.score_mode, "override the archived score mode")
      ->check(CLI::IsMember({"raw", "one-distance"}));

  auto* eval = app.add_subcommand("eval", "AUC, EER threshold, HTER and ACER of a score file");
  EvalArgs ea;
  eval->add_option("--scores", ea.scores, "score CSV")->required();
  eval->add_option("--labels", ea.labels, "labels CSV")->required();
  eval->add_option("--dev-scores", ea.dev_scores, "dev score CSV that fixes the threshold");
  eval->add_option("--dev-labels", ea.dev_labels, "dev labels CSV");
  ea.threshold_opt = eval->add_option("--threshold", ea.threshold, "fixed decision threshold");
  eval->add_flag("--lower-is-target", ea.lower_is_target, "scores are distances");
  eval->add_option("--out", ea.out, "JSON report (default: stdout)");
  eval->add_option("--csv", ea.csv, "metric,value CSV");

  auto* tune = app.add_subcommand("tune", "grid search over delta, p and q");
  TuneArgs tu;
  tu.flags.add(tune);
  tune->add_option("--view", tu.views, "training feature CSV, one per view")->required();
  tune->add_option("--labels", tu.labels, "training labels; only targets are used");
  tune->add_option("--dev-view", tu.dev_views, "dev feature CSV, one per view");
  tune->add_option("--dev-labels", tu.dev_labels, "dev labels CSV");
  tune->add_option("--classes", tu.classes, "sample_id,class CSV for the leave-other-classes protocol");
  tune->add_option("--target", tu.target, "class never used for tuning");
  tune->add_option("--metric", tu.metric, "auc or hter")->check(CLI::IsMember({"auc", "hter"}));
  tune->add_option("--deltas", tu.deltas, "delta multipliers of n");
  tune->add_option("--p-values", tu.ps, "p grid");
  tune->add_option("--q-values", tu.qs, "q grid");
  tune->add_option("--out", tu.out, "best configuration JSON")->required();
  tune->add_option("--csv", tu.csv, "per-cell CSV");

  auto* diag = app.add_subcommand("diagnose", "complexity bounds and optimality checks of a model, as JSON");
  DiagnoseArgs da;
  diag->add_option("--model", da.model, "model archive")->required();
  diag->add_option("--gram", da.grams, "training Grams of a precomputed-kernel model");
  diag->add_option("--loss-bound", da.loss_bound, "bound on the loss");
  diag->add_option("--confidence", da.confidence, "failure probability of the bound");
  diag->add_option("--out", da.out, "JSON report (default: stdout)");

  auto* replay = app.add_subcommand("replay", "re-run a command from its manifest and compare output digests");
  std::string replay_manifest;
  replay->add_option("manifest", replay_manifest, "manifest JSON")->required();

  for (auto* sub : {synth, cluster, train, score, eval, tune, diag}) {
    sub->add_option("--manifest", log.manifest_path, "manifest path (default: <primary output>.manifest.json)");
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return kUsageExit;
  }

  try {
    const auto start = Clock::now();
    std::string command;
    if (synth->parsed()) {
      command = "synth";
      run_synth(sa, log, out);
    } else if (cluster->parsed()) {
      command = "cluster";
      require(!ca.views.empty() || !ca.grams.empty(), ErrorCode::invalid_argument, "cluster needs --view or --gram");
      run_cluster(ca, log, out);
    } else if (train->parsed()) {
      command = "train";
      require(!ta.views.empty() || !ta.grams.empty(), ErrorCode::invalid_argument, "train needs --view or --gram");
      run_train(ta, log, out, err);
    } else if (score->parsed()) {
      command = "score";
      require(!sc.views.empty() || !sc.grams.empty(), ErrorCode::invalid_argument, "score needs --view or --gram");
      run_score(sc, log, out);
    } else if (eval->parsed()) {
      command = "eval";
      run_eval(ea, log, out);
    } else if (tune->parsed()) {
      command = "tune";
      run_tune(tu, log, out);
    } else if (diag->parsed()) {
      command = "diagnose";
      run_diagnose(da, log, out);
    } else {
      return run_replay(replay_manifest, out, err);
    }
    const std::chrono::duration<double> total = Clock::now() - start;
    log.timings.emplace_back("total", total.count());
    write_manifest(log, command);
    return 0;
  } catch (const Error& e) {
    report_error(err, to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
  }
  return 1;
}

}  // namespace nsmkl::cli
