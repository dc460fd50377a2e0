#include "nsmkl/archive.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "nsmkl/error.hpp"
#include "nsmkl/json_io.hpp"

namespace nsmkl {

using nlohmann::json;

namespace {

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()},
              {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(rows >= 0 && cols >= 0 && static_cast<Index>(data.size()) == rows * cols, ErrorCode::parse,
          "matrix block size does not match its shape");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

}  // namespace

json config_to_json(const MklConfig& c) {
  json j{{"p", c.p},
         {"q", c.q},
         {"delta", c.delta},
         {"clusters", c.clusters},
         {"max_iter", c.max_iter},
         {"tol", c.tol},
         {"weight_floor", c.weight_floor},
         {"seed", c.rng_seed},
         {"regime", std::string(to_string(c.regime))},
         {"kernel", std::string(to_string(c.kernel))},
         {"kmeans_restarts", c.kmeans_restarts},
         {"score_mode", std::string(to_string(c.score_mode))}};
  j["theta"] = c.theta ? json(*c.theta) : json(nullptr);
  j["temperature"] = c.temperature ? json(*c.temperature) : json(nullptr);
  return j;
}

MklConfig config_from_json(const json& j, MklConfig c) {
  require(j.is_object(), ErrorCode::parse, "config must be a JSON object");
  static const std::set<std::string> known{"p",   "q",      "delta",       "theta",          "clusters",
                                           "max_iter", "tol", "weight_floor", "seed",         "regime",
                                           "kernel",   "kmeans_restarts", "score_mode", "temperature"};
  for (const auto& [key, value] : j.items()) {
    require(known.count(key) == 1, ErrorCode::parse, "unknown config key '" + key + "'");
  }
  try {
    if (j.contains("p")) c.p = j["p"].get<double>();
    if (j.contains("q")) c.q = j["q"].get<double>();
    if (j.contains("delta")) c.delta = j["delta"].get<double>();
    if (j.contains("theta")) c.theta = j["theta"].is_null() ? std::nullopt : std::optional(j["theta"].get<double>());
    if (j.contains("clusters")) c.clusters = j["clusters"].get<int>();
    if (j.contains("max_iter")) c.max_iter = j["max_iter"].get<int>();
    if (j.contains("tol")) c.tol = j["tol"].get<double>();
    if (j.contains("weight_floor")) c.weight_floor = j["weight_floor"].get<double>();
    if (j.contains("seed")) c.rng_seed = j["seed"].get<std::uint64_t>();
    if (j.contains("regime")) c.regime = parse_regime(j["regime"].get<std::string>());
    if (j.contains("kernel")) c.kernel = parse_kernel_kind(j["kernel"].get<std::string>());
    if (j.contains("kmeans_restarts")) c.kmeans_restarts = j["kmeans_restarts"].get<int>();
    if (j.contains("score_mode")) c.score_mode = parse_score_mode(j["score_mode"].get<std::string>());
    if (j.contains("temperature")) {
      c.temperature = j["temperature"].is_null() ? std::nullopt : std::optional(j["temperature"].get<double>());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("bad config value: ") + e.what());
  }
  return c;
}

json trace_to_json(const SolveTrace& t) {
  return json{{"iterations", t.iterations},
              {"converged", t.converged},
              {"lambda_change", t.lambda_change},
              {"objective", t.objective},
              {"residual", t.residual}};
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  model.validate();
  json kernels = json::array();
  for (const auto& s : model.kernel_specs) {
    kernels.push_back({{"kind", std::string(to_string(s.kind))}, {"width", s.width}, {"view", s.view_index}});
  }
  json views = json::array();
  for (const auto& v : model.train_views) views.push_back(matrix_to_json(v));
  const auto& cm = model.clusters;
  json doc{{"format", std::string(kArchiveFormat)},
           {"config", config_to_json(model.config)},
           {"delta", model.delta},
           {"kernels", kernels},
           {"train_views", views},
           {"clusters",
            {{"count", cm.clusters},
             {"assignment", cm.assignment},
             {"sizes", cm.cluster_sizes},
             {"mean_self_term", cm.mean_self_term},
             {"temperature", cm.temperature},
             {"seed", cm.seed},
             {"objective", cm.objective},
             {"objective_history", cm.objective_history}}},
           {"train_memberships", matrix_to_json(model.train_memberships)},
           {"mu", vector_to_json(model.mu)},
           {"lambda", vector_to_json(model.lambda)},
           {"trace", trace_to_json(model.trace)}};

  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write '" + path.string() + "'");
  out << doc.dump(1) << '\n';
  require(out.good(), ErrorCode::io, "write failed for '" + path.string() + "'");
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::parse, "model archive '" + path.string() + "' is malformed or truncated: " + e.what());
  }
  require(doc.is_object() && doc.contains("format"), ErrorCode::parse, "model archive has no format tag");
  const auto format = doc["format"].is_string() ? doc["format"].get<std::string>() : std::string("?");
  require(format == kArchiveFormat, ErrorCode::version,
          "model archive format '" + format + "' is not supported (expected " + std::string(kArchiveFormat) + ")");

  TrainedModel model;
  try {
    model.config = config_from_json(doc.at("config"));
    model.delta = doc.at("delta").get<double>();
    for (const auto& k : doc.at("kernels")) {
      model.kernel_specs.push_back(
          KernelSpec{parse_kernel_kind(k.at("kind").get<std::string>()), k.at("width").get<double>(), k.at("view").get<int>()});
    }
    for (const auto& v : doc.at("train_views")) model.train_views.push_back(matrix_from_json(v));
    const auto& c = doc.at("clusters");
    model.clusters.clusters = c.at("count").get<int>();
    model.clusters.assignment = c.at("assignment").get<std::vector<int>>();
    model.clusters.cluster_sizes = c.at("sizes").get<std::vector<double>>();
    model.clusters.mean_self_term = c.at("mean_self_term").get<std::vector<double>>();
    model.clusters.temperature = c.at("temperature").get<double>();
    model.clusters.seed = c.at("seed").get<std::uint64_t>();
    model.clusters.objective = c.at("objective").get<double>();
    model.clusters.objective_history = c.at("objective_history").get<std::vector<double>>();
    model.train_memberships = matrix_from_json(doc.at("train_memberships"));
    model.mu = vector_from_json(doc.at("mu"));
    model.lambda = vector_from_json(doc.at("lambda"));
    const auto& t = doc.at("trace");
    model.trace.iterations = t.at("iterations").get<int>();
    model.trace.converged = t.at("converged").get<bool>();
    model.trace.lambda_change = t.at("lambda_change").get<std::vector<double>>();
    model.trace.objective = t.at("objective").get<std::vector<double>>();
    model.trace.residual = t.at("residual").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "model archive '" + path.string() + "' is incomplete: " + e.what());
  }
  require(static_cast<int>(model.clusters.cluster_sizes.size()) == model.clusters.clusters &&
              static_cast<int>(model.clusters.mean_self_term.size()) == model.clusters.clusters,
          ErrorCode::parse, "cluster block is inconsistent");
  for (const auto& s : model.kernel_specs) s.validate();
  try {
    model.validate();
  } catch (const Error& e) {
    fail(ErrorCode::parse, std::string("model archive is inconsistent: ") + e.what());
  }
  return model;
}

}  // namespace nsmkl
