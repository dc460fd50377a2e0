#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "nsmkl/archive.hpp"
#include "nsmkl/cli.hpp"
#include "nsmkl/dataio.hpp"
#include "support.hpp"

using namespace nsmkl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status;
  std::string out;
  std::string err;
};

Outcome call(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> views(const fs::path& dir, const std::string& stem, int count) {
  std::vector<std::string> out;
  for (int v = 0; v < count; ++v) out.push_back((dir / (stem + std::to_string(v) + ".csv")).string());
  return out;
}

std::vector<std::string> with(std::vector<std::string> args, const std::string& flag,
                              const std::vector<std::string>& values) {
  args.push_back(flag);
  args.insert(args.end(), values.begin(), values.end());
  return args;
}

fs::path synth(const std::string& name, const std::string& seed = "5") {
  const auto dir = testing::scratch_dir(name);
  const auto r = call({"synth", "--out", (dir / "d").string(), "--seed", seed, "--train-per-cluster", "15",
                       "--test-per-cluster", "8", "--outliers", "24", "--dim", "5"});
  REQUIRE(r.status == 0);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit with status 2 and a JSON error") {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {},
           {"frobnicate"},
           {"train", "--out", "m.json", "--view", "a.csv", "--bogus"},
           {"train", "--out", "m.json", "--view", "a.csv", "--delta", "1", "--theta", "2"},
           {"train", "--out", "m.json", "--view", "a.csv", "--regime", "sideways"},
           {"train", "--out", "m.json", "--view", "a.csv", "--p", "two"}}) {
    const auto r = call(args);
    CHECK(r.status == cli::kUsageExit);
    const auto j = json::parse(r.err);
    CHECK(j["error"]["code"] == "usage");
  }
  CHECK(call({"--help"}).status == 0);
}

TEST_CASE("runtime errors are reported as JSON") {
  const auto dir = testing::scratch_dir("cli_errors");
  const auto r = call({"train", "--view", (dir / "absent.csv").string(), "--out", (dir / "m.json").string()});
  CHECK(r.status == 1);
  CHECK(json::parse(r.err)["error"]["code"] == "io");
  CHECK_FALSE(fs::exists(dir / "m.json"));

  std::ofstream(dir / "bad.json") << "{\"p\": 2, \"colour\": 3}";
  std::ofstream(dir / "v.csv") << "a,1\nb,2\nc,4\n";
  const auto c = call({"train", "--view", (dir / "v.csv").string(), "--config", (dir / "bad.json").string(), "--out",
                       (dir / "m.json").string()});
  CHECK(c.status == 1);
  CHECK(json::parse(c.err)["error"]["code"] == "parse");
}

TEST_CASE("single-kernel training on one view produces an archive") {
  const auto dir = synth("cli_single");
  const auto model = (dir / "m.json").string();
  const auto r = call({"train", "--regime", "single-kernel", "--view", (dir / "d" / "train_view0.csv").string(),
                       "--out", model});
  REQUIRE(r.status == 0);
  const auto m = load_model(model);
  CHECK(m.kernel_count() == 1);
  CHECK(m.cluster_count() == 1);
  CHECK(m.trace.converged);
  CHECK(fs::exists(model + ".trace.json"));
  CHECK(fs::exists(model + ".manifest.json"));
}

TEST_CASE("config file values are overridden by flags") {
  const auto dir = synth("cli_config");
  std::ofstream(dir / "c.json") << R"({"p": 4, "q": 2, "delta": 45, "clusters": 2, "max_iter": 300})";
  const auto model = (dir / "m.json").string();
  const auto r = with({"train", "--config", (dir / "c.json").string(), "--q", "1.5", "--out", model}, "--view",
                      views(dir / "d", "train_view", 3));
  REQUIRE(call(r).status == 0);
  const auto m = load_model(model);
  CHECK(m.config.p == 4.0);
  CHECK(m.config.q == 1.5);
  CHECK(m.config.delta == 45.0);
  CHECK(m.config.max_iter == 300);
  CHECK(m.cluster_count() == 2);
  const auto manifest = json::parse(slurp(model + ".manifest.json"));
  CHECK(manifest["config"]["q"] == 1.5);
  CHECK(manifest["command"] == "train");
}

TEST_CASE("tune, train with the tuned config, score and evaluate") {
  const auto dir = synth("cli_pipeline");
  const auto d = dir / "d";
  // A second synthetic draw stands in for the dev set.
  REQUIRE(call({"synth", "--out", (dir / "dev").string(), "--seed", "77", "--train-per-cluster", "15",
                "--test-per-cluster", "8", "--outliers", "24", "--dim", "5"})
              .status == 0);
  auto tune = with({"tune", "--out", (dir / "best.json").string(), "--csv", (dir / "cells.csv").string(), "--deltas",
                    "0.1", "1", "--p-values", "2", "4", "--q-values", "4/3", "2", "--dev-labels",
                    (dir / "dev" / "test_labels.csv").string()},
                   "--view", views(d, "train_view", 3));
  // CLI11 does not evaluate fractions; use a decimal.
  std::replace(tune.begin(), tune.end(), std::string("4/3"), std::string("1.3333333333333333"));
  tune = with(tune, "--dev-view", views(dir / "dev", "test_view", 3));
  const auto t = call(tune);
  REQUIRE_MESSAGE(t.status == 0, t.err);
  const auto best = json::parse(slurp(dir / "best.json"));
  CHECK(best.contains("p"));
  CHECK(json::parse(t.out)["cells"] == 8);

  const auto model = (dir / "m.json").string();
  REQUIRE(call(with({"train", "--config", (dir / "best.json").string(), "--out", model}, "--view",
                    views(d, "train_view", 3)))
              .status == 0);
  const auto scores = (dir / "s.csv").string();
  REQUIRE(call(with({"score", "--model", model, "--out", scores}, "--view", views(d, "test_view", 3))).status == 0);
  const auto e = call({"eval", "--scores", scores, "--labels", (d / "test_labels.csv").string(), "--csv",
                       (dir / "metrics.csv").string()});
  REQUIRE_MESSAGE(e.status == 0, e.err);
  const auto report = json::parse(e.out);
  CHECK(report["auc"].get<double>() >= 0.9);
  CHECK(report.contains("acer"));
  CHECK(slurp(dir / "metrics.csv").find("auc,") != std::string::npos);

  const auto diag = call({"diagnose", "--model", model});
  REQUIRE(diag.status == 0);
  const auto dj = json::parse(diag.out);
  CHECK(dj["lambda_norm"]["pass"] == true);
  CHECK(dj["bounds"]["joint_matrix"].get<double>() > 0.0);
}

TEST_CASE("replaying a manifest reproduces the score file byte for byte") {
  const auto dir = synth("cli_replay");
  const auto d = dir / "d";
  const auto model = (dir / "m.json").string();
  REQUIRE(call(with({"train", "--delta", "45", "--seed", "9", "--out", model}, "--view", views(d, "train_view", 3)))
              .status == 0);
  const auto scores = (dir / "s.csv").string();
  REQUIRE(call(with({"score", "--model", model, "--out", scores, "--threshold", "0.5"}, "--view",
                    views(d, "test_view", 3)))
              .status == 0);
  const std::string before = slurp(scores);
  fs::remove(scores);
  const auto r = call({"replay", scores + ".manifest.json"});
  CHECK(r.status == 0);
  CHECK(json::parse(r.out)["identical"] == true);
  CHECK(slurp(scores) == before);

  // Replaying training regenerates an identical archive, and a tampered output is detected.
  const std::string archive = slurp(model);
  CHECK(call({"replay", model + ".manifest.json"}).status == 0);
  CHECK(slurp(model) == archive);
  std::ofstream(scores, std::ios::app) << "x,1\n";
  const auto manifest = json::parse(slurp(scores + ".manifest.json"));
  CHECK(manifest["outputs"][0]["fnv1a64"] != cli::file_digest(scores));
}

TEST_CASE("precomputed Grams through the CLI") {
  const auto dir = testing::scratch_dir("cli_gram");
  // Linear kernels of random points, written as CSV.
  std::mt19937_64 rng(3);
  const Matrix x = testing::random_matrix(rng, 12, 3);
  const Matrix y = testing::random_matrix(rng, 4, 3);
  std::vector<std::string> ids, qids;
  for (int i = 0; i < 12; ++i) ids.push_back("x" + std::to_string(i));
  for (int i = 0; i < 4; ++i) qids.push_back("y" + std::to_string(i));
  const Matrix k = x * x.transpose();
  Matrix q(4, 13);
  q.col(0) = y.rowwise().squaredNorm();
  q.rightCols(12) = y * x.transpose();
  write_id_table(dir / "k.csv", ids, {}, k);
  write_id_table(dir / "q.csv", qids, {}, q);

  const auto model = (dir / "m.json").string();
  REQUIRE(call({"train", "--regime", "single-kernel", "--delta", "2", "--gram", (dir / "k.csv").string(), "--out",
                model})
              .status == 0);
  const auto scores = (dir / "s.csv").string();
  const auto r = call({"score", "--model", model, "--gram", (dir / "q.csv").string(), "--out", scores});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const IdTable t = read_id_table(scores);
  const Vector lambda = (2.0 * Matrix::Identity(12, 12) + k).inverse() * Vector::Ones(12);
  const Vector expected = y * x.transpose() * lambda;
  CHECK(t.ids == qids);
  CHECK((t.values.col(0) - expected).cwiseAbs().maxCoeff() < 1e-10);

  const auto c = call({"cluster", "--gram", (dir / "k.csv").string(), "--clusters", "2", "--out",
                       (dir / "clusters.csv").string()});
  REQUIRE(c.status == 0);
  const IdTable cl = read_id_table(dir / "clusters.csv");
  CHECK(cl.values.cols() == 3);
  CHECK((cl.values.rightCols(2).rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);

  CHECK(call({"diagnose", "--model", model}).status == 1);
  CHECK(call({"diagnose", "--model", model, "--gram", (dir / "k.csv").string()}).status == 0);
}
