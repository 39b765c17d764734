#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "experiment.hpp"
#include "spam/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spam;

namespace {

fs::path work_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("spam_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

json blobs_config() {
  return json::parse(R"({
    "dataset": {"kind": "blobs", "n": 240, "d": 3, "classes": 3, "noise": 0.8, "seed": 5},
    "architecture": {"hidden": [12]},
    "train": {"epochs": 3, "batch_size": 32, "lr": 0.01,
              "spam": {"prior": "layer", "hyper_steps": 10}},
    "trainings": ["spam"],
    "prune": {"criteria": ["opd", "magnitude"], "sparsities": [0, 0.5, 0.9]},
    "seeds": [0]
  })");
}

fs::path write_config(const fs::path& dir, const json& cfg) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << cfg.dump(2);
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "spam");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Cli, UnknownKeyIsConfigError) {
  const auto dir = work_dir("unknown");
  json cfg = blobs_config();
  cfg["train"]["learning_rate"] = 0.1;
  EXPECT_EQ(run({"train", "--config", write_config(dir, cfg).string(), "--out", (dir / "out").string()}),
            cli::kExitConfig);
  EXPECT_THROW(cli::parse_config(json{{"datasets", json::object()}}), ConfigError);
  EXPECT_EQ(run({"train"}), cli::kExitConfig);
}

TEST(Cli, TrainWritesArtifactsReproducibly) {
  const auto dir = work_dir("train");
  json cfg = blobs_config();
  cfg["trainings"] = {"map", "spam"};
  const auto c = write_config(dir, cfg).string();
  ASSERT_EQ(run({"train", "--config", c, "--out", (dir / "a").string()}), cli::kExitOk);
  ASSERT_EQ(run({"train", "--config", c, "--out", (dir / "b").string()}), cli::kExitOk);
  EXPECT_TRUE(fs::exists(dir / "a/map_seed0/checkpoint.spam"));
  EXPECT_FALSE(fs::exists(dir / "a/map_seed0/posterior.spam"));
  EXPECT_TRUE(fs::exists(dir / "a/spam_seed0/posterior.spam"));
  EXPECT_EQ(lines(dir / "a/spam_seed0/log.jsonl").size(), 3u);
  for (const char* t : {"map_seed0", "spam_seed0"}) {
    const json ma = read_json(dir / "a" / t / "manifest.json");
    const json mb = read_json(dir / "b" / t / "manifest.json");
    EXPECT_EQ(ma["files"], mb["files"]);
    EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
    EXPECT_FALSE(ma["files"].empty());
  }
}

TEST(Cli, PruneRowsAndEval) {
  const auto dir = work_dir("prune");
  json cfg = blobs_config();
  const auto c = write_config(dir, cfg).string();
  ASSERT_EQ(run({"train", "--config", c, "--out", (dir / "t").string()}), cli::kExitOk);
  const auto ck = (dir / "t/spam_seed0/checkpoint.spam").string();
  const auto post = (dir / "t/spam_seed0/posterior.spam").string();
  ASSERT_EQ(run({"prune", "--config", c, "--checkpoint", ck, "--posterior", post, "--out", (dir / "p").string()}),
            cli::kExitOk);
  const auto rows = lines(dir / "p/report.csv");
  ASSERT_EQ(rows.size(), 1u + 2 * 3);
  ASSERT_EQ(run({"eval", "--config", c, "--checkpoint", ck, "--out", (dir / "e").string()}), cli::kExitOk);
  const json ev = read_json(dir / "e/eval.json");
  // Sparsity 0 reproduces the unpruned evaluation.
  const json rep = read_json(dir / "p/report.json");
  for (const auto& r : rep["rows"])
    if (r["sparsity"].get<double>() == 0.0) EXPECT_DOUBLE_EQ(r["accuracy"].get<double>(), ev["accuracy"].get<double>());
}

TEST(Cli, OpdWithoutPosteriorOrCurvatureIsConfigError) {
  const auto dir = work_dir("noposterior");
  json cfg = blobs_config();
  cfg["trainings"] = {"map"};
  const auto c = write_config(dir, cfg).string();
  ASSERT_EQ(run({"train", "--config", c, "--out", (dir / "t").string()}), cli::kExitOk);
  cfg["prune"]["curvature"] = nullptr;
  const auto c2 = write_config(dir, cfg).string();
  EXPECT_EQ(run({"prune", "--config", c2, "--checkpoint", (dir / "t/map_seed0/checkpoint.spam").string(), "--out",
                 (dir / "p").string()}),
            cli::kExitConfig);
}

TEST(Cli, CorruptCheckpointIsFormatError) {
  const auto dir = work_dir("corrupt");
  std::ofstream(dir / "bad.spam") << "not a checkpoint";
  const auto c = write_config(dir, blobs_config()).string();
  EXPECT_EQ(run({"eval", "--config", c, "--checkpoint", (dir / "bad.spam").string(), "--out", dir.string()}),
            cli::kExitFormat);
}

TEST(Cli, CompactWritesSmallerNetwork) {
  const auto dir = work_dir("compact");
  json cfg = blobs_config();
  cfg["trainings"] = {"map"};
  cfg["architecture"]["hidden"] = {20, 20};
  const auto c = write_config(dir, cfg).string();
  ASSERT_EQ(run({"train", "--config", c, "--out", (dir / "t").string()}), cli::kExitOk);
  ASSERT_EQ(run({"compact", "--config", c, "--checkpoint", (dir / "t/map_seed0/checkpoint.spam").string(),
                 "--sparsity", "0.5", "--criterion", "magnitude", "--out", (dir / "c").string()}),
            cli::kExitOk);
  const json cost = read_json(dir / "c/cost.json");
  EXPECT_GT(cost["flops_reduction"].get<double>(), 2.0);
  EXPECT_TRUE(fs::exists(dir / "c/compact.spam"));
  EXPECT_TRUE(fs::exists(dir / "c/provenance.json"));
}

TEST(Cli, SweepAggregatesWithExplicitCells) {
  const auto dir = work_dir("sweep");
  json cfg = blobs_config();
  cfg["trainings"] = {"map", "spam"};
  cfg["seeds"] = {0, 1};
  cfg["prune"]["criteria"] = {"magnitude", "random"};
  cfg["prune"]["sparsities"] = {0.5};
  const auto c = write_config(dir, cfg).string();
  ASSERT_EQ(run({"sweep", "--config", c, "--out", (dir / "s").string(), "--threads", "2"}), cli::kExitOk);
  // One unpruned row plus criteria x sparsities per (seed, training).
  EXPECT_EQ(lines(dir / "s/report.csv").size(), 1u + 2 * 2 * (1 + 2));
  const auto agg = lines(dir / "s/aggregate.csv");
  EXPECT_EQ(agg.size(), 1u + 2 * 3);
  for (const auto& l : agg) EXPECT_EQ(l.find("null"), std::string::npos) << l;
  ASSERT_EQ(run({"sweep", "--config", c, "--out", (dir / "s1").string(), "--threads", "1"}), cli::kExitOk);
  EXPECT_EQ(read_json(dir / "s/report.json")["rows"].size(), read_json(dir / "s1/report.json")["rows"].size());
}
