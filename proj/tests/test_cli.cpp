#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "n2m/n2m.hpp"

using namespace n2m;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
protected:
  static fs::path dir() { return fs::temp_directory_path() / "n2m_test_cli"; }

  static void SetUpTestSuite() {
    fs::remove_all(dir());
    fs::create_directories(dir());
    ModelConfig mc;
    mc.point_widths = {16, 32, 64};
    mc.head_widths = {64};
    mc.n_points = 256;
    write_json_file(dir() / "model.json", model_config_to_json(mc));
    TrainConfig tc;
    tc.steps = 40;
    tc.eval_every = 20;
    write_json_file(dir() / "train.json", train_config_to_json(tc));
    write_json_file(dir() / "augment.json", {{"M", 16}, {"n_points", 256}});
  }

  static RunResult run(const std::string &args) {
    static int n = 0;
    const fs::path o = dir() / ("stdout_" + std::to_string(n));
    const fs::path e = dir() / ("stderr_" + std::to_string(n++));
    const std::string cmd = std::string(N2M_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
  }

  static std::string p(const std::string &name) { return (dir() / name).string(); }
  static std::string cfg(const std::string &name) { return std::string(N2M_CONFIG_DIR) + "/" + name; }

  /// gen-scenes, collect, augment, train; each stage runs once per suite.
  static void pipeline() {
    static bool done = false;
    if (done)
      return;
    done = true;
    ASSERT_EQ(run("gen-scenes --spec " + cfg("task_standard.json") + " --count 3 --seed 1 --out " + p("scenes")).code, 0);
    ASSERT_EQ(run("collect --scenes " + p("scenes") + " --oracle " + cfg("oracle.json") +
                  " --n-success 4 --seed 2 --out " + p("raw"))
                  .code,
              0);
    ASSERT_EQ(run("augment --raw " + p("raw") + " --config " + p("augment.json") + " --seed 3 --out " + p("data")).code,
              0);
    ASSERT_EQ(run("train --data " + p("data") + " --model-cfg " + p("model.json") + " --train-cfg " + p("train.json") +
                  " --out " + p("model.ckpt"))
                  .code,
              0);
  }
};

} // namespace

TEST(Configs, CheckedInConfigsStateEveryDefault) {
  const fs::path d = N2M_CONFIG_DIR;
  EXPECT_EQ(read_json_file(d / "task_standard.json"), task_to_json(standard_task()));
  EXPECT_EQ(read_json_file(d / "task_standard_height.json"), task_to_json(standard_task(true)));
  EXPECT_EQ(read_json_file(d / "task_two_sided.json"), task_to_json(two_sided_task()));
  EXPECT_EQ(read_json_file(d / "oracle.json"), oracle_to_json(OracleSpec{}));
  EXPECT_EQ(read_json_file(d / "augment.json"), augment_config_to_json(AugmentConfig{}));
  EXPECT_EQ(read_json_file(d / "model.json"), model_config_to_json(ModelConfig{}));
  EXPECT_EQ(read_json_file(d / "loss.json"), loss_config_to_json(LossConfig{}));
  json t = train_config_to_json(TrainConfig{});
  t["loss"] = loss_config_to_json(LossConfig{});
  EXPECT_EQ(read_json_file(d / "train.json"), t);
  EXPECT_EQ(read_json_file(d / "suite.json"), suite_config_to_json(SuiteConfig{}));
}

TEST_F(Cli, PipelineOutputsCarryConfigAndSeed) {
  pipeline();
  const json scenes = read_json_file(dir() / "scenes" / "manifest.json");
  EXPECT_EQ(scenes["seed"], 1);
  EXPECT_EQ(scenes["count"], 3);
  EXPECT_TRUE(fs::exists(dir() / "scenes" / "scene_2.json"));
  const RawDataset raw = load_raw_dataset(dir() / "raw");
  EXPECT_EQ(raw.entries.size(), 4u);
  EXPECT_EQ(raw.seed, 2u);
  EXPECT_TRUE(raw.config.contains("task"));
  const TrainDataset data = load_train_dataset(dir() / "data");
  EXPECT_EQ(data.seed, 3u);
  EXPECT_TRUE(data.config.contains("augment"));
  EXPECT_EQ(data.samples.front().observation.size(), 256u);
  const LoadedCheckpoint ck = load_checkpoint(p("model.ckpt"));
  EXPECT_TRUE(ck.metadata.contains("train"));
  EXPECT_TRUE(ck.metadata.contains("seed"));
  EXPECT_EQ(ck.model.config.n_points, 256);
  EXPECT_TRUE(fs::exists(p("model.ckpt.history.jsonl")));
}

TEST_F(Cli, EvalReportHasOneRecordPerTrial) {
  pipeline();
  ASSERT_EQ(run("eval --condition reachability --trials 300 --seed 4 --out " + p("reach.json")).code, 0);
  const json r = read_json_file(p("reach.json"));
  EXPECT_EQ(r["trials"].size(), 300u);
  EXPECT_EQ(r["seed"], 4);
  EXPECT_TRUE(r.contains("config"));
  ASSERT_EQ(run("eval --ckpt " + p("model.ckpt") + " --condition n2m --trials 5 --seed 4 --out " + p("n2m.json")).code, 0);
  EXPECT_EQ(read_json_file(p("n2m.json"))["trials"].size(), 5u);
  ASSERT_EQ(run("eval --ckpt " + p("model.ckpt") + " --condition n2m --trials 5 --seed 4 --out " + p("n2m_b.json")).code,
            0);
  EXPECT_EQ(slurp(p("n2m.json")), slurp(p("n2m_b.json")));
}

TEST_F(Cli, InferAndSaliencyAreDeterministic) {
  pipeline();
  const TrainDataset data = load_train_dataset(dir() / "data");
  write_ply(p("obs.ply"), data.samples.front().observation, {"test observation"});
  const std::string infer = "infer --ckpt " + p("model.ckpt") + " --cloud " + p("obs.ply") + " --seed 5 --out ";
  ASSERT_EQ(run(infer + p("infer_a.json")).code, 0);
  ASSERT_EQ(run(infer + p("infer_b.json")).code, 0);
  EXPECT_EQ(slurp(p("infer_a.json")), slurp(p("infer_b.json")));
  const json rec = read_json_file(p("infer_a.json"));
  EXPECT_EQ(rec["seed"], 5);
  EXPECT_EQ(rec["gmm"]["weights"].size(), 1u);

  ASSERT_EQ(run("saliency --ckpt " + p("model.ckpt") + " --cloud " + p("obs.ply") + " --out " + p("sal.ply")).code, 0);
  const PlyData sal = read_ply(p("sal.ply"));
  EXPECT_EQ(sal.cloud.size(), 256u);
  ASSERT_TRUE(sal.saliency.has_value());
  EXPECT_EQ(sal.saliency->size(), 256u);
}

TEST_F(Cli, BenchReportsLatencyStatistics) {
  pipeline();
  const RunResult r = run("bench --ckpt " + p("model.ckpt") + " --runs 5");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["runs"], 5);
  EXPECT_LE(j["min_ms"].get<double>(), j["median_ms"].get<double>());
  EXPECT_LE(j["median_ms"].get<double>(), j["p99_ms"].get<double>());
}

TEST_F(Cli, AugmentOnEmptyRawDirectory) {
  fs::create_directories(dir() / "empty_raw");
  const RunResult r = run("augment --raw " + p("empty_raw") + " --seed 1 --out " + p("never"));
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(r.err.rfind("error category=EmptyDataset", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("eval --condition n2m --out " + p("x.json")).code, 2);
  const RunResult r = run("eval --condition random --out " + p("x.json"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(r.err.rfind("error category=UsageError", 0), 0u) << r.err;
}

TEST_F(Cli, ExhaustionExitsWithFour) {
  write_json_file(dir() / "far_oracle.json", {{"r_lo", 5.0}, {"r_hi", 6.0}});
  ASSERT_EQ(run("gen-scenes --spec " + cfg("task_standard.json") + " --count 1 --out " + p("scenes_x")).code, 0);
  const RunResult r = run("collect --scenes " + p("scenes_x") + " --oracle " + p("far_oracle.json") +
                          " --n-success 1 --out " + p("raw_x"));
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(r.err.rfind("error category=BudgetExhausted", 0), 0u) << r.err;
}

TEST_F(Cli, SuiteWritesGrid) {
  json cfg = suite_config_to_json(SuiteConfig{});
  cfg["rollout_counts"] = {2};
  cfg["trials"] = 3;
  cfg["augment"]["M"] = 16;
  cfg["augment"]["n_points"] = 64;
  cfg["model"]["point_widths"] = {8, 16, 16};
  cfg["model"]["head_widths"] = {16};
  cfg["train"]["steps"] = 5;
  cfg["train"]["eval_every"] = 5;
  write_json_file(dir() / "suite.json", cfg);
  const RunResult r = run("suite --config " + p("suite.json") + " --out " + p("suite_out"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("n2m/rollouts=2/unseen"), std::string::npos);
  EXPECT_EQ(read_json_file(dir() / "suite_out" / "suite.json")["cells"].size(), 6u);
}
