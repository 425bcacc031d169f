// Copyright 2026 The ebmlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "ebmlab/cli.hpp"
#include "ebmlab/data.hpp"
#include "ebmlab/inference.hpp"
#include "ebmlab/models.hpp"

namespace ebmlab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("ebmlab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  std::string dir(const std::string& name) const { return (root_ / name).string(); }

  // Fresh delta/predictive checkpoint on the conditional task.
  std::string fresh_checkpoint() {
    const Outcome o = run({"train", "--task", "conditional", "--loss", "delta", "--score-path", "predictive",
                           "--steps", "0", "--out", dir("ckpt")});
    EXPECT_EQ(o.code, cli::kExitOk) << o.err;
    return dir("ckpt") + "/checkpoint.json";
  }

  // A CSV of x,y rows from the conditional task.
  std::string input_csv(std::size_t n = 8) {
    const std::string path = dir("input.csv");
    save_csv(path, sample_task(ConditionalTask{}, n, 5));
    return path;
  }

  fs::path root_;
};

TEST_F(Cli, TrainZeroStepsWritesTheInitialModel) {
  const Outcome o = run({"train", "--steps", "0", "--seed", "3", "--out", dir("a")});
  ASSERT_EQ(o.code, cli::kExitOk) << o.err;
  const Checkpoint ck = load_checkpoint(dir("a") + "/checkpoint.json");
  const json cfg = json::parse(slurp(dir("a") + "/train_config.json"));
  const MlpSpec spec = ck.model.spec();
  EXPECT_EQ(ck.model, Mlp::init(spec, cfg["model"]["seed"].get<std::uint64_t>()));
  EXPECT_TRUE(fs::exists(dir("a") + "/metrics.csv"));
}

TEST_F(Cli, IdenticalRunsAreByteIdentical) {
  for (const char* d : {"a", "b"}) {
    ASSERT_EQ(run({"train", "--steps", "50", "--set", "train.eval_every=10", "--out", dir(d)}).code, 0);
  }
  EXPECT_EQ(slurp(dir("a") + "/metrics.csv"), slurp(dir("b") + "/metrics.csv"));
  EXPECT_EQ(slurp(dir("a") + "/checkpoint.json"), slurp(dir("b") + "/checkpoint.json"));
}

TEST_F(Cli, RerunFromResolvedConfigIsByteIdentical) {
  ASSERT_EQ(run({"train", "--task", "conditional", "--loss", "delta", "--steps", "40", "--lr", "1e-3",
                 "--threads", "1", "--out", dir("a")})
                .code,
            0);
  ASSERT_EQ(run({"train", "--config", dir("a") + "/train_config.json", "--out", dir("b")}).code, 0);
  EXPECT_EQ(slurp(dir("a") + "/metrics.csv"), slurp(dir("b") + "/metrics.csv"));
  EXPECT_EQ(slurp(dir("a") + "/checkpoint.json"), slurp(dir("b") + "/checkpoint.json"));
}

TEST_F(Cli, NceWithPredictiveScoresIsAConfigError) {
  const Outcome o = run({"train", "--loss", "nce", "--score-path", "predictive", "--out", dir("a")});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("score_path"), std::string::npos) << o.err;
  EXPECT_FALSE(fs::exists(dir("a") + "/checkpoint.json"));
}

TEST_F(Cli, UnknownFlagsAndKeysAreUsageErrors) {
  EXPECT_EQ(run({"train", "--bogus", "1"}).code, cli::kExitUsage);
  const Outcome o = run({"train", "--set", "train.lrr=1", "--out", dir("a")});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("train.lrr"), std::string::npos) << o.err;
  EXPECT_EQ(run({"train", "--threads", "0", "--out", dir("b")}).code, cli::kExitUsage);
  EXPECT_EQ(run({}).code, cli::kExitUsage);
}

TEST_F(Cli, HelpListsTheCommonFlags) {
  const Outcome o = run({"train", "--help"});
  EXPECT_EQ(o.code, 0);
  for (const char* flag : {"--config", "--set", "--seed", "--out", "--threads", "--loss", "--resume"}) {
    EXPECT_NE(o.out.find(flag), std::string::npos) << flag;
  }
}

TEST_F(Cli, OutputDirectoryDefaultsToEnvironment) {
  ::setenv("EBMLAB_OUT", dir("env").c_str(), 1);
  const Outcome o = run({"train", "--steps", "0"});
  ::unsetenv("EBMLAB_OUT");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_TRUE(fs::exists(dir("env") + "/checkpoint.json"));
  EXPECT_TRUE(fs::exists(dir("env") + "/train_config.json"));
}

TEST_F(Cli, ResumeContinuesFromAnIntermediateCheckpoint) {
  ASSERT_EQ(run({"train", "--steps", "60", "--set", "train.checkpoint_every=30", "--out", dir("full")}).code, 0);
  const std::string mid = dir("full") + "/checkpoints/step_000030.json";
  ASSERT_TRUE(fs::exists(mid));
  ASSERT_EQ(run({"train", "--steps", "60", "--resume", mid, "--out", dir("resumed")}).code, 0);
  EXPECT_EQ(slurp(dir("full") + "/checkpoint.json"), slurp(dir("resumed") + "/checkpoint.json"));
}

TEST_F(Cli, OneStepRefinesEveryInputRow) {
  const std::string ck = fresh_checkpoint();
  const std::string in = input_csv();
  const Outcome o = run({"sample", "--task", "conditional", "--checkpoint", ck, "--method", "one-step",
                         "--input", in, "--out", dir("s")});
  ASSERT_EQ(o.code, 0) << o.err;
  const Dataset src = load_csv(in, 2, true);
  const Dataset res = load_csv(dir("s") + "/samples.csv", 2, true);
  ASSERT_EQ(res.size(), src.size());
  EXPECT_EQ(res.x.values, src.x.values);
  const Checkpoint model = load_checkpoint(ck);
  Graph g;
  const BoundMlp net(g, model.model, false);
  const Array s = evaluate_score(ScoreSource::from_model(net), src.x, src.y);
  for (std::size_t i = 0; i < s.numel(); ++i) EXPECT_NEAR(res.y.values[i], src.y.values[i] + s.values[i], 1e-15);
}

TEST_F(Cli, ZeroStepLangevinReturnsTheInputs) {
  const std::string ck = fresh_checkpoint();
  const std::string in = input_csv();
  ASSERT_EQ(run({"sample", "--task", "conditional", "--checkpoint", ck, "--steps", "0", "--input", in,
                 "--out", dir("s")})
                .code,
            0);
  EXPECT_EQ(load_csv(dir("s") + "/samples.csv", 2, true).y.values, load_csv(in, 2, true).y.values);
}

TEST_F(Cli, NoiselessDenoiseReproducesLangevinFiles) {
  const std::string ck = fresh_checkpoint();
  const std::string in = input_csv();
  ASSERT_EQ(run({"sample", "--task", "conditional", "--checkpoint", ck, "--method", "langevin", "--rho", "0.05",
                 "--steps", "20", "--input", in, "--out", dir("l")})
                .code,
            0);
  ASSERT_EQ(run({"sample", "--task", "conditional", "--checkpoint", ck, "--method", "denoise", "--alpha", "1",
                 "--beta", "0.05", "--sigma", "0", "--steps", "20", "--input", in, "--out", dir("d")})
                .code,
            0);
  EXPECT_EQ(slurp(dir("l") + "/samples.csv"), slurp(dir("d") + "/samples.csv"));
  EXPECT_EQ(slurp(dir("l") + "/trajectory.csv"), slurp(dir("d") + "/trajectory.csv"));
}

TEST_F(Cli, SampleNeedsAReadableCheckpoint) {
  EXPECT_EQ(run({"sample", "--out", dir("a")}).code, cli::kExitUsage);
  EXPECT_EQ(run({"sample", "--checkpoint", dir("missing.json"), "--out", dir("b")}).code, cli::kExitUsage);
}

TEST_F(Cli, DivergentSamplerExitsWithNumericCode) {
  const std::string ck = fresh_checkpoint();
  const Outcome o = run({"sample", "--task", "conditional", "--checkpoint", ck, "--rho", "1e9", "--steps", "5",
                         "--n", "4", "--out", dir("s")});
  EXPECT_EQ(o.code, cli::kExitNumeric);
  EXPECT_NE(o.err.find("at step"), std::string::npos) << o.err;
}

TEST_F(Cli, GradcheckOnFreshInitPasses) {
  const Outcome o = run({"eval", "--suite", "gradcheck", "--out", dir("e")});
  EXPECT_EQ(o.code, 0) << o.out << o.err;
  const json report = json::parse(slurp(dir("e") + "/report.json"));
  EXPECT_EQ(report["passed"], true);
  EXPECT_EQ(run({"gradcheck", "--score-path", "predictive", "--out", dir("g")}).code, 0);
}

TEST_F(Cli, HutchinsonSuiteReportsZ) {
  const Outcome o = run({"eval", "--suite", "hutchinson", "--draws", "10000", "--out", dir("e")});
  EXPECT_EQ(o.code, 0) << o.out;
  const json report = json::parse(slurp(dir("e") + "/report.json"));
  bool found = false;
  for (const auto& m : report["metrics"]) found = found || m["name"] == "abs_z";
  EXPECT_TRUE(found);
}

TEST_F(Cli, StepSweepPrintsOneRowPerStepCount) {
  const std::string ck = fresh_checkpoint();
  const Outcome o = run({"eval", "--suite", "step-sweep", "--checkpoint", ck, "--steps", "0,1,10,50,100",
                         "--out", dir("e")});
  ASSERT_NE(o.code, cli::kExitUsage) << o.err;
  std::ifstream in(dir("e") + "/sweep.csv");
  std::string line;
  std::vector<std::string> firsts;
  std::getline(in, line);
  while (std::getline(in, line)) firsts.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(firsts, (std::vector<std::string>{"0", "1", "10", "50", "100"}));
}

TEST_F(Cli, ScoreFieldThresholdFailureExitsWithOne) {
  const Outcome o = run({"eval", "--task", "mixture", "--suite", "score-field", "--out", dir("e")});
  EXPECT_EQ(o.code, cli::kExitThreshold) << o.out << o.err;
  EXPECT_TRUE(fs::exists(dir("e") + "/grid.csv"));
}

TEST_F(Cli, OverridePrecedence) {
  const std::string file = dir("cfg.json");
  std::ofstream(file) << R"({"train": {"lr": 0.5, "steps": 7}, "seed": 9})";
  const json cfg = cli::resolve_config("train", json::parse(slurp(file)),
                                       {cli::parse_override("train.lr=0.25"), {"seed", 4}});
  EXPECT_EQ(cfg["train"]["lr"], 0.25);
  EXPECT_EQ(cfg["train"]["steps"], 7);
  EXPECT_EQ(cfg["seed"], 4);
  EXPECT_EQ(cli::parse_override("task.kind=ring").second, "ring");
  EXPECT_THROW(cli::parse_override("novalue"), ConfigError);
}

}  // namespace
}  // namespace ebmlab
