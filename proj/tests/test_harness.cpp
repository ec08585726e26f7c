#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rlvr/harness.hpp"

using namespace rlvr;
namespace fs = std::filesystem;

namespace {

const std::string kDemo = std::string(RLVR_SOURCE_DIR) + "/configs/demo.cfg";

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "rlvr_test_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<nlohmann::json> read_log(const fs::path& dir) {
  std::ifstream in(dir / "run_log.jsonl");
  std::vector<nlohmann::json> out;
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line));
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int train(const fs::path& dir, std::map<std::string, std::string> env = {}) {
  env["RLVR_OUTPUT__DIR"] = dir.string();
  std::ostringstream out, err;
  return cmd_train(kDemo, std::nullopt, env, out, err);
}

int cli(const std::string& args) {
  const int rc = std::system((std::string(RLVR_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// Full 300-step demo runs, penalty on and off, shared by the tests below.
class DemoRuns : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    on_ = new fs::path(scratch("demo_on"));
    off_ = new fs::path(scratch("demo_off"));
    ASSERT_EQ(train(*on_), kExitOk);
    ASSERT_EQ(train(*off_, {{"RLVR_PENALTY__ENABLED", "false"}}), kExitOk);
  }
  static void TearDownTestSuite() {
    delete on_;
    delete off_;
  }
  static fs::path* on_;
  static fs::path* off_;
};

fs::path* DemoRuns::on_ = nullptr;
fs::path* DemoRuns::off_ = nullptr;

}  // namespace

TEST_F(DemoRuns, PenaltyOnShortensResponses) {
  const auto log = read_log(*on_);
  ASSERT_EQ(log.size(), 300u);
  for (std::size_t i = 0; i < log.size(); ++i) ASSERT_EQ(log[i]["step"], i + 1);
  EXPECT_LT(log.back()["eval"]["mean_length"].get<double>(),
            log.front()["eval"]["mean_length"].get<double>());
  EXPECT_FALSE(log.front().contains("wall_time"));
  for (const char* key : {"mean_reward", "mean_length", "accuracy", "kl_to_reference", "alpha_eff"})
    EXPECT_TRUE(log.front().contains(key)) << key;
  EXPECT_TRUE(fs::exists(*on_ / "checkpoint_step100.json"));
  EXPECT_TRUE(fs::exists(*on_ / "checkpoint.json"));
  EXPECT_TRUE(fs::exists(*on_ / "final_metrics.json"));
}

TEST_F(DemoRuns, PenaltyOffIsNotShorter) {
  const auto on = read_log(*on_).back()["eval"]["mean_length"].get<double>();
  const auto off = read_log(*off_).back()["eval"]["mean_length"].get<double>();
  EXPECT_GE(off, on);
}

TEST_F(DemoRuns, ResumeContinuesCounter) {
  const fs::path dir = scratch("resume_plain");
  ResumeRequest req;
  req.checkpoint = (*on_ / "checkpoint.json").string();
  req.overrides["output.dir"] = dir.string();
  req.extra_steps = 1;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_resume(req, out, err), kExitOk) << err.str();
  const auto log = read_log(dir);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0]["step"], 301);
  EXPECT_FALSE(log[0].contains("reset"));
}

TEST_F(DemoRuns, ResumeRecordsOverride) {
  const fs::path dir = scratch("resume_lr");
  ResumeRequest req;
  req.checkpoint = (*on_ / "checkpoint.json").string();
  req.overrides = {{"output.dir", dir.string()}, {"learning_rate", "0.05"}};
  req.extra_steps = 2;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_resume(req, out, err), kExitOk) << err.str();
  const auto log = read_log(dir);
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0]["reset"]["from_step"], 300);
  EXPECT_EQ(log[0]["reset"]["overrides"]["learning_rate"], 0.05);
  EXPECT_FALSE(log[1].contains("reset"));
  // The re-anchored reference starts at zero KL.
  EXPECT_LT(log[0]["kl_to_reference"].get<double>(), read_log(*on_).back()["kl_to_reference"].get<double>());
  const Checkpoint ck = load_checkpoint((dir / "checkpoint.json").string());
  EXPECT_EQ(ck.state.hyper.learning_rate, 0.05);
  EXPECT_EQ(ck.state.step, 302);
}

TEST_F(DemoRuns, EvalBudgetCurvesAreMonotone) {
  const fs::path dir = scratch("eval");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_eval_budget((*on_ / "checkpoint.json").string(), kDemo,
                            (dir / "curve.csv").string(), {{"RLVR_EVAL__ROLLOUTS", "2000"}},
                            out, err),
            kExitOk)
      << err.str();
  for (const char* mode : {"thinking", "non_thinking"}) {
    std::ifstream in(dir / (std::string("curve_") + mode + ".csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "budget,accuracy");
    double prev = -1.0;
    int rows = 0;
    while (std::getline(in, line)) {
      const double acc = std::stod(line.substr(line.find(',') + 1));
      EXPECT_GE(acc, prev);
      prev = acc;
      ++rows;
    }
    EXPECT_EQ(rows, 7);
  }
}

TEST(Harness, IdenticalSeedsGiveIdenticalLogs) {
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c");
  ASSERT_EQ(train(a, {{"RLVR_STEPS", "15"}}), kExitOk);
  ASSERT_EQ(train(b, {{"RLVR_STEPS", "15"}}), kExitOk);
  ASSERT_EQ(train(c, {{"RLVR_STEPS", "15"}, {"RLVR_SEED", "7"}}), kExitOk);
  EXPECT_EQ(slurp(a / "run_log.jsonl"), slurp(b / "run_log.jsonl"));
  EXPECT_NE(slurp(a / "run_log.jsonl"), slurp(c / "run_log.jsonl"));
  // Checkpoints differ only in the embedded output directory.
  Checkpoint ca = load_checkpoint((a / "checkpoint.json").string());
  const Checkpoint cb = load_checkpoint((b / "checkpoint.json").string());
  ca.config.output.dir = cb.config.output.dir;
  EXPECT_EQ(checkpoint_text(ca), checkpoint_text(cb));
}

TEST(Harness, KillAndResumeMatchesStraightRun) {
  const fs::path straight = scratch("straight"), split = scratch("split");
  ASSERT_EQ(train(straight, {{"RLVR_STEPS", "20"}}), kExitOk);
  ASSERT_EQ(train(split, {{"RLVR_STEPS", "20"}, {"RLVR_OUTPUT__CHECKPOINT_INTERVAL", "8"}}),
            kExitOk);
  ResumeRequest req;
  req.checkpoint = (split / "checkpoint_step8.json").string();
  req.overrides = {{"output.dir", (split / "resumed").string()}, {"steps", "20"}};
  std::ostringstream out, err;
  ASSERT_EQ(cmd_resume(req, out, err), kExitOk) << err.str();
  const Checkpoint a = load_checkpoint((straight / "checkpoint.json").string());
  const Checkpoint b = load_checkpoint((split / "resumed" / "checkpoint.json").string());
  EXPECT_EQ(a.state, b.state);
  const auto la = read_log(straight), lb = read_log(split / "resumed");
  ASSERT_EQ(lb.size(), 12u);
  for (std::size_t i = 0; i < lb.size(); ++i) EXPECT_EQ(la[8 + i], lb[i]);
}

TEST(Harness, ConfigErrors) {
  const fs::path dir = scratch("bad");
  EXPECT_EQ(train(dir, {{"RLVR_STEPS", "0"}}), kExitConfig);
  EXPECT_EQ(train(dir, {{"RLVR_PENALTY__ALPH", "1"}}), kExitConfig);
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train("/nonexistent.cfg", std::nullopt, {}, out, err), kExitConfig);
  EXPECT_NE(err.str().find("config error"), std::string::npos);
}

TEST(Harness, ResumeErrors) {
  const fs::path dir = scratch("resume_err");
  ASSERT_EQ(train(dir, {{"RLVR_STEPS", "3"}}), kExitOk);
  const std::string text = slurp(dir / "checkpoint.json");
  std::ofstream(dir / "truncated.json", std::ios::binary) << text.substr(0, text.size() / 3);
  const std::string log_before = slurp(dir / "run_log.jsonl");

  std::ostringstream out, err;
  ResumeRequest truncated;
  truncated.checkpoint = (dir / "truncated.json").string();
  EXPECT_EQ(cmd_resume(truncated, out, err), kExitCheckpoint);
  EXPECT_EQ(slurp(dir / "run_log.jsonl"), log_before);

  ResumeRequest forbidden;
  forbidden.checkpoint = (dir / "checkpoint.json").string();
  forbidden.overrides = {{"group_size", "4"}};
  EXPECT_EQ(cmd_resume(forbidden, out, err), kExitConfig);
  forbidden.overrides = {{"steps", "2"}};
  EXPECT_EQ(cmd_resume(forbidden, out, err), kExitConfig);
  EXPECT_EQ(slurp(dir / "run_log.jsonl"), log_before);
}

TEST(Harness, ProviderFailurePreservesCheckpoint) {
  const fs::path dir = scratch("provider");
  EXPECT_EQ(train(dir, {{"RLVR_PROVIDER__KIND", "remote"},
                        {"RLVR_PROVIDER__ADDRESS", "127.0.0.1:1"},
                        {"RLVR_PROVIDER__TIMEOUT_MS", "100"},
                        {"RLVR_PROVIDER__RETRIES", "0"}}),
            kExitProvider);
  EXPECT_EQ(load_checkpoint((dir / "checkpoint.json").string()).state.step, 0);
}

TEST(Harness, RemoteProviderTrainsLikeLocal) {
  ProviderServer server;
  server.start();
  const fs::path local = scratch("local"), remote = scratch("remote");
  ASSERT_EQ(train(local, {{"RLVR_STEPS", "4"}}), kExitOk);
  ASSERT_EQ(train(remote, {{"RLVR_STEPS", "4"},
                           {"RLVR_PROVIDER__KIND", "remote"},
                           {"RLVR_PROVIDER__ADDRESS", server.address()}}),
            kExitOk);
  EXPECT_EQ(slurp(local / "run_log.jsonl"), slurp(remote / "run_log.jsonl"));
}

TEST(Harness, UniformPolicyCurveMatchesEnumeration) {
  TrainConfig cfg = load_config(kDemo);
  cfg.init_thinking.clear();
  cfg.init_non_thinking.clear();
  const PolicyParams uniform = initial_params(cfg);
  const auto heldout = heldout_tasks(cfg);
  LocalProvider provider(cfg.verifier);
  for (bool mode : {true, false}) {
    const auto sampled = sample_results(heldout, uniform, cfg.env, mode, 10000, cfg.seed, provider);
    const auto exact = expected_results(rollout_tasks(heldout, 10000), uniform, cfg.env, mode);
    const auto a = budget_curve(sampled, cfg.budgets), b = budget_curve(exact, cfg.budgets);
    for (std::size_t i = 0; i < a.accuracy.size(); ++i)
      EXPECT_NEAR(a.accuracy[i], b.accuracy[i], 0.02) << cfg.budgets[i];
  }
}

TEST(Harness, ThinkingPriorDominatesAtLargeBudgets) {
  const TrainConfig cfg = load_config(kDemo);
  const PolicyParams init = initial_params(cfg);
  const auto heldout = heldout_tasks(cfg);
  const auto think = budget_curve(expected_results(heldout, init, cfg.env, true), cfg.budgets);
  const auto plain = budget_curve(expected_results(heldout, init, cfg.env, false), cfg.budgets);
  EXPECT_GT(think.accuracy.back(), plain.accuracy.back());
  EXPECT_LT(think.accuracy.front(), plain.accuracy.front());
}

TEST(Harness, RolloutKeyFollowsPromptProtocol) {
  TaskInstance t;
  t.family = TaskFamily::kCode;
  t.prompt = "write f [|BlueThink|]";
  EXPECT_EQ(rollout_key(t), (PolicyKey{TaskFamily::kCode, false}));
  t.think_mode = true;
  EXPECT_EQ(rollout_key(t), (PolicyKey{TaskFamily::kCode, true}));
}

TEST(RewardCheck, LineExamples) {
  const VerifierConfig v;
  std::string think = "<think>";
  for (int i = 0; i < 10; ++i) think += "s" + std::to_string(i) + " ";
  think += "</think>";
  const auto clean = reward_check_line(
      nlohmann::json{{"id", "a"}, {"response_text", think + "\\box[42]"}, {"ground_truth", "42"}}.dump(),
      1, v);
  EXPECT_EQ(clean["answer_reward"], 1.0);
  EXPECT_EQ(clean["format_coef"], 1.0);
  EXPECT_EQ(clean["repetition_coef"], 1.0);
  EXPECT_EQ(clean["rule_reward"], 1.0);
  EXPECT_EQ(clean["id"], "a");
  const auto two = reward_check_line(
      nlohmann::json{{"response_text", think + "\\box[42] \\box[42]"}, {"ground_truth", 42}}.dump(), 2, v);
  EXPECT_EQ(two["format_coef"], 0.1);
  const auto bad = reward_check_line("{not json", 3, v);
  EXPECT_EQ(bad["line"], 3);
  EXPECT_TRUE(bad.contains("error"));
  const auto missing = reward_check_line(R"({"id":"m","response_text":"x"})", 4, v);
  EXPECT_EQ(missing["id"], "m");
  EXPECT_TRUE(missing.contains("error"));
}

TEST(RewardCheck, FileOrderPreservedAndErrorsContinue) {
  const fs::path dir = scratch("check");
  std::ofstream(dir / "in.jsonl") << R"({"id":"1","response_text":"\\box[1]","ground_truth":"1"})" "\n"
                                  << "garbage\n\n"
                                  << R"({"id":"3","response_text":"\\box[2]","ground_truth":"1"})" "\n";
  std::ostringstream out, err;
  ASSERT_EQ(cmd_reward_check((dir / "in.jsonl").string(), (dir / "out.jsonl").string(), {}, out, err),
            kExitOk);
  std::ifstream in(dir / "out.jsonl");
  std::vector<nlohmann::json> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0]["id"], "1");
  EXPECT_EQ(rows[1]["line"], 2);
  EXPECT_EQ(rows[2]["id"], "3");
  EXPECT_EQ(rows[2]["answer_reward"], 0.0);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(cli(""), kExitConfig);
  EXPECT_EQ(cli("train"), kExitConfig);
  EXPECT_EQ(cli("train --config /nonexistent.cfg"), kExitConfig);
  EXPECT_EQ(cli("resume --checkpoint /nonexistent.json"), kExitCheckpoint);
  const int rc = std::system(("RLVR_STEPS=0 " + std::string(RLVR_CLI) + " train --config " +
                              kDemo + " >/dev/null 2>&1").c_str());
  EXPECT_EQ(WEXITSTATUS(rc), kExitConfig);
  const std::string env = "RLVR_STEPS=2 RLVR_OUTPUT__DIR=" + dir.string() + " ";
  EXPECT_EQ(std::system((env + RLVR_CLI + " train --config " + kDemo + " >/dev/null").c_str()), 0);
  EXPECT_EQ(read_log(dir).size(), 2u);
  EXPECT_EQ(cli("resume --checkpoint " + (dir / "checkpoint.json").string() +
                " --set seed=3"),
            kExitConfig);
  EXPECT_EQ(cli("reward-check --in /nonexistent --out " + (dir / "o.jsonl").string()),
            kExitConfig);
  EXPECT_EQ(cli("--help"), 0);
}
