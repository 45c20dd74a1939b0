#include <gtest/gtest.h>

#include <filesystem>

#include "support/tiny_config.hpp"
#include "vllr/commands.hpp"
#include "vllr/experiment.hpp"

using namespace vllr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "vllr_trainer_tests" / name;
  fs::remove_all(d);
  return d;
}

struct Run {
  std::vector<nlohmann::json> records;
  TrainResult result;
};

Run run_tiny(const ExperimentConfig& cfg, const fs::path& dir = {}) {
  const auto tr = train_houses(cfg);
  const auto te = test_houses(cfg);
  const auto pre = pretrain(cfg, tr);
  Run r;
  TrainIo io;
  io.run_dir = dir;
  io.on_record = [&r](const nlohmann::json& j) { r.records.push_back(j); };
  r.result = train(cfg, pre.bc.policy, tr, te, io);
  return r;
}

}  // namespace

TEST(Trainer, StagesAreLoggedInOrder) {
  const auto cfg = testing_support::tiny_config();
  const auto run = run_tiny(cfg);
  std::vector<std::string> stages;
  for (const auto& r : run.records) stages.push_back(r["stage"]);
  const auto first = [&](const std::string& s) { return std::find(stages.begin(), stages.end(), s) - stages.begin(); };
  const auto last = [&](const std::string& s) {
    return static_cast<long>(stages.rend() - std::find(stages.rbegin(), stages.rend(), s)) - 1;
  };
  EXPECT_EQ(first("value_init"), 0);
  EXPECT_LT(last("value_init"), first("value_init_summary"));
  EXPECT_LT(first("value_init_summary"), first("boundary"));
  EXPECT_LT(first("boundary"), first("finetune"));
  EXPECT_EQ(stages.back(), "final_eval");
  EXPECT_GE(run.result.stage1_steps, cfg.train.stage1_steps);
  EXPECT_GE(run.result.stage2_steps, cfg.train.stage2_steps);
}

TEST(Trainer, StageOneLeavesThePolicyUntouched) {
  const auto run = run_tiny(testing_support::tiny_config());
  EXPECT_EQ(run.result.value_init.policy_hash_before, run.result.value_init.policy_hash_after);
  for (const auto& r : run.records) {
    if (r["stage"] == "value_init_summary") {
      EXPECT_TRUE(r["policy_hash_unchanged"].get<bool>());
    }
  }
}

TEST(Trainer, GatingShowsUpInTheLogs) {
  const auto run = run_tiny(testing_support::tiny_config());
  bool saw_extrinsic = false;
  for (const auto& r : run.records) {
    if (r["stage"] == "value_init" && r["mean_extrinsic_reward"].get<double>() > 0.0) saw_extrinsic = true;
    if (r["stage"] == "finetune") {
      EXPECT_GT(r["mean_self_certainty"].get<double>(), 0.0);
    }
  }
  EXPECT_TRUE(saw_extrinsic);
}

TEST(Trainer, BaseArmSkipsStageOneAndSelfCertainty) {
  const auto base = arm_config(testing_support::tiny_config(), default_arms()[0]);
  EXPECT_EQ(base.train.stage1_steps, 0);
  EXPECT_EQ(base.weights.w.beta, 0.0);
  const auto run = run_tiny(base);
  EXPECT_EQ(run.result.stage1_steps, 0);
  EXPECT_EQ(run.records.front()["stage"], "boundary");
  for (const auto& r : run.records) EXPECT_NE(r["stage"], "value_init");
}

TEST(Trainer, RunsAreByteIdentical) {
  const auto cfg = testing_support::tiny_config(5);
  const fs::path a = fresh_dir("a"), b = fresh_dir("b");
  run_tiny(cfg, a);
  run_tiny(cfg, b);
  EXPECT_EQ(read_file(a / "metrics.jsonl"), read_file(b / "metrics.jsonl"));
  for (const char* ck : {"stage1.ckpt", "latest.ckpt", "final.ckpt"}) {
    ASSERT_TRUE(fs::exists(a / "checkpoints" / ck)) << ck;
    EXPECT_EQ(read_file(a / "checkpoints" / ck), read_file(b / "checkpoints" / ck)) << ck;
  }
}

TEST(Trainer, MismatchedInitialPolicyIsRejected) {
  const auto cfg = testing_support::tiny_config();
  const auto tr = train_houses(cfg);
  EXPECT_THROW(train(cfg, make_policy(10, 10, {4}, 1), tr, tr), Error);
}

TEST(Commands, TrainWritesASelfDescribingRunDirectory) {
  auto cfg = testing_support::tiny_config();
  const fs::path dir = fresh_dir("cmd_train");
  std::ostringstream log;
  const auto report = cmd_train(cfg, dir, "", log);
  for (const char* f : {"config.json", "manifest.json", "metrics.jsonl", "report.json", "report.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const auto manifest = read_json_file((dir / "manifest.json").string());
  EXPECT_EQ(manifest["status"], "ok");
  EXPECT_EQ(manifest["config_hash"], config_hash(cfg));
  EXPECT_EQ(config_hash(config_from_json(read_json_file((dir / "config.json").string()))), config_hash(cfg));

  const fs::path eval_dir = fresh_dir("cmd_eval");
  const auto r = cmd_eval(cfg, eval_dir, (dir / "checkpoints" / "final.ckpt").string(), "");
  EXPECT_EQ(to_json(r).dump(), to_json(report).dump());
  EXPECT_TRUE(fs::exists(eval_dir / "report.csv"));

  auto other = cfg;
  other.env.cfg.view_radius = 2;
  EXPECT_THROW(cmd_eval(other, fresh_dir("cmd_eval2"), (dir / "checkpoints" / "final.ckpt").string(), ""), Error);
}
