#include <gtest/gtest.h>

#include <random>

#include "oracles/gae.hpp"
#include "oracles/gradcheck.hpp"
#include "vllr/ppo.hpp"
#include "vllr/trainer.hpp"

using namespace vllr;

namespace {

std::vector<double> random_obs(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> o(static_cast<std::size_t>(dim));
  for (double& v : o) v = g(rng);
  return o;
}

RolloutBuffer single_env_buffer(Stage stage, const std::vector<double>& rewards, const std::vector<double>& values,
                                const std::vector<bool>& dones, double last_value) {
  RolloutBuffer b;
  b.stage = stage;
  b.num_envs = 1;
  b.rollout_length = static_cast<int>(rewards.size());
  b.steps.resize(1);
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    StepRecord r;
    r.reward = rewards[t];
    r.value = values[t];
    r.done = dones[t];
    b.steps[0].push_back(r);
  }
  b.last_values = {last_value};
  return b;
}

}  // namespace

TEST(Policy, ZeroWeightsGiveUniform) {
  PolicyParams p{Mlp({12, 16, 10})};
  std::vector<double> obs(12, 0.3);
  const auto d = forward_policy(p, obs);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i], 0.1);
  EXPECT_EQ(self_certainty(d), 0.0);
}

TEST(Policy, ProbabilitiesValidAndPure) {
  std::mt19937_64 rng(1);
  const auto p = make_policy(20, 10, {32, 32}, 5);
  for (int i = 0; i < 50; ++i) {
    const auto obs = random_obs(rng, 20);
    const auto a = action_probabilities(p, obs);
    const auto b = action_probabilities(p, obs);
    EXPECT_EQ(a, b);
    double sum = 0.0;
    for (double x : a) {
      EXPECT_GT(x, 0.0);
      EXPECT_LT(x, 1.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Policy, ShapeMismatchRejected) {
  const auto p = make_policy(20, 10, {8}, 5);
  std::vector<double> wrong(19, 0.0);
  EXPECT_THROW(action_probabilities(p, wrong), Error);
}

TEST(Gradients, PolicyAndValueMatchFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto toy = oracle::make_toy_problem(seed);
    const auto r = oracle::check_gradients(toy, 64, seed * 7);
    EXPECT_LT(r.max_rel_error_policy, 1e-4);
    EXPECT_LT(r.max_rel_error_value, 1e-4);
  }
}

TEST(Gradients, ZeroAdvantageStepRaisesEntropy) {
  auto toy = oracle::make_toy_problem(4);
  for (auto& s : toy.samples) s.advantage = 0.0;
  std::vector<double> g(toy.policy.params().size(), 0.0);
  const auto before = policy_loss(toy.policy, toy.samples, 0.2, 0.1, g);
  EXPECT_DOUBLE_EQ(before.surrogate, 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) toy.policy.params()[i] -= 0.05 * g[i];
  const auto after = policy_loss(toy.policy, toy.samples, 0.2, 0.1, {});
  EXPECT_GT(after.entropy, before.entropy);
}

TEST(Gae, MonteCarloLimit) {
  const std::vector<double> r{1.0, 0.5, -0.2, 2.0}, v{0.3, -0.1, 0.7, 0.2};
  const auto buf = single_env_buffer(Stage::kFinetune, r, v, {false, false, false, true}, 9.0);
  const auto adv = gae_advantages(buf, 1.0, 1.0);
  double tail = 0.0;
  for (int t = 3; t >= 0; --t) {
    tail += r[static_cast<std::size_t>(t)];
    EXPECT_NEAR(adv.advantages[0][static_cast<std::size_t>(t)], tail - v[static_cast<std::size_t>(t)], 1e-12);
  }
}

TEST(Gae, OneStepLimit) {
  const std::vector<double> r{1.0, 0.5, -0.2, 2.0}, v{0.3, -0.1, 0.7, 0.2};
  const std::vector<bool> d{false, true, false, false};
  const auto buf = single_env_buffer(Stage::kFinetune, r, v, d, 0.4);
  const double gamma = 0.9;
  const auto adv = gae_advantages(buf, gamma, 0.0);
  for (std::size_t t = 0; t < 4; ++t) {
    const double next = t + 1 < 4 ? v[t + 1] : 0.4;
    EXPECT_NEAR(adv.advantages[0][t], r[t] + gamma * next * (d[t] ? 0.0 : 1.0) - v[t], 1e-12);
  }
}

TEST(Gae, MatchesDirectSummation) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 40);
    std::vector<double> r, v;
    std::vector<bool> d;
    std::vector<oracle::GaeStep> steps;
    for (int t = 0; t < n; ++t) {
      r.push_back(g(rng));
      v.push_back(g(rng));
      d.push_back(rng() % 7 == 0);
      steps.push_back({r.back(), v.back(), d.back()});
    }
    const double last = g(rng);
    const auto buf = single_env_buffer(Stage::kFinetune, r, v, d, last);
    const auto got = gae_advantages(buf, 0.97, 0.9);
    const auto want = oracle::gae_direct(steps, last, 0.97, 0.9);
    for (int t = 0; t < n; ++t) {
      EXPECT_NEAR(got.advantages[0][static_cast<std::size_t>(t)], want[static_cast<std::size_t>(t)], 1e-10);
      EXPECT_NEAR(got.returns[0][static_cast<std::size_t>(t)], want[static_cast<std::size_t>(t)] + v[static_cast<std::size_t>(t)],
                  1e-10);
    }
  }
}

TEST(Finalize, StageOneFiveValueTrace) {
  auto buf = single_env_buffer(Stage::kValueInit, {0, 0, 0, 0, 0}, {0, 0, 0, 0, 0}, {false, false, false, false, true}, 0);
  EpisodeSegment seg;
  seg.length = 5;
  seg.num_subgoals = 5;
  seg.trace = {"e0", {0.1, 0.1, 0.9, 0.2, 0.2}};
  buf.episodes.push_back(seg);
  FinalizeOptions opt;
  opt.half_width = 2;
  opt.weights.alpha = 2.0;
  finalize_rewards(buf, opt);
  const std::vector<double> want{0.1, 0.0, 0.0, 0.1, 0.0};
  for (std::size_t t = 0; t < 5; ++t) EXPECT_DOUBLE_EQ(buf.steps[0][t].reward, 2.0 * want[t]);
}

TEST(Finalize, StageOneAllZeroTrace) {
  auto buf = single_env_buffer(Stage::kValueInit, {0, 0, 0}, {0, 0, 0}, {false, false, true}, 0);
  EpisodeSegment seg;
  seg.length = 3;
  seg.num_subgoals = 2;
  seg.trace = {"z", {0, 0, 0}};
  buf.episodes.push_back(seg);
  finalize_rewards(buf, {});
  for (const auto& s : buf.steps[0]) EXPECT_EQ(s.reward, 0.0);
}

TEST(Finalize, StageOnePriorEstimatesShiftTheWindow) {
  auto buf = single_env_buffer(Stage::kValueInit, {0, 0, 0}, {0, 0, 0}, {false, false, true}, 0);
  EpisodeSegment seg;
  seg.length = 3;
  seg.num_subgoals = 5;
  seg.prior = {0.1, 0.1};
  seg.trace = {"p", {0.9, 0.2, 0.2}};
  buf.episodes.push_back(seg);
  FinalizeOptions opt;
  opt.half_width = 2;
  finalize_rewards(buf, opt);
  EXPECT_EQ(buf.steps[0][0].reward, 0.0);
  EXPECT_DOUBLE_EQ(buf.steps[0][1].reward, 0.1);
  EXPECT_EQ(buf.steps[0][2].reward, 0.0);
}

TEST(Finalize, StageTwoTerminalReward) {
  auto buf = single_env_buffer(Stage::kFinetune, {0, 0}, {0, 0}, {false, true}, 0);
  buf.steps[0][0].r_sc = 1.0;
  buf.steps[0][1].r_sc = 0.5;
  buf.steps[0][1].r_task = 1;
  EpisodeSegment seg;
  seg.length = 2;
  buf.episodes.push_back(seg);
  finalize_rewards(buf, {});
  EXPECT_DOUBLE_EQ(buf.steps[0][0].reward, 0.1);
  EXPECT_DOUBLE_EQ(buf.steps[0][1].reward, 10.05);
}

TEST(Finalize, MisalignmentIsAnError) {
  auto buf = single_env_buffer(Stage::kValueInit, {0, 0, 0}, {0, 0, 0}, {false, false, true}, 0);
  EpisodeSegment seg;
  seg.length = 3;
  seg.num_subgoals = 2;
  seg.trace = {"short", {0.1, 0.2}};
  buf.episodes.push_back(seg);
  EXPECT_THROW(finalize_rewards(buf, {}), Error);

  auto stage2 = single_env_buffer(Stage::kFinetune, {0}, {0}, {true}, 0);
  EpisodeSegment s2;
  s2.length = 1;
  s2.trace = {"x", {0.5}};
  stage2.episodes.push_back(s2);
  EXPECT_THROW(finalize_rewards(stage2, {}), Error);
}

namespace {

struct Fixture {
  std::vector<HouseSpec> houses;
  EpisodeSource source;
  EnvConfig env;
  PolicyParams policy;
  ValueParams value;

  Fixture()
      : houses(make_house_set({}, 10, 12)),
        source(&houses, {TaskKind::kObjNav, TaskKind::kFetch, TaskKind::kRoomVisit}, 3),
        policy(make_policy(env.observation_dim(), env.num_actions, {16}, 1)),
        value(make_value(env.observation_dim(), {16}, 2)) {}

  std::vector<EnvWorker> workers(int n) {
    std::vector<EnvWorker> w;
    for (int i = 0; i < n; ++i) w.emplace_back(&source, env, i, 77);
    return w;
  }
};

}  // namespace

TEST(Rollout, StageTwoBufferHasNoTraces) {
  Fixture f;
  auto w = f.workers(3);
  CollectOptions opt;
  opt.stage = Stage::kFinetune;
  opt.rollout_length = 40;
  const auto buf = collect_rollouts(f.policy, f.value, w, opt);
  EXPECT_EQ(buf.size(), 3u * 40u);
  for (const auto& seg : buf.episodes) EXPECT_TRUE(seg.trace.values.empty());
  for (const auto& env : buf.steps) {
    for (const auto& s : env) {
      EXPECT_EQ(s.r_vlm, 0.0);
      EXPECT_GE(s.r_sc, 0.0);
    }
  }
}

TEST(Rollout, StageOneOracleTracesNondecreasing) {
  Fixture f;
  auto w = f.workers(2);
  CollectOptions opt;
  opt.stage = Stage::kValueInit;
  opt.rollout_length = 120;
  opt.estimator = EstimatorProfile::preset(ProfileKind::kOracle);
  for (int round = 0; round < 2; ++round) {
    const auto buf = collect_rollouts(f.policy, f.value, w, opt);
    for (const auto& seg : buf.episodes) {
      ASSERT_EQ(static_cast<int>(seg.trace.values.size()), seg.length);
      std::vector<double> all = seg.prior;
      all.insert(all.end(), seg.trace.values.begin(), seg.trace.values.end());
      for (std::size_t t = 1; t < all.size(); ++t) EXPECT_GE(all[t], all[t - 1]);
    }
    for (const auto& env : buf.steps) {
      for (const auto& s : env) EXPECT_EQ(s.r_sc, 0.0);
    }
  }
}

TEST(Rollout, ThreadCountDoesNotChangeBuffer) {
  Fixture f;
  auto w1 = f.workers(4), w2 = f.workers(4);
  CollectOptions opt;
  opt.rollout_length = 30;
  opt.num_threads = 1;
  const auto a = collect_rollouts(f.policy, f.value, w1, opt);
  opt.num_threads = 3;
  const auto b = collect_rollouts(f.policy, f.value, w2, opt);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t e = 0; e < a.steps.size(); ++e) {
    for (std::size_t t = 0; t < a.steps[e].size(); ++t) {
      EXPECT_EQ(a.steps[e][t].action, b.steps[e][t].action);
      EXPECT_EQ(a.steps[e][t].logp, b.steps[e][t].logp);
    }
  }
}

TEST(Ppo, FirstEpochRatiosAreOne) {
  Fixture f;
  auto w = f.workers(2);
  CollectOptions opt;
  opt.rollout_length = 64;
  auto buf = collect_rollouts(f.policy, f.value, w, opt);
  finalize_rewards(buf, {});
  auto adv = gae_advantages(buf, 0.99, 0.95);
  normalize_advantages(adv);
  PpoConfig cfg;
  cfg.minibatch_size = 32;
  Learner L(f.policy, f.value, cfg);
  const auto st = ppo_update(L, make_samples(buf, adv), cfg, 1);
  EXPECT_LT(st.first_ratio_dev, 1e-12);
  EXPECT_EQ(st.minibatches, 4 * 4);
}

TEST(Ppo, SeededUpdatesAreDeterministic) {
  Fixture f;
  auto run = [&] {
    auto w = f.workers(2);
    CollectOptions opt;
    opt.rollout_length = 48;
    PpoConfig cfg;
    cfg.minibatch_size = 32;
    Learner L(f.policy, f.value, cfg);
    for (int it = 0; it < 2; ++it) {
      auto buf = collect_rollouts(L.policy, L.value, w, opt);
      finalize_rewards(buf, {});
      auto adv = gae_advantages(buf, 0.99, 0.95);
      normalize_advantages(adv);
      ppo_update(L, make_samples(buf, adv), cfg, 5);
    }
    return std::make_pair(L.policy.net.params(), L.value.net.params());
  };
  EXPECT_EQ(run(), run());
}

TEST(Ppo, NonFiniteLossRaisesWithDump) {
  auto toy = oracle::make_toy_problem(6);
  toy.samples[0].advantage = std::numeric_limits<double>::quiet_NaN();
  PpoConfig cfg;
  cfg.minibatch_size = 8;
  Learner L(PolicyParams{toy.policy}, ValueParams{toy.value}, cfg);
  try {
    ppo_update(L, toy.samples, cfg, 0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumerical);
    EXPECT_TRUE(e.dump().is_array());
    EXPECT_FALSE(e.dump().empty());
  }
}

namespace {

std::vector<Demo> demos_for(int count, std::uint64_t seed) {
  static const auto houses = make_house_set({}, 20, 16);
  EpisodeSource src(&houses, {TaskKind::kObjNav}, seed);
  return collect_demos(src, EnvConfig{}, count, 1);
}

}  // namespace

TEST(BehaviorCloning, MemorizesSingleDemo) {
  const auto demos = demos_for(1, 4);
  PretrainConfig cfg;
  cfg.epochs = 300;
  cfg.hidden = {64};
  cfg.lr = 3e-3;
  const auto r = bc_pretrain(demos, kBaseActions, cfg, 1);
  for (std::size_t t = 0; t < demos[0].actions.size(); ++t) {
    EXPECT_EQ(greedy_action(action_probabilities(r.policy, demos[0].observations[t])), demos[0].actions[t]);
  }
}

TEST(BehaviorCloning, LossHalvesAndIsDeterministic) {
  const auto demos = demos_for(40, 5);
  PretrainConfig cfg;
  cfg.epochs = 60;
  cfg.hidden = {64};
  const auto a = bc_pretrain(demos, kBaseActions, cfg, 3);
  const auto b = bc_pretrain(demos, kBaseActions, cfg, 3);
  EXPECT_LE(a.epoch_losses.back(), 0.5 * a.initial_loss);
  EXPECT_EQ(a.policy.net.params(), b.policy.net.params());
}

TEST(BehaviorCloning, EmptyDemosRejected) {
  EXPECT_THROW(bc_pretrain({}, kBaseActions, PretrainConfig{}, 0), Error);
}
