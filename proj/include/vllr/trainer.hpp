#pragma once

// Two-stage training: value initialization against filtered progress
// rewards with the policy frozen, then PPO on self-certainty plus the sparse
// task reward.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/checkpoint.hpp"
#include "vllr/config.hpp"
#include "vllr/metrics.hpp"
#include "vllr/ppo.hpp"
#include "vllr/rollout.hpp"

namespace vllr {

inline std::vector<HouseSpec> make_house_set(const HouseParams& params, std::uint64_t seed_base, int count) {
  std::vector<HouseSpec> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) out.push_back(generate_house(seed_base + static_cast<std::uint64_t>(i), params));
  return out;
}

inline std::vector<HouseSpec> train_houses(const ExperimentConfig& cfg) {
  return make_house_set(cfg.houses.params, cfg.houses.train_seed_base, cfg.houses.train_count);
}

inline std::vector<HouseSpec> test_houses(const ExperimentConfig& cfg) {
  return make_house_set(cfg.houses.params, cfg.houses.test_seed_base, cfg.houses.test_count);
}

// Line-delimited JSON sink; an empty path discards records.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) fail(ErrorKind::kIo, "cannot write metrics log '" + path.string() + "'");
  }

  void write(const nlohmann::json& record) {
    records_.push_back(record);
    if (out_.is_open()) {
      out_ << record.dump() << '\n';
      out_.flush();
    }
  }

  const std::vector<nlohmann::json>& records() const { return records_; }

 private:
  std::ofstream out_;
  std::vector<nlohmann::json> records_;
};

struct PretrainResult {
  BcResult bc;
  std::vector<Demo> demos;
};

inline PretrainResult pretrain(const ExperimentConfig& cfg, const std::vector<HouseSpec>& houses) {
  EpisodeSource source(&houses, cfg.task_kinds(), counter_hash(cfg.seed, 0xde30ULL, 0, 0));
  PretrainResult r;
  r.demos = collect_demos(source, cfg.env.cfg, cfg.pretrain.demos, 0);
  r.bc = bc_pretrain(r.demos, cfg.env.cfg.num_actions, cfg.pretrain, cfg.seed);
  return r;
}

struct ValueInitSummary {
  double heldout_loss_before = 0.0;
  double heldout_loss_after = 0.0;
  std::int64_t steps = 0;
  std::uint64_t policy_hash_before = 0;
  std::uint64_t policy_hash_after = 0;
};

struct CurvePoint {
  std::int64_t step = 0;
  double success = 0.0;
  double sel = 0.0;
};

struct TrainResult {
  Learner learner;
  ValueInitSummary value_init;
  std::vector<CurvePoint> curve;  // stage II evaluations on held-out houses
  EvalReport final_report;
  std::int64_t stage1_steps = 0;
  std::int64_t stage2_steps = 0;
};

struct TrainIo {
  std::filesystem::path run_dir;  // empty: keep everything in memory
  std::function<void(const nlohmann::json&)> on_record;
};

namespace trainer_detail {

inline std::vector<EnvWorker> make_workers(const EpisodeSource& source, const ExperimentConfig& cfg, std::uint64_t tag) {
  std::vector<EnvWorker> w;
  w.reserve(static_cast<std::size_t>(cfg.ppo.num_envs));
  for (int i = 0; i < cfg.ppo.num_envs; ++i) w.emplace_back(&source, cfg.env.cfg, i, counter_hash(cfg.seed, tag, 0, 0));
  return w;
}

inline RemotePorts remote_ports(const ExperimentConfig& cfg) {
  RemotePorts r;
  const auto& e = cfg.endpoints;
  if (e.decomposer == "external") r.decomposer = e.endpoint(e.decomposer_url);
  if (e.estimator == "external") r.estimator = e.endpoint(e.estimator_url);
  r.estimator_every_k = e.estimator_every_k;
  r.decompose.prompt_template = e.prompt_template;
  return r;
}

inline FinalizeOptions finalize_options(const ExperimentConfig& cfg) {
  return {cfg.weights.w, cfg.filter.half_width, cfg.filter.threshold, cfg.filter.enabled};
}

}  // namespace trainer_detail

// Stage I. Collects rollouts with the policy frozen and regresses the value
// network toward the discounted filtered-progress return.
inline ValueInitSummary value_init_stage(Learner& L, const ExperimentConfig& cfg, const std::vector<HouseSpec>& houses,
                                         MetricsLog& log) {
  ValueInitSummary sum;
  sum.policy_hash_before = L.policy.net.hash();
  const auto kinds = cfg.task_kinds();
  const EstimatorProfile profile = cfg.estimator.resolve();
  CollectOptions opt{Stage::kValueInit, cfg.ppo.rollout_length, cfg.ppo.num_threads, profile,
                     trainer_detail::remote_ports(cfg)};
  const FinalizeOptions fin = trainer_detail::finalize_options(cfg);

  // Held-out buffer from an independent episode stream.
  EpisodeSource heldout_source(&houses, kinds, counter_hash(cfg.seed, 0x4e1dULL, 0, 0));
  auto heldout_workers = trainer_detail::make_workers(heldout_source, cfg, 0x4e1dULL);
  RolloutBuffer heldout = collect_rollouts(L.policy, L.value, heldout_workers, opt);
  finalize_rewards(heldout, fin);
  const auto heldout_adv = gae_advantages(heldout, cfg.ppo.gamma_stage1, cfg.ppo.gae_lambda);
  // Returns are regression targets fixed at collection time.
  const auto heldout_samples = make_samples(heldout, heldout_adv);
  sum.heldout_loss_before = value_loss(L.value.net, heldout_samples, {});

  EpisodeSource source(&houses, kinds, counter_hash(cfg.seed, 0x51ULL, 0, 0));
  auto workers = trainer_detail::make_workers(source, cfg, 0x51ULL);
  int iteration = 0;
  while (sum.steps < cfg.train.stage1_steps) {
    RolloutBuffer buf = collect_rollouts(L.policy, L.value, workers, opt);
    finalize_rewards(buf, fin);
    const auto adv = gae_advantages(buf, cfg.ppo.gamma_stage1, cfg.ppo.gae_lambda);
    const double loss = regress_value(L.value, L.value_opt, make_samples(buf, adv), cfg.ppo.value_epochs_stage1,
                                      cfg.ppo.minibatch_size, cfg.ppo.max_grad_norm,
                                      counter_hash(cfg.seed, 0x51ULL, 1, static_cast<std::uint64_t>(iteration)));
    sum.steps += static_cast<std::int64_t>(buf.size());
    double extrinsic = 0.0;
    for (const auto& env_steps : buf.steps) {
      for (const auto& s : env_steps) extrinsic += s.r_extrinsic;
    }
    log.write({{"step", sum.steps},
               {"stage", "value_init"},
               {"losses", {{"value", loss}}},
               {"mean_extrinsic_reward", extrinsic / static_cast<double>(buf.size())}});
    ++iteration;
  }
  sum.heldout_loss_after = value_loss(L.value.net, heldout_samples, {});
  sum.policy_hash_after = L.policy.net.hash();
  if (sum.policy_hash_after != sum.policy_hash_before) {
    fail(ErrorKind::kContractViolation, "policy parameters changed during value initialization");
  }
  return sum;
}

inline nlohmann::json record_of(const EvalReport& r, std::int64_t step) {
  return {{"step", step}, {"stage", "eval"}, {"success_rate", r.overall.success}, {"sel", r.overall.sel},
          {"episodes", r.overall.episodes}};
}

// Full pipeline from an initial (pretrained) policy.
inline TrainResult train(const ExperimentConfig& cfg, const PolicyParams& initial_policy,
                         const std::vector<HouseSpec>& train_set, const std::vector<HouseSpec>& test_set,
                         const TrainIo& io = {}) {
  cfg.validate();
  const int obs_dim = cfg.env.cfg.observation_dim();
  if (initial_policy.net.input_size() != obs_dim || initial_policy.net.output_size() != cfg.env.cfg.num_actions) {
    fail(ErrorKind::kConfig, "initial policy does not match the configured environment");
  }
  const std::string hash = config_hash(cfg);
  MetricsLog log = io.run_dir.empty() ? MetricsLog() : MetricsLog(io.run_dir / "metrics.jsonl");
  auto emit = [&](const nlohmann::json& rec) {
    log.write(rec);
    if (io.on_record) io.on_record(rec);
  };
  TrainResult res;
  res.learner = Learner(initial_policy, make_value(obs_dim, cfg.ppo.value_hidden, counter_hash(cfg.seed, 0x7a1ULL, 0, 0)),
                        cfg.ppo);
  Learner& L = res.learner;
  auto save = [&](const std::string& name, std::int64_t step, const std::string& stage) {
    if (io.run_dir.empty()) return;
    save_checkpoint(io.run_dir / "checkpoints" / name, Checkpoint{L.policy, L.value, hash, step, stage});
  };

  // Stage I
  if (cfg.train.stage1_steps > 0) {
    MetricsLog stage_log;
    res.value_init = value_init_stage(L, cfg, train_set, stage_log);
    for (const auto& r : stage_log.records()) emit(r);
    emit({{"step", res.value_init.steps},
          {"stage", "value_init_summary"},
          {"losses", {{"heldout_before", res.value_init.heldout_loss_before},
                      {"heldout_after", res.value_init.heldout_loss_after}}},
          {"policy_hash_unchanged", res.value_init.policy_hash_before == res.value_init.policy_hash_after}});
    // The value optimizer restarts for stage II so its moments reflect the new reward scale.
    L.value_opt = Adam(L.value.net.params().size(), cfg.ppo.value_lr);
  }
  res.stage1_steps = res.value_init.steps;
  emit({{"step", 0}, {"stage", "boundary"}, {"event", "finetune_start"}, {"stage1_steps", res.stage1_steps}});
  save("stage1.ckpt", 0, "value_init");

  // Stage II
  const auto kinds = cfg.task_kinds();
  EvalOptions eval_opt{cfg.train.eval_episodes, cfg.eval.seed, cfg.eval.greedy, cfg.env.cfg, hash};
  auto run_eval = [&](std::int64_t step) {
    const EvalReport r = evaluate(L.policy, test_set, kinds, eval_opt);
    res.curve.push_back({step, r.overall.success, r.overall.sel});
    emit(record_of(r, step));
    save("latest.ckpt", step, "finetune");
  };
  EpisodeSource source(&train_set, kinds, counter_hash(cfg.seed, 0x52ULL, 0, 0));
  auto workers = trainer_detail::make_workers(source, cfg, 0x52ULL);
  CollectOptions opt{Stage::kFinetune, cfg.ppo.rollout_length, cfg.ppo.num_threads, cfg.estimator.resolve(), RemotePorts{}};
  const FinalizeOptions fin = trainer_detail::finalize_options(cfg);
  std::int64_t step = 0;
  std::int64_t next_eval = 0;
  if (cfg.train.eval_every > 0) {
    run_eval(0);
    next_eval = cfg.train.eval_every;
  }
  while (step < cfg.train.stage2_steps) {
    RolloutBuffer buf = collect_rollouts(L.policy, L.value, workers, opt);
    finalize_rewards(buf, fin);
    Advantages adv = gae_advantages(buf, cfg.ppo.gamma, cfg.ppo.gae_lambda);
    normalize_advantages(adv);
    const PpoStats st = ppo_update(L, make_samples(buf, adv), cfg.ppo, counter_hash(cfg.seed, 0x99ULL, 0, 0));
    step += static_cast<std::int64_t>(buf.size());
    double r_sc = 0.0;
    for (const auto& env_steps : buf.steps) {
      for (const auto& s : env_steps) r_sc += s.r_sc;
    }
    nlohmann::json rec = {{"step", step},
                          {"stage", "finetune"},
                          {"losses", {{"policy", st.policy_loss}, {"value", st.value_loss}, {"entropy", st.entropy}}},
                          {"clip_frac", st.clip_frac},
                          {"kl", st.approx_kl},
                          {"first_ratio_dev", st.first_ratio_dev},
                          {"mean_self_certainty", r_sc / static_cast<double>(buf.size())},
                          {"episodes", buf.episodes_completed}};
    if (buf.episodes_completed > 0) {
      rec["train_success"] = static_cast<double>(buf.successes) / buf.episodes_completed;
      rec["train_episode_length"] = static_cast<double>(buf.completed_length_sum) / buf.episodes_completed;
    }
    emit(rec);
    if (cfg.train.eval_every > 0 && step >= next_eval) {
      run_eval(step);
      while (next_eval <= step) next_eval += cfg.train.eval_every;
    }
  }
  if (cfg.train.eval_every > 0 && res.curve.back().step != step) run_eval(step);
  res.stage2_steps = step;
  eval_opt.episodes_per_task = cfg.eval.episodes_per_task;
  res.final_report = evaluate(L.policy, test_set, kinds, eval_opt);
  nlohmann::json fin_rec = record_of(res.final_report, step);
  fin_rec["stage"] = "final_eval";
  emit(fin_rec);
  save("final.ckpt", step, "finetune");
  return res;
}

}  // namespace vllr
