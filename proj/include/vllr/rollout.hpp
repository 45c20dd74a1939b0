#pragma once

// Rollout collection for both training stages, reward finalization and GAE.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "vllr/decomposer_client.hpp"
#include "vllr/env.hpp"
#include "vllr/policy.hpp"
#include "vllr/progress.hpp"
#include "vllr/progress_estimator.hpp"
#include "vllr/reward.hpp"
#include "vllr/scene_graph.hpp"

namespace vllr {

// Deterministic stream of (house, task, reset seed) triples. Houses that
// cannot host the drawn task are skipped by redrawing.
class EpisodeSource {
 public:
  EpisodeSource(const std::vector<HouseSpec>* houses, std::vector<TaskKind> kinds, std::uint64_t seed)
      : houses_(houses), kinds_(std::move(kinds)), seed_(seed) {
    if (!houses_ || houses_->empty()) fail(ErrorKind::kInvalidInput, "house set is empty");
    if (kinds_.empty()) fail(ErrorKind::kInvalidInput, "task list is empty");
  }

  // Resets `env` for episode `index` of `stream` and returns the reset result.
  Env::ResetResult start(Env& env, std::uint64_t stream, std::uint64_t index,
                         std::optional<TaskKind> kind_override = std::nullopt) const {
    for (std::uint64_t attempt = 0; attempt < 256; ++attempt) {
      const std::uint64_t h = counter_hash(seed_, stream, index, attempt);
      const TaskKind kind = kind_override.value_or(kinds_[h % kinds_.size()]);
      const auto& house = (*houses_)[splitmix64(h) % houses_->size()];
      try {
        return env.reset(house, kind, splitmix64(h ^ 0x5eedULL));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kTaskAssignment) throw;
      }
    }
    fail(ErrorKind::kTaskAssignment, "no house in the set can host the requested task");
  }

  const std::vector<TaskKind>& kinds() const { return kinds_; }

 private:
  const std::vector<HouseSpec>* houses_;
  std::vector<TaskKind> kinds_;
  std::uint64_t seed_;
};

struct StepRecord {
  std::vector<double> observation;
  int action = 0;
  double logp = 0.0;               // behavior log-probability of `action`
  std::vector<double> probs;       // behavior distribution
  double value = 0.0;
  double r_vlm = 0.0;              // raw progress estimate at this step (stage I only)
  double r_sc = 0.0;               // self-certainty of `probs` (stage II only)
  int r_task = 0;
  bool done = false;
  std::uint64_t episode_id = 0;
  double r_extrinsic = 0.0;        // filtered progress increment, set by finalize_rewards
  double reward = 0.0;             // set by finalize_rewards
};

// One episode's slice of a buffer. `prior` holds progress estimates from
// earlier buffers when the episode started before this one.
struct EpisodeSegment {
  std::uint64_t episode_id = 0;
  int env_index = 0;
  int first_step = 0;  // index into the env's step list
  int length = 0;
  int num_subgoals = 0;
  std::vector<double> prior;
  ProgressTrace trace;  // estimates for the steps of this segment (empty in stage II)
  bool complete = false;
};


struct RolloutBuffer {
  Stage stage = Stage::kFinetune;
  int num_envs = 0;
  int rollout_length = 0;
  std::vector<std::vector<StepRecord>> steps;  // [env][t]
  std::vector<double> last_values;             // V(s_T) per env, 0 when the env just finished
  std::vector<EpisodeSegment> episodes;        // ordered by (env, first_step)
  int episodes_completed = 0;
  int successes = 0;
  std::int64_t completed_length_sum = 0;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.size();
    return n;
  }
};

// Remote services replacing the oracle planner and the synthetic estimator.
struct RemotePorts {
  std::optional<ServiceEndpoint> decomposer;
  std::optional<ServiceEndpoint> estimator;
  int estimator_every_k = 1;
  DecomposeOptions decompose;
};

struct CollectOptions {
  Stage stage = Stage::kFinetune;
  int rollout_length = 128;
  int num_threads = 1;
  EstimatorProfile estimator;
  RemotePorts remote;
};

// Owns one environment, its episode stream and its random stream.
class EnvWorker {
 public:
  EnvWorker(const EpisodeSource* source, EnvConfig env_cfg, int index, std::uint64_t seed)
      : source_(source),
        env_(env_cfg),
        index_(index),
        rng_(counter_hash(seed, 0xacULL, static_cast<std::uint64_t>(index), 0)) {}

  void begin_episode(const CollectOptions& opt) {
    auto rr = source_->start(env_, static_cast<std::uint64_t>(index_), episode_index_);
    episode_id_ = (static_cast<std::uint64_t>(index_) << 40) | episode_index_;
    ++episode_index_;
    if (opt.remote.decomposer && opt.stage == Stage::kValueInit) {
      plan_ = decompose_external(*opt.remote.decomposer, rr.scene_graph, rr.instruction, telemetry_, opt.remote.decompose);
    } else {
      plan_ = decompose_oracle(rr.scene_graph, rr.instruction);
    }
    env_.attach_plan(plan_);
    estimator_.emplace(opt.estimator, episode_id_);
    if (opt.remote.estimator) {
      remote_estimator_.emplace(*opt.remote.estimator, opt.remote.estimator_every_k);
    } else {
      remote_estimator_.reset();
    }
    obs_ = env_.observe();
    prior_.clear();
    active_ = true;
  }

  bool active() const { return active_; }
  Env& env() { return env_; }
  const SubgoalPlan& plan() const { return plan_; }
  std::uint64_t episode_id() const { return episode_id_; }
  const Observation& observation() const { return obs_; }
  std::mt19937_64& rng() { return rng_; }
  // Progress estimate for the transition just taken.
  double estimate(const ProgressQuery& q) {
    const double truth = true_progress(env_.state(), plan_);
    if (remote_estimator_) {
      const double p = remote_estimator_->estimate(q);
      telemetry_.clamp_warnings = remote_estimator_->telemetry().clamp_warnings;
      return p;
    }
    return estimator_->estimate(q, truth);
  }
  const ServiceTelemetry& telemetry() const { return telemetry_; }
  std::vector<double>& prior() { return prior_; }

  void set_observation(Observation o) { obs_ = std::move(o); }
  void finish() { active_ = false; }

 private:
  const EpisodeSource* source_;
  Env env_;
  int index_;
  std::mt19937_64 rng_;
  std::uint64_t episode_index_ = 0;
  std::uint64_t episode_id_ = 0;
  SubgoalPlan plan_;
  std::optional<SyntheticEstimator> estimator_;
  std::optional<ExternalEstimator> remote_estimator_;
  ServiceTelemetry telemetry_;
  Observation obs_;
  std::vector<double> prior_;
  bool active_ = false;
};

namespace rollout_detail {

struct EnvCollect {
  std::vector<EpisodeSegment> segments;
  int completed = 0;
  int successes = 0;
  std::int64_t length_sum = 0;
};

inline EnvCollect collect_env(const PolicyParams& policy, const ValueParams& value, EnvWorker& w,
                              const CollectOptions& opt, std::vector<StepRecord>& steps, double& last_value, int e) {
  EnvCollect out;
  steps.clear();
  steps.reserve(static_cast<std::size_t>(opt.rollout_length));
  auto open_segment = [&](int first) {
    EpisodeSegment seg;
    seg.episode_id = w.episode_id();
    seg.env_index = e;
    seg.first_step = first;
    seg.num_subgoals = w.plan().size();
    seg.prior = w.prior();
    seg.trace.episode_id = std::to_string(w.episode_id());
    out.segments.push_back(std::move(seg));
  };
  if (!w.active()) w.begin_episode(opt);
  open_segment(0);
  for (int t = 0; t < opt.rollout_length; ++t) {
    StepRecord rec;
    rec.observation = w.observation().features;
    rec.probs = action_probabilities(policy, rec.observation);
    rec.action = sample_action(rec.probs, w.rng());
    rec.logp = std::log(rec.probs[static_cast<std::size_t>(rec.action)]);
    rec.value = value_of(value, rec.observation);
    rec.episode_id = w.episode_id();
    StepResult sr = w.env().step(rec.action);
    rec.r_task = sr.r_task;
    rec.done = sr.done;
    if (opt.stage == Stage::kValueInit) {
      const Observation prev{rec.observation};
      ProgressQuery q{&w.plan(), &prev, &sr.observation, w.episode_id(), w.env().state().step_count - 1};
      const double p = w.estimate(q);
      rec.r_vlm = p;
      out.segments.back().trace.values.push_back(p);
      w.prior().push_back(p);
    } else {
      rec.r_sc = self_certainty(ActionDistribution::from_probabilities(rec.probs));
    }
    out.segments.back().length += 1;
    w.set_observation(std::move(sr.observation));
    steps.push_back(std::move(rec));
    if (sr.done) {
      out.segments.back().complete = true;
      ++out.completed;
      out.successes += sr.r_task;
      out.length_sum += w.env().state().step_count;
      w.finish();
      if (t + 1 < opt.rollout_length) {
        w.begin_episode(opt);
        open_segment(t + 1);
      }
    }
  }
  last_value = w.active() ? value_of(value, w.observation().features) : 0.0;
  return out;
}

}  // namespace rollout_detail

// Runs every worker for exactly `rollout_length` steps. Workers may run on
// several threads; the buffer is assembled in worker order, so the thread
// count never changes the result.
inline RolloutBuffer collect_rollouts(const PolicyParams& policy, const ValueParams& value,
                                      std::vector<EnvWorker>& workers, const CollectOptions& opt) {
  if (workers.empty()) fail(ErrorKind::kInvalidInput, "no environments to collect from");
  if (opt.rollout_length < 1) fail(ErrorKind::kInvalidInput, "rollout_length must be positive");
  RolloutBuffer buf;
  buf.stage = opt.stage;
  buf.num_envs = static_cast<int>(workers.size());
  buf.rollout_length = opt.rollout_length;
  buf.steps.resize(workers.size());
  buf.last_values.assign(workers.size(), 0.0);
  std::vector<rollout_detail::EnvCollect> parts(workers.size());
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t e = begin; e < end; ++e) {
      parts[e] = rollout_detail::collect_env(policy, value, workers[e], opt, buf.steps[e], buf.last_values[e],
                                             static_cast<int>(e));
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(static_cast<std::size_t>(opt.num_threads), 1, workers.size());
  if (threads == 1) {
    run(0, workers.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (workers.size() + threads - 1) / threads;
    for (std::size_t i = 0; i < threads; ++i) {
      pool.emplace_back([&, i] {
        try {
          run(i * chunk, std::min(workers.size(), (i + 1) * chunk));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }
  for (auto& p : parts) {
    for (auto& seg : p.segments) buf.episodes.push_back(std::move(seg));
    buf.episodes_completed += p.completed;
    buf.successes += p.successes;
    buf.completed_length_sum += p.length_sum;
  }
  return buf;
}

struct FinalizeOptions {
  RewardWeights weights;
  int half_width = 9;
  double threshold = 0.0;  // 0: 1 / number of subgoals
  bool filter = true;      // false: plain running-maximum increments
};

// Turns the recorded components into one scalar reward per step. Stage I
// filters each episode's progress trace (including estimates from earlier
// buffers) and rewards the increments that fall inside this buffer.
inline void finalize_rewards(RolloutBuffer& buf, const FinalizeOptions& opt) {
  opt.weights.validate();
  for (const auto& seg : buf.episodes) {
    auto& steps = buf.steps.at(static_cast<std::size_t>(seg.env_index));
    if (seg.first_step < 0 || seg.first_step + seg.length > static_cast<int>(steps.size())) {
      fail(ErrorKind::kInvalidInput, "episode segment exceeds its buffer");
    }
    std::vector<double> increments;
    if (buf.stage == Stage::kValueInit) {
      if (static_cast<int>(seg.trace.values.size()) != seg.length) {
        fail(ErrorKind::kInvalidInput, "progress trace of episode " + seg.trace.episode_id + " has " +
                                           std::to_string(seg.trace.values.size()) + " values for " +
                                           std::to_string(seg.length) + " steps");
      }
      ProgressTrace full;
      full.episode_id = seg.trace.episode_id;
      full.values = seg.prior;
      full.values.insert(full.values.end(), seg.trace.values.begin(), seg.trace.values.end());
      RewardTrace r;
      if (opt.filter) {
        const FilterConfig fc = opt.threshold > 0.0 ? FilterConfig{opt.half_width, opt.threshold}
                                                    : FilterConfig::for_plan(opt.half_width, seg.num_subgoals);
        r = saturation_safe_rewards(full, fc);
      } else {
        r = running_max_rewards(full);
      }
      increments.assign(r.values.end() - seg.length, r.values.end());
    } else if (!seg.trace.values.empty()) {
      fail(ErrorKind::kInvalidInput, "stage II episode carries a progress trace");
    }
    for (int t = 0; t < seg.length; ++t) {
      auto& rec = steps[static_cast<std::size_t>(seg.first_step + t)];
      if (rec.episode_id != seg.episode_id) fail(ErrorKind::kInvalidInput, "episode ids do not match step records");
      RewardInputs in;
      if (buf.stage == Stage::kValueInit) {
        rec.r_extrinsic = increments[static_cast<std::size_t>(t)];
        in.r_vlm = rec.r_extrinsic;
      } else {
        in.r_sc = rec.r_sc;
        in.r_task = rec.r_task;
      }
      rec.reward = compose(buf.stage, opt.weights, in);
    }
  }
}

struct Advantages {
  std::vector<std::vector<double>> advantages;  // [env][t]
  std::vector<std::vector<double>> returns;
};

// GAE per environment; bootstrapping stops at done flags and uses the
// buffer's last value for unfinished trailing episodes.
inline Advantages gae_advantages(const RolloutBuffer& buf, double gamma, double lambda) {
  Advantages out;
  out.advantages.resize(buf.steps.size());
  out.returns.resize(buf.steps.size());
  for (std::size_t e = 0; e < buf.steps.size(); ++e) {
    const auto& steps = buf.steps[e];
    auto& adv = out.advantages[e];
    auto& ret = out.returns[e];
    adv.assign(steps.size(), 0.0);
    ret.assign(steps.size(), 0.0);
    double next_value = buf.last_values[e];
    double next_adv = 0.0;
    for (std::size_t i = steps.size(); i-- > 0;) {
      const auto& s = steps[i];
      const double mask = s.done ? 0.0 : 1.0;
      const double delta = s.reward + gamma * next_value * mask - s.value;
      next_adv = delta + gamma * lambda * mask * next_adv;
      adv[i] = next_adv;
      ret[i] = next_adv + s.value;
      next_value = s.value;
    }
  }
  return out;
}

// Mean 0 / standard deviation 1 over the whole batch.
inline void normalize_advantages(Advantages& a) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& v : a.advantages) {
    for (double x : v) {
      sum += x;
      ++n;
    }
  }
  if (n == 0) return;
  const double mean = sum / static_cast<double>(n);
  for (const auto& v : a.advantages) {
    for (double x : v) sq += (x - mean) * (x - mean);
  }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  for (auto& v : a.advantages) {
    for (double& x : v) x = (x - mean) / (sd + 1e-8);
  }
}

}  // namespace vllr
