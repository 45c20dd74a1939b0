#pragma once

// Clipped-surrogate PPO, value regression and behavior cloning on the
// hand-differentiated MLPs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/config.hpp"
#include "vllr/mlp.hpp"
#include "vllr/policy.hpp"
#include "vllr/rollout.hpp"

namespace vllr {

// Raised when a loss or a parameter turns non-finite; carries the offending
// minibatch as JSON.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, nlohmann::json dump)
      : Error(ErrorKind::kNumerical, what), dump_(std::move(dump)) {}
  const nlohmann::json& dump() const { return dump_; }

 private:
  nlohmann::json dump_;
};

struct PpoSample {
  const std::vector<double>* obs = nullptr;
  int action = 0;
  double logp_old = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct PolicyLossStats {
  double loss = 0.0;
  double surrogate = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  double max_ratio_dev = 0.0;
};

// Mean over the samples of -min(r A, clip(r) A) - c H(pi). Accumulates the
// gradient into `grad` when it is non-empty.
inline PolicyLossStats policy_loss(const Mlp& net, std::span<const PpoSample> batch, double clip_eps,
                                   double entropy_coef, std::span<double> grad) {
  PolicyLossStats st;
  if (batch.empty()) return st;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Mlp::Cache cache;
  std::vector<double> g_logits;
  for (const auto& s : batch) {
    net.forward(*s.obs, cache);
    const auto& logits = cache.acts.back();
    const auto logp = log_softmax(logits);
    const std::size_t a = static_cast<std::size_t>(s.action);
    const double ratio = std::exp(logp[a] - s.logp_old);
    const double unclipped = ratio * s.advantage;
    const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * s.advantage;
    const bool clip_active = clipped < unclipped;
    double h = 0.0;
    for (double lp : logp) h -= std::exp(lp) * lp;
    st.surrogate += -std::min(unclipped, clipped) * inv_n;
    st.entropy += h * inv_n;
    st.approx_kl += (s.logp_old - logp[a]) * inv_n;
    st.max_ratio_dev = std::max(st.max_ratio_dev, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > clip_eps) st.clip_frac += inv_n;
    if (grad.empty()) continue;
    // d/dz of -min(...) is -A r (onehot - p) when the unclipped branch is active.
    const double g_logp = clip_active ? 0.0 : -s.advantage * ratio;
    g_logits.assign(logits.size(), 0.0);
    for (std::size_t j = 0; j < logits.size(); ++j) {
      const double p = std::exp(logp[j]);
      g_logits[j] = g_logp * ((j == a ? 1.0 : 0.0) - p);
      g_logits[j] += entropy_coef * p * (logp[j] + h);
      g_logits[j] *= inv_n;
    }
    net.backward(cache, g_logits, grad);
  }
  st.loss = st.surrogate - entropy_coef * st.entropy;
  return st;
}

// Mean of 0.5 (V - R)^2.
inline double value_loss(const Mlp& net, std::span<const PpoSample> batch, std::span<double> grad) {
  if (batch.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Mlp::Cache cache;
  double loss = 0.0;
  for (const auto& s : batch) {
    net.forward(*s.obs, cache);
    const double err = cache.acts.back()[0] - s.ret;
    loss += 0.5 * err * err * inv_n;
    if (!grad.empty()) {
      const double g = err * inv_n;
      net.backward(cache, std::span<const double>(&g, 1), grad);
    }
  }
  return loss;
}

// Parameters plus optimizer state for both networks.
struct Learner {
  PolicyParams policy;
  ValueParams value;
  Adam policy_opt;
  Adam value_opt;
  std::int64_t updates = 0;

  Learner() = default;
  Learner(PolicyParams p, ValueParams v, const PpoConfig& cfg)
      : policy(std::move(p)),
        value(std::move(v)),
        policy_opt(policy.net.params().size(), cfg.policy_lr),
        value_opt(value.net.params().size(), cfg.value_lr) {}
};

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  double first_ratio_dev = 0.0;  // max |ratio - 1| on the first minibatch
  double policy_grad_norm = 0.0;
  double value_grad_norm = 0.0;
  int minibatches = 0;
};

namespace ppo_detail {

inline nlohmann::json dump_batch(std::span<const PpoSample> batch) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : batch) {
    arr.push_back({{"action", s.action},
                   {"logp_old", s.logp_old},
                   {"advantage", s.advantage},
                   {"return", s.ret},
                   {"observation", *s.obs}});
  }
  return arr;
}

inline void check_finite(double v, const char* what, std::span<const PpoSample> batch) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite ") + what, dump_batch(batch));
}

}  // namespace ppo_detail

inline std::vector<PpoSample> make_samples(const RolloutBuffer& buf, const Advantages& adv) {
  std::vector<PpoSample> out;
  out.reserve(buf.size());
  for (std::size_t e = 0; e < buf.steps.size(); ++e) {
    for (std::size_t t = 0; t < buf.steps[e].size(); ++t) {
      const auto& r = buf.steps[e][t];
      out.push_back({&r.observation, r.action, r.logp, adv.advantages[e][t], adv.returns[e][t]});
    }
  }
  return out;
}

// One PPO update over a finalized buffer: `epochs_per_batch` passes of
// shuffled minibatches, each network clipped to max_grad_norm separately.
inline PpoStats ppo_update(Learner& L, std::vector<PpoSample> samples, const PpoConfig& cfg, std::uint64_t seed) {
  PpoStats st;
  if (samples.empty()) return st;
  std::vector<double> gp(L.policy.net.params().size()), gv(L.value.net.params().size());
  std::mt19937_64 rng(counter_hash(seed, 0x990ULL, static_cast<std::uint64_t>(L.updates), 0));
  const std::size_t mb = static_cast<std::size_t>(cfg.minibatch_size);
  for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    for (std::size_t begin = 0; begin < samples.size(); begin += mb) {
      const std::span<const PpoSample> batch(samples.data() + begin, std::min(mb, samples.size() - begin));
      std::fill(gp.begin(), gp.end(), 0.0);
      std::fill(gv.begin(), gv.end(), 0.0);
      const auto ps = policy_loss(L.policy.net, batch, cfg.clip_eps, cfg.entropy_coef, gp);
      const double vl = value_loss(L.value.net, batch, gv);
      ppo_detail::check_finite(ps.loss, "policy loss", batch);
      ppo_detail::check_finite(vl, "value loss", batch);
      if (st.minibatches == 0) st.first_ratio_dev = ps.max_ratio_dev;
      st.policy_grad_norm = clip_by_global_norm(gp, cfg.max_grad_norm);
      st.value_grad_norm = clip_by_global_norm(gv, cfg.max_grad_norm);
      ppo_detail::check_finite(st.policy_grad_norm, "policy gradient", batch);
      ppo_detail::check_finite(st.value_grad_norm, "value gradient", batch);
      L.policy_opt.step(L.policy.net.params(), gp);
      L.value_opt.step(L.value.net.params(), gv);
      st.policy_loss += ps.loss;
      st.value_loss += vl;
      st.entropy += ps.entropy;
      st.clip_frac += ps.clip_frac;
      st.approx_kl += ps.approx_kl;
      ++st.minibatches;
    }
  }
  const double k = 1.0 / st.minibatches;
  st.policy_loss *= k;
  st.value_loss *= k;
  st.entropy *= k;
  st.clip_frac *= k;
  st.approx_kl *= k;
  ++L.updates;
  return st;
}

// Squared-error regression of the value network only.
inline double regress_value(ValueParams& value, Adam& opt, std::vector<PpoSample> samples, int epochs,
                            int minibatch_size, double max_grad_norm, std::uint64_t seed) {
  std::vector<double> g(value.net.params().size());
  std::mt19937_64 rng(splitmix64(seed));
  const std::size_t mb = static_cast<std::size_t>(minibatch_size);
  double last = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    double total = 0.0;
    for (std::size_t begin = 0; begin < samples.size(); begin += mb) {
      const std::span<const PpoSample> batch(samples.data() + begin, std::min(mb, samples.size() - begin));
      std::fill(g.begin(), g.end(), 0.0);
      const double l = value_loss(value.net, batch, g);
      ppo_detail::check_finite(l, "value loss", batch);
      clip_by_global_norm(g, max_grad_norm);
      opt.step(value.net.params(), g);
      total += l * static_cast<double>(batch.size());
    }
    last = total / static_cast<double>(samples.size());
  }
  return last;
}

// ---------------------------------------------------------------------------
// Behavior cloning

struct Demo {
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
};

// Expert (A*) demonstrations on episodes drawn from `source`.
inline std::vector<Demo> collect_demos(const EpisodeSource& source, const EnvConfig& env_cfg, int count,
                                       std::uint64_t stream) {
  std::vector<Demo> demos;
  Env env(env_cfg);
  for (int i = 0; i < count; ++i) {
    source.start(env, stream, static_cast<std::uint64_t>(i));
    Demo d;
    for (int a : expert_trajectory(env.house(), env.state())) {
      d.observations.push_back(env.observe().features);
      d.actions.push_back(a);
      if (env.step(a).done) break;
    }
    demos.push_back(std::move(d));
  }
  return demos;
}

struct BcResult {
  PolicyParams policy;
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;  // mean cross-entropy over all demo steps after each epoch
};

inline double bc_loss(const Mlp& net, const std::vector<PpoSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples) total -= log_softmax(net.forward(*s.obs))[static_cast<std::size_t>(s.action)];
  return total / static_cast<double>(samples.size());
}

inline BcResult bc_pretrain(const std::vector<Demo>& demos, int num_actions, const PretrainConfig& cfg,
                            std::uint64_t seed) {
  std::vector<PpoSample> samples;
  for (const auto& d : demos) {
    for (std::size_t i = 0; i < d.actions.size(); ++i) samples.push_back({&d.observations[i], d.actions[i], 0, 0, 0});
  }
  if (samples.empty()) fail(ErrorKind::kInvalidInput, "behavior cloning needs at least one demonstration step");
  const int obs_dim = static_cast<int>(samples.front().obs->size());
  BcResult out{make_policy(obs_dim, num_actions, cfg.hidden, counter_hash(seed, 0xbcULL, 0, 0)), 0.0, {}};
  Mlp& net = out.policy.net;
  Adam opt(net.params().size(), cfg.lr);
  std::vector<double> g(net.params().size());
  std::mt19937_64 rng(counter_hash(seed, 0xbcULL, 1, 0));
  out.initial_loss = bc_loss(net, samples);
  const std::size_t mb = static_cast<std::size_t>(cfg.minibatch_size);
  Mlp::Cache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(samples.begin(), samples.end(), rng);
    for (std::size_t begin = 0; begin < samples.size(); begin += mb) {
      const std::size_t end = std::min(samples.size(), begin + mb);
      const double inv_n = 1.0 / static_cast<double>(end - begin);
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        net.forward(*samples[i].obs, cache);
        auto p = softmax(cache.acts.back());
        p[static_cast<std::size_t>(samples[i].action)] -= 1.0;
        for (double& v : p) v *= inv_n;
        net.backward(cache, p, g);
      }
      opt.step(net.params(), g);
    }
    out.epoch_losses.push_back(bc_loss(net, samples));
    if (!std::isfinite(out.epoch_losses.back())) fail(ErrorKind::kNumerical, "behavior cloning loss diverged");
  }
  return out;
}

}  // namespace vllr
