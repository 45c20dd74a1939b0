#pragma once

// Per-step progress estimates p_t. The ground-truth signal comes from the
// latched subgoal state; synthetic profiles corrupt it the way different
// vision-language estimators do (lag, jitter, hallucinated spikes,
// early saturation, no correlation at all).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vllr/env.hpp"
#include "vllr/rng.hpp"
#include "vllr/scene_graph.hpp"
#include "vllr/service.hpp"

namespace vllr {

enum class ProfileKind { kOracle, kLateGradual, kEarlySaturating, kUncorrelated, kCustom };

inline const char* to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::kOracle: return "oracle";
    case ProfileKind::kLateGradual: return "late_gradual";
    case ProfileKind::kEarlySaturating: return "early_saturating";
    case ProfileKind::kUncorrelated: return "uncorrelated";
    case ProfileKind::kCustom: return "custom";
  }
  return "oracle";
}

inline ProfileKind profile_kind_from_string(std::string_view s) {
  for (auto k : {ProfileKind::kOracle, ProfileKind::kLateGradual, ProfileKind::kEarlySaturating,
                 ProfileKind::kUncorrelated, ProfileKind::kCustom}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorKind::kInvalidInput, "unknown estimator profile '" + std::string(s) + "'");
}

struct NoiseParams {
  double jitter_sd = 0.0;
  double spike_prob = 0.0;
  double spike_magnitude = 0.5;
  int lag_steps = 0;
  double saturation_bias = 0.0;
};

struct EstimatorProfile {
  ProfileKind kind = ProfileKind::kOracle;
  NoiseParams noise;
  std::uint64_t seed = 0;

  void validate() const {
    const auto& n = noise;
    if (!(n.jitter_sd >= 0.0)) fail(ErrorKind::kInvalidInput, "jitter_sd must be >= 0");
    if (!(n.spike_prob >= 0.0 && n.spike_prob <= 1.0)) fail(ErrorKind::kInvalidInput, "spike_prob must lie in [0, 1]");
    if (!(n.spike_magnitude > 0.0 && n.spike_magnitude <= 1.0)) {
      fail(ErrorKind::kInvalidInput, "spike_magnitude must lie in (0, 1]");
    }
    if (n.lag_steps < 0) fail(ErrorKind::kInvalidInput, "lag_steps must be >= 0");
    if (!(n.saturation_bias >= -1.0 && n.saturation_bias <= 1.0)) {
      fail(ErrorKind::kInvalidInput, "saturation_bias must lie in [-1, 1]");
    }
  }

  static EstimatorProfile preset(ProfileKind kind, std::uint64_t seed = 0) {
    EstimatorProfile p;
    p.kind = kind;
    p.seed = seed;
    switch (kind) {
      case ProfileKind::kLateGradual: p.noise = {0.02, 0.05, 0.6, 2, 0.1}; break;
      case ProfileKind::kEarlySaturating: p.noise = {0.03, 0.0, 0.5, 0, 0.6}; break;
      case ProfileKind::kOracle:
      case ProfileKind::kUncorrelated:
      case ProfileKind::kCustom: p.noise = NoiseParams{}; break;
    }
    return p;
  }
};

struct ProgressQuery {
  const SubgoalPlan* plan = nullptr;
  const Observation* obs_prev = nullptr;
  const Observation* obs_curr = nullptr;
  std::uint64_t episode = 0;
  int step = 0;
};

// (completed prefix + fraction of the active subgoal) / K. The fraction is
// 1 - d_best / d_start for the active subgoal, where distances are cell
// path lengths and d_best is the closest approach since it became active.
inline double true_progress(const EnvState& state, const SubgoalPlan& plan) {
  if (!state.plan_progress) fail(ErrorKind::kInvalidInput, "state is not tracking a plan");
  const auto& pp = *state.plan_progress;
  const int k = plan.size();
  if (k == 0) return 0.0;
  if (pp.active >= k) return 1.0;
  double frac = 0.0;
  if (pp.start_dist > 0 && pp.start_dist != env_detail::kUnreachable && pp.best_dist != env_detail::kUnreachable) {
    frac = 1.0 - static_cast<double>(pp.best_dist) / pp.start_dist;
    frac = std::clamp(frac, 0.0, std::nextafter(1.0, 0.0));
  }
  return (pp.active + frac) / k;
}

namespace estimator_detail {
enum Stream : std::uint64_t { kJitter = 1, kSpike = 2, kUniform = 3 };
}

// Deterministic in (seed, episode, step); the only state is the history of
// true progress needed for lagged profiles.
class SyntheticEstimator {
 public:
  SyntheticEstimator(EstimatorProfile profile, std::uint64_t episode) : profile_(profile), episode_(episode) {
    profile_.validate();
    if (profile_.kind == ProfileKind::kOracle) profile_.noise = NoiseParams{};
  }

  const EstimatorProfile& profile() const { return profile_; }

  // Whether the spike branch fires at `step`; exposed for counting checks.
  bool spike_at(int step) const {
    return profile_.noise.spike_prob > 0.0 &&
           counter_uniform(profile_.seed, estimator_detail::kSpike, episode_, static_cast<std::uint64_t>(step)) <
               profile_.noise.spike_prob;
  }

  double estimate(int step, double true_p) {
    if (!(true_p >= 0.0 && true_p <= 1.0)) fail(ErrorKind::kInvalidInput, "true progress outside [0, 1]");
    history_.push_back(true_p);
    const auto& n = profile_.noise;
    const auto s = static_cast<std::uint64_t>(step);
    auto jitter = [&] {
      return n.jitter_sd > 0.0 ? n.jitter_sd * counter_gaussian(profile_.seed, estimator_detail::kJitter, episode_, s)
                               : 0.0;
    };
    auto lagged = [&] {
      const auto idx = static_cast<std::ptrdiff_t>(history_.size()) - 1 - n.lag_steps;
      return idx >= 0 ? history_[static_cast<std::size_t>(idx)] : 0.0;
    };
    double v = 0.0;
    switch (profile_.kind) {
      case ProfileKind::kOracle: v = true_p; break;
      case ProfileKind::kLateGradual:
        v = lagged() * (1.0 - std::max(0.0, n.saturation_bias)) + jitter();
        if (spike_at(step)) v = std::min(1.0, true_p + n.spike_magnitude);
        break;
      case ProfileKind::kEarlySaturating:
        v = true_p + std::abs(n.saturation_bias) * (1.0 - true_p) + jitter();
        break;
      case ProfileKind::kUncorrelated:
        v = counter_uniform(profile_.seed, estimator_detail::kUniform, episode_, s);
        break;
      case ProfileKind::kCustom: {
        const double p = lagged();
        v = n.saturation_bias >= 0.0 ? p + n.saturation_bias * (1.0 - p) : p * (1.0 + n.saturation_bias);
        v += jitter();
        if (spike_at(step)) v = std::min(1.0, true_p + n.spike_magnitude);
        break;
      }
    }
    return std::clamp(v, 0.0, 1.0);
  }

  double estimate(const ProgressQuery& q, double true_p) { return estimate(q.step, true_p); }

 private:
  EstimatorProfile profile_;
  std::uint64_t episode_;
  std::vector<double> history_;
};

// Remote estimator port. Posts the plan and the observation pair; the
// response's progress is clamped into [0, 1] with a warning count.
inline double estimate_external(const ServiceEndpoint& endpoint, const ProgressQuery& q, ServiceTelemetry& telemetry) {
  nlohmann::json subgoals = nlohmann::json::array();
  if (q.plan) subgoals = to_json(*q.plan)["subgoals"];
  nlohmann::json request = {{"subgoals", subgoals},
                            {"obs_prev", q.obs_prev ? q.obs_prev->features : std::vector<double>{}},
                            {"obs_curr", q.obs_curr ? q.obs_curr->features : std::vector<double>{}},
                            {"step", q.step}};
  const std::string raw = post_json(endpoint, request, telemetry);
  const auto j = parse_response(raw);
  if (!j.is_object() || !j.contains("progress") || !j["progress"].is_number()) {
    throw ProtocolError("response has no numeric progress field", raw);
  }
  const double p = j["progress"].get<double>();
  if (!std::isfinite(p)) throw ProtocolError("progress is not finite", raw);
  if (p < 0.0 || p > 1.0) {
    ++telemetry.clamp_warnings;
    return std::clamp(p, 0.0, 1.0);
  }
  return p;
}

// Queries the remote estimator every `every_k` steps and holds the last
// value in between.
class ExternalEstimator {
 public:
  ExternalEstimator(ServiceEndpoint endpoint, int every_k = 1) : endpoint_(std::move(endpoint)), every_k_(every_k) {
    if (every_k_ < 1) fail(ErrorKind::kInvalidInput, "query interval must be >= 1");
  }

  double estimate(const ProgressQuery& q) {
    if (!last_ || q.step % every_k_ == 0) last_ = estimate_external(endpoint_, q, telemetry_);
    return *last_;
  }

  const ServiceTelemetry& telemetry() const { return telemetry_; }

 private:
  ServiceEndpoint endpoint_;
  int every_k_;
  std::optional<double> last_;
  ServiceTelemetry telemetry_;
};

}  // namespace vllr
