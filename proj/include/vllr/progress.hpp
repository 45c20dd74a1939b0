#pragma once

// Turns a noisy per-episode progress sequence into per-step extrinsic
// rewards: isolated spikes are zeroed against a windowed median, then the
// increments of the running maximum become the rewards.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vllr/error.hpp"

namespace vllr {

struct ProgressTrace {
  std::string episode_id;
  std::vector<double> values;

  void validate() const {
    if (values.empty()) fail(ErrorKind::kInvalidInput, "progress trace '" + episode_id + "' is empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = values[i];
      if (!(v >= 0.0 && v <= 1.0)) {
        fail(ErrorKind::kInvalidInput, "progress trace '" + episode_id + "' value at step " +
                                           std::to_string(i) + " is outside [0, 1]");
      }
    }
  }
};

struct FilterConfig {
  int half_width = 9;      // steps on each side of the center
  double threshold = 0.2;  // spike cutoff on p_i - median

  void validate() const {
    if (half_width < 1) fail(ErrorKind::kInvalidInput, "filter half_width must be >= 1");
    if (!(threshold > 0.0 && threshold <= 1.0)) {
      fail(ErrorKind::kInvalidInput, "filter threshold must lie in (0, 1]");
    }
  }

  // Threshold defaults to the reciprocal of the plan length.
  static FilterConfig for_plan(int half_width, int num_subgoals) {
    if (num_subgoals < 1) fail(ErrorKind::kInvalidInput, "plan length must be >= 1");
    return FilterConfig{half_width, 1.0 / static_cast<double>(num_subgoals)};
  }
};

struct RewardTrace {
  std::vector<double> values;

  // Left-to-right sum. For running-max rewards this reproduces the maximum
  // of the source trace exactly.
  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

// Median of a nonempty sample; even counts average the two middle order
// statistics.
inline double window_median(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::kInvalidInput, "median of an empty window");
  std::vector<double> w(values.begin(), values.end());
  const std::size_t mid = w.size() / 2;
  std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(mid), w.end());
  const double upper = w[mid];
  if (w.size() % 2 == 1) return upper;
  const double lower = *std::max_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

namespace detail {

// r_i - RMP exactly as the two-pass filter writes it.
inline std::vector<double> running_max_increments(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  double running_max = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] > running_max) {
      out[i] = values[i] - running_max;
      running_max = values[i];
    }
  }
  return out;
}

inline std::vector<double> suppress(std::span<const double> values, const FilterConfig& cfg) {
  const std::size_t n = values.size();
  std::vector<double> out(values.begin(), values.end());
  if (n < 2) return out;
  const auto s = static_cast<std::size_t>(cfg.half_width);
  std::vector<double> window;
  window.reserve(2 * s);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= s ? i - s : 0;
    const std::size_t hi = std::min(n - 1, i + s);
    window.clear();
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != i) window.push_back(values[j]);
    }
    if (values[i] - window_median(window) > cfg.threshold) out[i] = 0.0;
  }
  return out;
}

// Smallest-change r >= 0 with fl(base + r) == target, if one exists.
inline std::optional<double> landing_increment(double base, double target) {
  double r = target - base;
  for (int k = 0; k < 64 && base + r < target; ++k) r = std::nextafter(r, 2.0);
  for (int k = 0; k < 64 && base + r > target && r > 0.0; ++k) r = std::nextafter(r, 0.0);
  if (base + r != target || r < 0.0) return std::nullopt;
  return r;
}

// Same recurrence, but each increment is nudged by whole ulps until the
// left-to-right partial sum lands exactly on the new maximum. The literal
// difference m_i - m_{i-1} does not round-trip for a few percent of pairs.
// When the partial sum sits on a rounding tie no increment can land, so the
// previous increment moves the partial sum a few ulps first.
inline std::vector<double> telescoping_increments(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  double running_max = 0.0;
  double partial = 0.0;
  double partial_before_prev = 0.0;
  std::optional<std::size_t> prev;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > running_max)) continue;
    running_max = values[i];
    auto r = landing_increment(partial, running_max);
    if (!r && prev) {
      double up = partial, down = partial;
      for (int k = 0; k < 8 && !r; ++k) {
        up = std::nextafter(up, 2.0);
        down = std::nextafter(down, -1.0);
        for (double shifted : {up, down}) {
          if (shifted <= partial_before_prev) continue;
          const auto r_prev = landing_increment(partial_before_prev, shifted);
          if (!r_prev) continue;
          r = landing_increment(shifted, running_max);
          if (r) {
            out[*prev] = *r_prev;
            partial = shifted;
            break;
          }
        }
      }
    }
    if (!r) fail(ErrorKind::kNumerical, "no increment reaches the running maximum exactly");
    out[i] = *r;
    partial_before_prev = partial;
    partial += *r;
    prev = i;
  }
  return out;
}

}  // namespace detail

// Rewards whose plain left-to-right sum equals the trace maximum exactly.
inline RewardTrace running_max_rewards(const ProgressTrace& trace) {
  trace.validate();
  return RewardTrace{detail::telescoping_increments(trace.values)};
}

inline ProgressTrace suppress_spikes(const ProgressTrace& trace, const FilterConfig& cfg) {
  trace.validate();
  cfg.validate();
  return ProgressTrace{trace.episode_id, detail::suppress(trace.values, cfg)};
}

// Both passes, with the intermediate spike-suppressed trace kept for plotting.
struct FilteredRewards {
  ProgressTrace filtered;
  RewardTrace rewards;
};

inline FilteredRewards saturation_safe_rewards_detailed(const ProgressTrace& trace,
                                                        const FilterConfig& cfg) {
  ProgressTrace filtered = suppress_spikes(trace, cfg);
  RewardTrace rewards{detail::running_max_increments(filtered.values)};
  return {std::move(filtered), std::move(rewards)};
}

inline RewardTrace saturation_safe_rewards(const ProgressTrace& trace, const FilterConfig& cfg) {
  return saturation_safe_rewards_detailed(trace, cfg).rewards;
}

}  // namespace vllr
