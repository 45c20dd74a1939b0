#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "vllr/error.hpp"

namespace vllr {

inline constexpr double kDefaultProbFloor = 1e-8;

// Normalized probabilities over a discrete action set. Entries are floored
// at construction so every log term stays finite.
class ActionDistribution {
 public:
  static ActionDistribution from_probabilities(std::span<const double> probs,
                                               double prob_floor = kDefaultProbFloor) {
    if (probs.size() < 2) fail(ErrorKind::kInvalidInput, "action distribution needs at least 2 actions");
    if (!(prob_floor > 0.0) || prob_floor * static_cast<double>(probs.size()) >= 1.0) {
      fail(ErrorKind::kInvalidInput, "probability floor incompatible with action count");
    }
    std::vector<double> p(probs.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (!std::isfinite(probs[i])) fail(ErrorKind::kInvalidInput, "non-finite action probability");
      p[i] = probs[i] < prob_floor ? prob_floor : probs[i];
      sum += p[i];
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) fail(ErrorKind::kInvalidInput, "action probabilities cannot be normalized");
    // Sums already within rounding of 1 are left alone, so an exactly
    // uniform input stays exactly uniform.
    if (std::abs(sum - 1.0) > 1e-12) {
      for (double& v : p) v /= sum;
    }
    return ActionDistribution(std::move(p));
  }

  static ActionDistribution uniform(std::size_t num_actions) {
    std::vector<double> p(num_actions, 1.0 / static_cast<double>(num_actions));
    return from_probabilities(p);
  }

  std::span<const double> probabilities() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

 private:
  explicit ActionDistribution(std::vector<double> p) : probs_(std::move(p)) {}
  std::vector<double> probs_;
};

// -(1/|A|) * sum_i ln(|A| * pi(i)), summed in ascending index order.
inline double self_certainty(const ActionDistribution& dist) {
  const double n = static_cast<double>(dist.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) acc += std::log(n * dist[i]);
  const double value = -acc / n;
  return value < 0.0 ? 0.0 : value;
}

// KL(uniform || pi); algebraically the same quantity as self_certainty.
inline double kl_from_uniform(const ActionDistribution& dist) {
  const double u = 1.0 / static_cast<double>(dist.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) acc += u * std::log(u / dist[i]);
  return acc;
}

// d(self_certainty)/d(logit_j) = p_j - 1/|A| when pi = softmax(logits).
inline std::vector<double> self_certainty_logit_gradient(const ActionDistribution& dist) {
  const double u = 1.0 / static_cast<double>(dist.size());
  std::vector<double> g(dist.size());
  for (std::size_t j = 0; j < dist.size(); ++j) g[j] = dist[j] - u;
  return g;
}

}  // namespace vllr
