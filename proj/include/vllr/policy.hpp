#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/mlp.hpp"
#include "vllr/self_certainty.hpp"

namespace vllr {

struct PolicyParams {
  Mlp net;  // observation -> action logits
};

struct ValueParams {
  Mlp net;  // observation -> scalar
};

inline std::vector<int> layer_sizes(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> s{input};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(output);
  return s;
}

inline PolicyParams make_policy(int obs_dim, int num_actions, const std::vector<int>& hidden, std::uint64_t seed) {
  PolicyParams p{Mlp(layer_sizes(obs_dim, hidden, num_actions))};
  p.net.initialize(seed, 0.01);
  return p;
}

inline ValueParams make_value(int obs_dim, const std::vector<int>& hidden, std::uint64_t seed) {
  ValueParams v{Mlp(layer_sizes(obs_dim, hidden, 1))};
  v.net.initialize(seed, 1.0);
  return v;
}

inline nlohmann::json architecture(const Mlp& net) {
  return {{"layers", net.sizes()}, {"activation", "tanh"}, {"output", "linear"}};
}

// Raw softmax probabilities; strictly positive and summing to 1.
inline std::vector<double> action_probabilities(const PolicyParams& policy, std::span<const double> obs) {
  return softmax(policy.net.forward(obs));
}

inline ActionDistribution forward_policy(const PolicyParams& policy, std::span<const double> obs) {
  return ActionDistribution::from_probabilities(action_probabilities(policy, obs));
}

inline double value_of(const ValueParams& value, std::span<const double> obs) { return value.net.forward(obs)[0]; }

inline int sample_action(std::span<const double> probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

inline int greedy_action(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace vllr
