#pragma once

// Experiment configuration. Every struct lists its fields once through
// visit_fields; JSON encoding, strict decoding (unknown keys and wrong types
// are rejected) and the content hash are all derived from that list.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/env.hpp"
#include "vllr/error.hpp"
#include "vllr/house.hpp"
#include "vllr/progress.hpp"
#include "vllr/progress_estimator.hpp"
#include "vllr/reward.hpp"
#include "vllr/rng.hpp"

namespace vllr {

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gamma_stage1 = 0.99;
  double gae_lambda = 0.95;
  int epochs_per_batch = 4;
  int minibatch_size = 256;
  double policy_lr = 3e-4;
  double value_lr = 1e-3;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.5;
  int rollout_length = 128;
  int num_envs = 8;
  int num_threads = 1;
  int value_epochs_stage1 = 20;
  std::vector<int> value_hidden = {128, 128};

  template <class V>
  void visit_fields(V&& v) {
    v("clip_eps", clip_eps);
    v("gamma", gamma);
    v("gamma_stage1", gamma_stage1);
    v("gae_lambda", gae_lambda);
    v("epochs_per_batch", epochs_per_batch);
    v("minibatch_size", minibatch_size);
    v("policy_lr", policy_lr);
    v("value_lr", value_lr);
    v("entropy_coef", entropy_coef);
    v("max_grad_norm", max_grad_norm);
    v("rollout_length", rollout_length);
    v("num_envs", num_envs);
    v("num_threads", num_threads);
    v("value_epochs_stage1", value_epochs_stage1);
    v("value_hidden", value_hidden);
  }

  void validate() const {
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) fail(ErrorKind::kConfig, "ppo.clip_eps must lie in (0, 1)");
    if (!(gamma > 0.0 && gamma <= 1.0) || !(gamma_stage1 > 0.0 && gamma_stage1 <= 1.0)) {
      fail(ErrorKind::kConfig, "discount factors must lie in (0, 1]");
    }
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail(ErrorKind::kConfig, "ppo.gae_lambda must lie in [0, 1]");
    if (epochs_per_batch < 1 || minibatch_size < 1 || rollout_length < 1 || num_envs < 1 || num_threads < 1 ||
        value_epochs_stage1 < 1) {
      fail(ErrorKind::kConfig, "ppo integer settings must be positive");
    }
    if (!(policy_lr > 0.0) || !(value_lr > 0.0)) fail(ErrorKind::kConfig, "learning rates must be positive");
    if (!(entropy_coef >= 0.0) || !(max_grad_norm >= 0.0)) fail(ErrorKind::kConfig, "ppo coefficients must be >= 0");
  }
};

struct PretrainConfig {
  int demos = 400;
  int epochs = 40;
  int minibatch_size = 64;
  double lr = 1e-3;
  std::vector<int> hidden = {128, 128};

  template <class V>
  void visit_fields(V&& v) {
    v("demos", demos);
    v("epochs", epochs);
    v("minibatch_size", minibatch_size);
    v("lr", lr);
    v("hidden", hidden);
  }
};

struct FilterSettings {
  int half_width = 9;
  double threshold = 0.0;  // 0 selects 1 / (number of subgoals) per episode
  bool enabled = true;     // false: plain running-maximum increments

  template <class V>
  void visit_fields(V&& v) {
    v("half_width", half_width);
    v("threshold", threshold);
    v("enabled", enabled);
  }

  FilterConfig for_plan(int num_subgoals) const {
    if (threshold > 0.0) return FilterConfig{half_width, threshold};
    return FilterConfig::for_plan(half_width, num_subgoals);
  }
};

struct EstimatorSettings {
  std::string profile = "oracle";
  double jitter_sd = -1.0;  // negative: use the profile preset
  double spike_prob = -1.0;
  double spike_magnitude = -1.0;
  int lag_steps = -1;
  double saturation_bias = -2.0;
  std::uint64_t seed = 0;

  template <class V>
  void visit_fields(V&& v) {
    v("profile", profile);
    v("jitter_sd", jitter_sd);
    v("spike_prob", spike_prob);
    v("spike_magnitude", spike_magnitude);
    v("lag_steps", lag_steps);
    v("saturation_bias", saturation_bias);
    v("seed", seed);
  }

  EstimatorProfile resolve() const {
    EstimatorProfile p = EstimatorProfile::preset(profile_kind_from_string(profile), seed);
    if (jitter_sd >= 0.0) p.noise.jitter_sd = jitter_sd;
    if (spike_prob >= 0.0) p.noise.spike_prob = spike_prob;
    if (spike_magnitude >= 0.0) p.noise.spike_magnitude = spike_magnitude;
    if (lag_steps >= 0) p.noise.lag_steps = lag_steps;
    if (saturation_bias >= -1.0) p.noise.saturation_bias = saturation_bias;
    p.validate();
    return p;
  }
};

struct WeightSettings {
  RewardWeights w;
  template <class V>
  void visit_fields(V&& v) {
    v("alpha", w.alpha);
    v("beta", w.beta);
    v("phi", w.phi);
    v("sc_ceiling", w.sc_ceiling);
  }
};

struct TrainSettings {
  std::int64_t stage1_steps = 1024;
  std::int64_t stage2_steps = 256000;
  std::int64_t eval_every = 32768;
  int eval_episodes = 100;  // per task, during training
  std::string pretrained_checkpoint;  // empty: behavior-clone first

  template <class V>
  void visit_fields(V&& v) {
    v("stage1_steps", stage1_steps);
    v("stage2_steps", stage2_steps);
    v("eval_every", eval_every);
    v("eval_episodes", eval_episodes);
    v("pretrained_checkpoint", pretrained_checkpoint);
  }
};

struct HouseSettings {
  HouseParams params;
  int train_count = 200;
  int test_count = 20;
  std::uint64_t train_seed_base = 1000;
  std::uint64_t test_seed_base = 900000;

  template <class V>
  void visit_fields(V&& v) {
    v("rooms_min", params.rooms_min);
    v("rooms_max", params.rooms_max);
    v("objects_per_room_min", params.objects_per_room_min);
    v("objects_per_room_max", params.objects_per_room_max);
    v("width", params.width);
    v("height", params.height);
    v("train_count", train_count);
    v("test_count", test_count);
    v("train_seed_base", train_seed_base);
    v("test_seed_base", test_seed_base);
  }
};

struct EnvSettings {
  EnvConfig cfg;
  template <class V>
  void visit_fields(V&& v) {
    v("num_actions", cfg.num_actions);
    v("view_radius", cfg.view_radius);
    v("max_steps_factor", cfg.max_steps_factor);
    v("max_steps_cap", cfg.max_steps_cap);
  }
};

struct EvalSettings {
  int episodes_per_task = 200;
  std::uint64_t seed = 7;
  bool greedy = true;

  template <class V>
  void visit_fields(V&& v) {
    v("episodes_per_task", episodes_per_task);
    v("seed", seed);
    v("greedy", greedy);
  }
};

struct EndpointSettings {
  std::string decomposer = "oracle";  // oracle | external
  std::string estimator = "synthetic";  // synthetic | external
  std::string decomposer_url;
  std::string estimator_url;
  int timeout_ms = 5000;
  int max_retries = 3;
  int backoff_base_ms = 100;
  int estimator_every_k = 1;
  std::string prompt_template;

  template <class V>
  void visit_fields(V&& v) {
    v("decomposer", decomposer);
    v("estimator", estimator);
    v("decomposer_url", decomposer_url);
    v("estimator_url", estimator_url);
    v("timeout_ms", timeout_ms);
    v("max_retries", max_retries);
    v("backoff_base_ms", backoff_base_ms);
    v("estimator_every_k", estimator_every_k);
    v("prompt_template", prompt_template);
  }

  ServiceEndpoint endpoint(const std::string& url) const { return {url, timeout_ms, max_retries, backoff_base_ms, {}}; }
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::vector<std::string> tasks = {"objnav"};
  EnvSettings env;
  HouseSettings houses;
  PretrainConfig pretrain;
  TrainSettings train;
  PpoConfig ppo;
  WeightSettings weights;
  FilterSettings filter;
  EstimatorSettings estimator;
  EvalSettings eval;
  EndpointSettings endpoints;
  std::string output_dir = "runs";

  template <class V>
  void visit_fields(V&& v) {
    v("seed", seed);
    v("tasks", tasks);
    v("env", env);
    v("houses", houses);
    v("pretrain", pretrain);
    v("train", train);
    v("ppo", ppo);
    v("weights", weights);
    v("filter", filter);
    v("estimator", estimator);
    v("eval", eval);
    v("endpoints", endpoints);
    v("output_dir", output_dir);
  }

  std::vector<TaskKind> task_kinds() const {
    std::vector<TaskKind> out;
    for (const auto& t : tasks) out.push_back(task_kind_from_string(t));
    return out;
  }

  void validate() const {
    if (tasks.empty()) fail(ErrorKind::kConfig, "tasks must not be empty");
    (void)task_kinds();
    env.cfg.validate();
    houses.params.validate();
    ppo.validate();
    weights.w.validate();
    (void)estimator.resolve();
    if (filter.half_width < 1) fail(ErrorKind::kConfig, "filter.half_width must be >= 1");
    if (filter.threshold < 0.0 || filter.threshold > 1.0) fail(ErrorKind::kConfig, "filter.threshold must lie in [0, 1]");
    if (train.stage1_steps < 0 || train.stage2_steps < 0) fail(ErrorKind::kConfig, "stage step counts must be >= 0");
    if (houses.train_count < 1 || houses.test_count < 1) fail(ErrorKind::kConfig, "house counts must be positive");
    // Train and test houses come from disjoint seed ranges.
    const auto tr0 = houses.train_seed_base, tr1 = tr0 + static_cast<std::uint64_t>(houses.train_count);
    const auto te0 = houses.test_seed_base, te1 = te0 + static_cast<std::uint64_t>(houses.test_count);
    if (tr0 < te1 && te0 < tr1) fail(ErrorKind::kConfig, "train and test house seed ranges overlap");
    if (eval.episodes_per_task < 1) fail(ErrorKind::kConfig, "eval.episodes_per_task must be positive");
    if (endpoints.decomposer != "oracle" && endpoints.decomposer != "external") {
      fail(ErrorKind::kConfig, "endpoints.decomposer must be 'oracle' or 'external'");
    }
    if (endpoints.estimator != "synthetic" && endpoints.estimator != "external") {
      fail(ErrorKind::kConfig, "endpoints.estimator must be 'synthetic' or 'external'");
    }
    if ((endpoints.decomposer == "external" && endpoints.decomposer_url.empty()) ||
        (endpoints.estimator == "external" && endpoints.estimator_url.empty())) {
      fail(ErrorKind::kConfig, "external endpoints need a url");
    }
    if (endpoints.estimator_every_k < 1 || endpoints.timeout_ms < 1 || endpoints.max_retries < 0 ||
        endpoints.backoff_base_ms < 0) {
      fail(ErrorKind::kConfig, "endpoint settings out of range");
    }
  }
};

namespace config_detail {

template <class T>
concept Visitable = requires(T& t) { t.visit_fields([](const char*, auto&) {}); };

template <class T>
nlohmann::json encode(T& value) {
  if constexpr (Visitable<T>) {
    nlohmann::json j = nlohmann::json::object();
    value.visit_fields([&j](const char* key, auto& field) { j[key] = encode(field); });
    return j;
  } else {
    return nlohmann::json(value);
  }
}

template <class T>
void decode(const nlohmann::json& j, T& out, const std::string& path) {
  auto type_error = [&](const char* expected) {
    fail(ErrorKind::kConfig, "config key '" + path + "' must be " + expected + ", got " + j.dump());
  };
  if constexpr (Visitable<T>) {
    if (!j.is_object()) type_error("an object");
    std::vector<std::string> known;
    out.visit_fields([&](const char* key, auto& field) {
      known.emplace_back(key);
      if (j.contains(key)) decode(j.at(key), field, path.empty() ? key : path + "." + key);
    });
    for (const auto& item : j.items()) {
      if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
        fail(ErrorKind::kConfig, "unknown config key '" + (path.empty() ? item.key() : path + "." + item.key()) + "'");
      }
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) type_error("a boolean");
    out = j.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) type_error("an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (j.is_number_unsigned() || j.get<std::int64_t>() >= 0) {
        out = j.get<T>();
      } else {
        type_error("a nonnegative integer");
      }
    } else {
      out = j.get<T>();
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) type_error("a number");
    out = j.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) type_error("a string");
    out = j.get<std::string>();
  } else {
    // vectors
    if (!j.is_array()) type_error("an array");
    T tmp;
    for (std::size_t i = 0; i < j.size(); ++i) {
      typename T::value_type item{};
      decode(j[i], item, path + "[" + std::to_string(i) + "]");
      tmp.push_back(item);
    }
    out = std::move(tmp);
  }
}

}  // namespace config_detail

inline nlohmann::json to_json(const ExperimentConfig& cfg) {
  auto copy = cfg;
  return config_detail::encode(copy);
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  config_detail::decode(j, cfg, "");
  cfg.validate();
  return cfg;
}

// 16 hex digits; stable under key reordering because the canonical dump
// sorts object keys.
inline std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canonical = to_json(cfg).dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical.data(), canonical.size())));
  return buf;
}

// Applies `a.b.c=value`. The value is parsed as JSON when possible and
// taken as a string otherwise.
inline void apply_override(nlohmann::json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::kConfig, "override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &tree;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) fail(ErrorKind::kConfig, "override path '" + key + "' does not name a section");
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kConfig, "'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace vllr
