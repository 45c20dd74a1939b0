#pragma once

// Success and SEL evaluation on held-out houses, and arm comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/env.hpp"
#include "vllr/policy.hpp"
#include "vllr/rollout.hpp"

namespace vllr {

// S * t_min / max(t_min, t)
inline double sel(int success, int t_min, int t) {
  if (t < 1 || t_min < 1) fail(ErrorKind::kInvalidInput, "episode lengths must be positive");
  if (success != 0 && success != 1) fail(ErrorKind::kInvalidInput, "success must be 0 or 1");
  return success * static_cast<double>(t_min) / static_cast<double>(std::max(t_min, t));
}

struct EpisodeResult {
  int success = 0;
  int steps = 0;
  int t_min = 0;
  TaskKind kind = TaskKind::kObjNav;
  std::uint64_t seed = 0;  // episode draw index

  double sel_value() const { return sel(success, t_min, steps); }
};

inline constexpr double kZ95 = 1.959963984540054;

struct TaskSummary {
  std::string task;
  int episodes = 0;
  double success = 0.0;
  double sel = 0.0;
  double success_half_width = 0.0;  // normal approximation on the Bernoulli mean
  double sel_half_width = 0.0;      // normal approximation on the SEL mean
};

struct EvalReport {
  std::vector<TaskSummary> tasks;  // in task order
  TaskSummary overall;
  std::string config_hash;
  std::vector<EpisodeResult> episodes;

  const TaskSummary& task(const std::string& name) const {
    for (const auto& t : tasks) {
      if (t.task == name) return t;
    }
    fail(ErrorKind::kInvalidInput, "report has no task '" + name + "'");
  }
};

inline TaskSummary summarize(const std::string& name, const std::vector<EpisodeResult>& eps) {
  TaskSummary s;
  s.task = name;
  s.episodes = static_cast<int>(eps.size());
  if (eps.empty()) return s;
  const double n = static_cast<double>(eps.size());
  double sel_sq = 0.0;
  for (const auto& e : eps) {
    s.success += e.success;
    s.sel += e.sel_value();
  }
  s.success /= n;
  s.sel /= n;
  for (const auto& e : eps) sel_sq += (e.sel_value() - s.sel) * (e.sel_value() - s.sel);
  s.success_half_width = kZ95 * std::sqrt(s.success * (1.0 - s.success) / n);
  s.sel_half_width = kZ95 * std::sqrt(sel_sq / n / n);
  return s;
}

// Percentile-bootstrap 95% half-width of the mean SEL.
inline double sel_bootstrap_half_width(const std::vector<EpisodeResult>& eps, int resamples, std::uint64_t seed) {
  if (eps.empty() || resamples < 2) fail(ErrorKind::kInvalidInput, "bootstrap needs episodes and >= 2 resamples");
  std::vector<double> v;
  for (const auto& e : eps) v.push_back(e.sel_value());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (double& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[pick(rng)];
    m = s / static_cast<double>(v.size());
  }
  std::sort(means.begin(), means.end());
  const auto at = [&](double q) { return means[static_cast<std::size_t>(q * static_cast<double>(resamples - 1))]; };
  return 0.5 * (at(0.975) - at(0.025));
}

inline EvalReport assemble_report(std::vector<EpisodeResult> episodes, const std::vector<TaskKind>& kinds,
                                  std::string config_hash) {
  EvalReport r;
  r.config_hash = std::move(config_hash);
  for (TaskKind k : kinds) {
    std::vector<EpisodeResult> sub;
    for (const auto& e : episodes) {
      if (e.kind == k) sub.push_back(e);
    }
    r.tasks.push_back(summarize(to_string(k), sub));
  }
  r.overall = summarize("overall", episodes);
  r.episodes = std::move(episodes);
  return r;
}

struct EvalOptions {
  int episodes_per_task = 200;
  std::uint64_t seed = 7;
  bool greedy = true;
  EnvConfig env;
  std::string config_hash;
};

// Runs `episodes_per_task` episodes per task kind on `houses`; episode draws
// depend only on (seed, task, index).
inline EvalReport evaluate(const PolicyParams& policy, const std::vector<HouseSpec>& houses,
                           const std::vector<TaskKind>& kinds, const EvalOptions& opt) {
  if (houses.empty()) fail(ErrorKind::kInvalidInput, "evaluation house set is empty");
  if (kinds.empty()) fail(ErrorKind::kInvalidInput, "evaluation task list is empty");
  if (opt.episodes_per_task < 1) fail(ErrorKind::kInvalidInput, "episodes_per_task must be positive");
  EpisodeSource source(&houses, kinds, opt.seed);
  Env env(opt.env);
  std::vector<EpisodeResult> results;
  for (TaskKind k : kinds) {
    std::mt19937_64 rng(counter_hash(opt.seed, 0xe7a1ULL, static_cast<std::uint64_t>(k), 0));
    for (int i = 0; i < opt.episodes_per_task; ++i) {
      source.start(env, 0xe7a1ULL + static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i), k);
      std::vector<double> obs = env.observe().features;
      while (true) {
        const auto probs = action_probabilities(policy, obs);
        const int a = opt.greedy ? greedy_action(probs) : sample_action(probs, rng);
        auto sr = env.step(a);
        if (sr.done) break;
        obs = std::move(sr.observation.features);
      }
      const auto& s = env.state();
      results.push_back({s.success ? 1 : 0, s.step_count, s.task.t_min, k, static_cast<std::uint64_t>(i)});
    }
  }
  return assemble_report(std::move(results), kinds, opt.config_hash);
}

// Replays the A* expert on the same episode draws as `evaluate`.
inline EvalReport evaluate_expert(const std::vector<HouseSpec>& houses, const std::vector<TaskKind>& kinds,
                                  const EvalOptions& opt) {
  EpisodeSource source(&houses, kinds, opt.seed);
  Env env(opt.env);
  std::vector<EpisodeResult> results;
  for (TaskKind k : kinds) {
    for (int i = 0; i < opt.episodes_per_task; ++i) {
      source.start(env, 0xe7a1ULL + static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i), k);
      for (int a : expert_trajectory(env.house(), env.state())) {
        if (env.step(a).done) break;
      }
      const auto& s = env.state();
      results.push_back({s.success ? 1 : 0, s.step_count, s.task.t_min, k, static_cast<std::uint64_t>(i)});
    }
  }
  return assemble_report(std::move(results), kinds, opt.config_hash);
}

struct DeltaRow {
  std::string task;
  double d_success = 0.0;  // b - a
  double d_sel = 0.0;
  double success_half_width = 0.0;  // pooled: sqrt(hw_a^2 + hw_b^2)
  double sel_half_width = 0.0;
};

inline std::vector<DeltaRow> compare(const EvalReport& a, const EvalReport& b) {
  if (a.tasks.size() != b.tasks.size()) fail(ErrorKind::kInvalidInput, "reports cover different task sets");
  std::vector<DeltaRow> rows;
  auto row = [](const TaskSummary& x, const TaskSummary& y) {
    return DeltaRow{x.task, y.success - x.success, y.sel - x.sel,
                    std::hypot(x.success_half_width, y.success_half_width),
                    std::hypot(x.sel_half_width, y.sel_half_width)};
  };
  for (const auto& ta : a.tasks) {
    const auto it = std::find_if(b.tasks.begin(), b.tasks.end(), [&](const TaskSummary& t) { return t.task == ta.task; });
    if (it == b.tasks.end()) fail(ErrorKind::kInvalidInput, "task '" + ta.task + "' missing from the second report");
    rows.push_back(row(ta, *it));
  }
  rows.push_back(row(a.overall, b.overall));
  return rows;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const TaskSummary& s) {
  return {{"task", s.task},
          {"episodes", s.episodes},
          {"success", s.success},
          {"sel", s.sel},
          {"success_half_width", s.success_half_width},
          {"sel_half_width", s.sel_half_width}};
}

inline TaskSummary task_summary_from_json(const nlohmann::json& j) {
  try {
    return {j.at("task").get<std::string>(),          j.at("episodes").get<int>(),
            j.at("success").get<double>(),            j.at("sel").get<double>(),
            j.at("success_half_width").get<double>(), j.at("sel_half_width").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("malformed task summary: ") + e.what());
  }
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : r.tasks) tasks.push_back(to_json(t));
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : r.episodes) {
    eps.push_back({{"task", to_string(e.kind)}, {"index", e.seed}, {"success", e.success}, {"steps", e.steps}, {"t_min", e.t_min}});
  }
  return {{"config_hash", r.config_hash}, {"tasks", tasks}, {"overall", to_json(r.overall)}, {"episodes", eps}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& t : j.at("tasks")) r.tasks.push_back(task_summary_from_json(t));
    r.overall = task_summary_from_json(j.at("overall"));
    if (j.contains("episodes")) {
      for (const auto& e : j["episodes"]) {
        r.episodes.push_back({e.at("success").get<int>(), e.at("steps").get<int>(), e.at("t_min").get<int>(),
                              task_kind_from_string(e.at("task").get<std::string>()), e.at("index").get<std::uint64_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("malformed report: ") + e.what());
  }
  return r;
}

inline std::string report_csv(const EvalReport& r, const std::string& arm) {
  std::ostringstream os;
  os.precision(17);
  os << "arm,task,episodes,success,sel,success_half_width,sel_half_width\n";
  auto line = [&](const TaskSummary& t) {
    os << arm << ',' << t.task << ',' << t.episodes << ',' << t.success << ',' << t.sel << ',' << t.success_half_width
       << ',' << t.sel_half_width << '\n';
  };
  for (const auto& t : r.tasks) line(t);
  line(r.overall);
  return os.str();
}

inline std::string delta_csv(const std::vector<DeltaRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "task,d_success,d_sel,success_half_width,sel_half_width\n";
  for (const auto& d : rows) {
    os << d.task << ',' << d.d_success << ',' << d.d_sel << ',' << d.success_half_width << ',' << d.sel_half_width << '\n';
  }
  return os.str();
}

}  // namespace vllr
