#pragma once

// Ablation arms over a shared behavior-cloned policy per seed.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vllr/trainer.hpp"

namespace vllr {

struct ArmSpec {
  std::string name;
  bool value_init = false;  // run stage I with the configured stage1_steps
  bool self_certainty = false;  // keep the configured beta, else beta = 0
};

inline std::vector<ArmSpec> default_arms() {
  return {{"base", false, false}, {"scr", false, true}, {"vlm", true, false}, {"full", true, true}};
}

inline ExperimentConfig arm_config(const ExperimentConfig& cfg, const ArmSpec& arm) {
  ExperimentConfig c = cfg;
  if (!arm.value_init) c.train.stage1_steps = 0;
  if (!arm.self_certainty) c.weights.w.beta = 0.0;
  return c;
}

struct ArmResult {
  std::string arm;
  std::uint64_t seed = 0;
  double success = 0.0;
  double sel = 0.0;
  int episodes = 0;
  std::vector<CurvePoint> curve;
  std::int64_t stage2_steps = 0;
  double seconds = 0.0;
  EvalReport report;
};

struct SeedResult {
  std::uint64_t seed = 0;
  double pretrained_success = 0.0;
  double pretrained_sel = 0.0;
  std::vector<ArmResult> arms;

  const ArmResult& arm(const std::string& name) const {
    for (const auto& a : arms) {
      if (a.arm == name) return a;
    }
    fail(ErrorKind::kInvalidInput, "no arm named '" + name + "'");
  }
};

// First curve step whose success reaches `level`; max() when never reached.
inline std::int64_t steps_to_reach(const std::vector<CurvePoint>& curve, double level) {
  for (const auto& p : curve) {
    if (p.success >= level) return p.step;
  }
  return std::numeric_limits<std::int64_t>::max();
}

inline std::vector<SeedResult> run_ablation(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                            const std::vector<ArmSpec>& arms, const std::filesystem::path& run_dir = {},
                                            std::ostream* progress = nullptr) {
  std::vector<SeedResult> out;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig base = cfg;
    base.seed = seed;
    const auto tr = train_houses(base);
    const auto te = test_houses(base);
    const PretrainResult pre = pretrain(base, tr);
    SeedResult sr;
    sr.seed = seed;
    EvalOptions eo{base.eval.episodes_per_task, base.eval.seed, base.eval.greedy, base.env.cfg, config_hash(base)};
    const EvalReport pre_report = evaluate(pre.bc.policy, te, base.task_kinds(), eo);
    sr.pretrained_success = pre_report.overall.success;
    sr.pretrained_sel = pre_report.overall.sel;
    if (progress) {
      *progress << "seed " << seed << " pretrained: success " << sr.pretrained_success << " sel " << sr.pretrained_sel
                << std::endl;
    }
    for (const auto& arm : arms) {
      const ExperimentConfig c = arm_config(base, arm);
      TrainIo io;
      if (!run_dir.empty()) io.run_dir = run_dir / ("seed" + std::to_string(seed)) / arm.name;
      const auto t0 = std::chrono::steady_clock::now();
      const TrainResult res = train(c, pre.bc.policy, tr, te, io);
      ArmResult ar;
      ar.arm = arm.name;
      ar.seed = seed;
      ar.success = res.final_report.overall.success;
      ar.sel = res.final_report.overall.sel;
      ar.episodes = res.final_report.overall.episodes;
      ar.curve = res.curve;
      ar.stage2_steps = res.stage2_steps;
      ar.report = res.final_report;
      ar.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (progress) {
        *progress << "seed " << seed << " arm " << arm.name << ": success " << ar.success << " sel " << ar.sel << " ("
                  << ar.seconds << " s)" << std::endl;
      }
      sr.arms.push_back(std::move(ar));
    }
    out.push_back(std::move(sr));
  }
  return out;
}

inline std::string ablation_csv(const std::vector<SeedResult>& results) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,arm,success,sel,episodes,stage2_steps\n";
  for (const auto& s : results) {
    os << s.seed << ",pretrained," << s.pretrained_success << ',' << s.pretrained_sel << ",,0\n";
    for (const auto& a : s.arms) {
      os << s.seed << ',' << a.arm << ',' << a.success << ',' << a.sel << ',' << a.episodes << ',' << a.stage2_steps << '\n';
    }
  }
  return os.str();
}

inline std::string curves_csv(const std::vector<SeedResult>& results) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,arm,step,success,sel\n";
  for (const auto& s : results) {
    for (const auto& a : s.arms) {
      for (const auto& p : a.curve) os << s.seed << ',' << a.arm << ',' << p.step << ',' << p.success << ',' << p.sel << '\n';
    }
  }
  return os.str();
}

}  // namespace vllr
