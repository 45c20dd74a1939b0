#pragma once

// Subcommand implementations behind the vllr CLI. Each writes its outputs
// under a run directory together with the resolved config and a manifest.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/checkpoint.hpp"
#include "vllr/config.hpp"
#include "vllr/experiment.hpp"
#include "vllr/io.hpp"
#include "vllr/metrics.hpp"
#include "vllr/progress.hpp"
#include "vllr/trainer.hpp"

#ifndef VLLR_VERSION
#define VLLR_VERSION "0.1.0"
#endif

namespace vllr {

namespace fs = std::filesystem;

// Run directory: explicit --out, else $VLLR_RUN_DIR, else <output_dir>/<config hash>.
inline fs::path resolve_run_dir(const ExperimentConfig& cfg, const std::string& out) {
  if (!out.empty()) return out;
  if (const char* env = std::getenv("VLLR_RUN_DIR"); env && *env) return env;
  return fs::path(cfg.output_dir) / config_hash(cfg);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class RunManifest {
 public:
  RunManifest(fs::path run_dir, const ExperimentConfig& cfg, std::string command) : dir_(std::move(run_dir)) {
    data_ = {{"config_hash", config_hash(cfg)},
             {"command", std::move(command)},
             {"code_version", VLLR_VERSION},
             {"started_at", utc_timestamp()},
             {"finished_at", nullptr},
             {"status", "running"},
             {"stage_steps", {{"stage1", 0}, {"stage2", 0}}},
             {"checkpoints", nlohmann::json::array()}};
    fs::create_directories(dir_);
    write_file_atomic(dir_ / "config.json", to_json(cfg).dump(2) + "\n");
    flush();
  }

  nlohmann::json& data() { return data_; }

  void add_checkpoint(const fs::path& p) { data_["checkpoints"].push_back(p.string()); }

  void finish(const std::string& status = "ok") {
    data_["finished_at"] = utc_timestamp();
    data_["status"] = status;
    flush();
  }

  void flush() { write_file_atomic(dir_ / "manifest.json", data_.dump(2) + "\n"); }

 private:
  fs::path dir_;
  nlohmann::json data_;
};

// ---------------------------------------------------------------------------
// Houses

inline nlohmann::json house_file_header(int count, std::uint64_t seed, const HouseParams& p) {
  return {{"format", "vllr-houses"},
          {"version", 1},
          {"count", count},
          {"seed", seed},
          {"params",
           {{"rooms_min", p.rooms_min},
            {"rooms_max", p.rooms_max},
            {"objects_per_room_min", p.objects_per_room_min},
            {"objects_per_room_max", p.objects_per_room_max},
            {"width", p.width},
            {"height", p.height}}}};
}

// Line-delimited house specs for seeds seed .. seed+count-1, preceded by a
// header line.
inline void cmd_gen_houses(int count, std::uint64_t seed, const HouseParams& params, const fs::path& out) {
  if (count < 0) fail(ErrorKind::kConfig, "house count must be >= 0");
  params.validate();
  std::string text = house_file_header(count, seed, params).dump() + "\n";
  for (int i = 0; i < count; ++i) text += to_json(generate_house(seed + static_cast<std::uint64_t>(i), params)).dump() + "\n";
  write_file_atomic(out, text);
}

inline std::vector<HouseSpec> load_houses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open house file '" + path.string() + "'");
  std::vector<HouseSpec> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      fail(ErrorKind::kIo, path.string() + ":" + std::to_string(lineno) + ": not valid JSON");
    }
    if (lineno == 1 && j.contains("format")) continue;
    try {
      out.push_back(house_from_json(j));
    } catch (const Error& e) {
      fail(ErrorKind::kIo, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training and evaluation

inline fs::path cmd_pretrain(const ExperimentConfig& cfg, const fs::path& run_dir, std::ostream& log = std::cout) {
  RunManifest manifest(run_dir, cfg, "pretrain");
  const auto houses = train_houses(cfg);
  const PretrainResult pre = pretrain(cfg, houses);
  std::string lines;
  for (std::size_t i = 0; i < pre.bc.epoch_losses.size(); ++i) {
    lines += nlohmann::json{{"epoch", i + 1}, {"loss", pre.bc.epoch_losses[i]}}.dump() + "\n";
  }
  write_file_atomic(run_dir / "bc_log.jsonl", lines);
  const fs::path ckpt = run_dir / "checkpoints" / "pretrained.ckpt";
  save_checkpoint(ckpt, Checkpoint{pre.bc.policy, std::nullopt, config_hash(cfg), 0, "pretrain"});
  manifest.add_checkpoint(ckpt);
  EvalOptions opt{cfg.eval.episodes_per_task, cfg.eval.seed, cfg.eval.greedy, cfg.env.cfg, config_hash(cfg)};
  const EvalReport train_report = evaluate(pre.bc.policy, houses, cfg.task_kinds(), opt);
  write_file_atomic(run_dir / "pretrain_report.json", to_json(train_report).dump(2) + "\n");
  log << "behavior cloning: loss " << pre.bc.initial_loss << " -> " << pre.bc.epoch_losses.back()
      << ", training-house success " << train_report.overall.success << "\n";
  manifest.finish();
  return ckpt;
}

inline PolicyParams load_policy_for(const ExperimentConfig& cfg, const fs::path& path) {
  Checkpoint c = load_checkpoint(path);
  check_compatible(c, cfg.env.cfg.observation_dim(), cfg.env.cfg.num_actions, path.string());
  return c.policy;
}

inline EvalReport cmd_train(const ExperimentConfig& cfg, const fs::path& run_dir, const std::string& checkpoint,
                            std::ostream& log = std::cout) {
  RunManifest manifest(run_dir, cfg, "train");
  const auto tr = train_houses(cfg);
  const auto te = test_houses(cfg);
  std::string init = checkpoint.empty() ? cfg.train.pretrained_checkpoint : checkpoint;
  PolicyParams policy;
  if (init.empty()) {
    policy = pretrain(cfg, tr).bc.policy;
    const fs::path ckpt = run_dir / "checkpoints" / "pretrained.ckpt";
    save_checkpoint(ckpt, Checkpoint{policy, std::nullopt, config_hash(cfg), 0, "pretrain"});
    manifest.add_checkpoint(ckpt);
  } else {
    policy = load_policy_for(cfg, init);
  }
  TrainIo io;
  io.run_dir = run_dir;
  io.on_record = [&log](const nlohmann::json& r) {
    if (r["stage"] == "eval" || r["stage"] == "final_eval" || r["stage"] == "boundary") log << r.dump() << "\n";
  };
  TrainResult res;
  try {
    res = train(cfg, policy, tr, te, io);
  } catch (const NumericalError& e) {
    write_file_atomic(run_dir / "numerical_error.json", e.dump().dump() + "\n");
    manifest.finish("failed");
    throw;
  } catch (...) {
    manifest.finish("failed");
    throw;
  }
  manifest.data()["stage_steps"] = {{"stage1", res.stage1_steps}, {"stage2", res.stage2_steps}};
  for (const char* name : {"stage1.ckpt", "latest.ckpt", "final.ckpt"}) {
    if (fs::exists(run_dir / "checkpoints" / name)) manifest.add_checkpoint(run_dir / "checkpoints" / name);
  }
  write_file_atomic(run_dir / "report.json", to_json(res.final_report).dump(2) + "\n");
  write_file_atomic(run_dir / "report.csv", report_csv(res.final_report, "train"));
  manifest.finish();
  return res.final_report;
}

inline EvalReport cmd_eval(const ExperimentConfig& cfg, const fs::path& run_dir, const std::string& checkpoint,
                           const std::string& houses_file) {
  if (checkpoint.empty()) fail(ErrorKind::kConfig, "eval needs --checkpoint");
  RunManifest manifest(run_dir, cfg, "eval");
  const PolicyParams policy = load_policy_for(cfg, checkpoint);
  const auto houses = houses_file.empty() ? test_houses(cfg) : load_houses(houses_file);
  EvalOptions opt{cfg.eval.episodes_per_task, cfg.eval.seed, cfg.eval.greedy, cfg.env.cfg, config_hash(cfg)};
  const EvalReport r = evaluate(policy, houses, cfg.task_kinds(), opt);
  write_file_atomic(run_dir / "report.json", to_json(r).dump(2) + "\n");
  write_file_atomic(run_dir / "report.csv", report_csv(r, fs::path(checkpoint).stem().string()));
  manifest.finish();
  return r;
}

inline std::vector<DeltaRow> cmd_compare(const fs::path& a, const fs::path& b, const fs::path& out_csv) {
  const auto ra = report_from_json(read_json_file(a.string()));
  const auto rb = report_from_json(read_json_file(b.string()));
  const auto rows = compare(ra, rb);
  if (!out_csv.empty()) write_file_atomic(out_csv, delta_csv(rows));
  return rows;
}

// ---------------------------------------------------------------------------
// Offline filtering of recorded traces

struct FilterTraceStats {
  int records = 0;
  int malformed = 0;
};

// Input: one JSON object per line with episode_id, values and optionally
// num_subgoals. Output CSV columns: episode_id,step,raw,filtered,reward.
inline FilterTraceStats cmd_filter_trace(const fs::path& in_path, std::optional<int> half_width,
                                         std::optional<double> threshold, const fs::path& out_path,
                                         int default_half_width, std::ostream& warn = std::cerr) {
  std::ifstream in(in_path);
  if (!in) fail(ErrorKind::kIo, "cannot open trace file '" + in_path.string() + "'");
  FilterTraceStats st;
  std::ostringstream csv;
  csv.precision(17);
  csv << "episode_id,step,raw,filtered,reward\n";
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++st.records;
    try {
      const auto j = nlohmann::json::parse(line);
      ProgressTrace trace;
      const auto& id = j.at("episode_id");
      trace.episode_id = id.is_string() ? id.get<std::string>() : id.dump();
      trace.values = j.at("values").get<std::vector<double>>();
      trace.validate();
      FilterConfig fc;
      fc.half_width = half_width.value_or(default_half_width);
      if (threshold) {
        fc.threshold = *threshold;
      } else if (j.contains("num_subgoals")) {
        fc = FilterConfig::for_plan(fc.half_width, j.at("num_subgoals").get<int>());
      } else {
        throw Error(ErrorKind::kInvalidInput, "no threshold given and the record has no num_subgoals");
      }
      fc.validate();
      const auto res = saturation_safe_rewards_detailed(trace, fc);
      for (std::size_t i = 0; i < trace.values.size(); ++i) {
        csv << trace.episode_id << ',' << i << ',' << trace.values[i] << ',' << res.filtered.values[i] << ','
            << res.rewards.values[i] << '\n';
      }
    } catch (const std::exception& e) {
      ++st.malformed;
      warn << "warning: " << in_path.string() << ":" << lineno << ": skipped (" << e.what() << ")\n";
    }
  }
  if (st.records == 0) fail(ErrorKind::kInvalidInput, "trace file '" + in_path.string() + "' is empty");
  if (st.malformed == st.records) fail(ErrorKind::kInvalidInput, "every record in '" + in_path.string() + "' is malformed");
  write_file_atomic(out_path, csv.str());
  return st;
}

}  // namespace vllr
