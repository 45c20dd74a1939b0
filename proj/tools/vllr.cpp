#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vllr/commands.hpp"
#include "vllr/config_yaml.hpp"
#include "vllr/vllr.hpp"

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string houses;
  std::string checkpoint;
  std::string endpoint_url;
  std::string profile;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (YAML or JSON)");
  cmd->add_option("--set", c.sets, "override a config key, e.g. --set ppo.gamma=0.95")->take_all();
  cmd->add_option("--seed", c.seed, "experiment seed");
  cmd->add_option("--out", c.out, "output path or run directory");
}

vllr::ExperimentConfig resolve(const Common& c) {
  std::vector<std::string> sets = c.sets;
  if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
  if (!c.profile.empty()) sets.push_back("estimator.profile=\"" + c.profile + "\"");
  if (!c.endpoint_url.empty()) {
    sets.push_back("endpoints.decomposer=\"external\"");
    sets.push_back("endpoints.estimator=\"external\"");
    sets.push_back("endpoints.decomposer_url=\"" + c.endpoint_url + "/decompose\"");
    sets.push_back("endpoints.estimator_url=\"" + c.endpoint_url + "/progress\"");
  }
  return vllr::load_config(c.config, sets);
}

int report_error(const std::string& kind, const std::string& message, const nlohmann::json& extra = nullptr) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  if (!extra.is_null()) j["detail"] = extra;
  std::cerr << j.dump() << std::endl;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vllr: staged progress/self-certainty rewards on a gridworld"};
  app.require_subcommand(1);
  Common c;

  auto* gen = app.add_subcommand("gen-houses", "write line-delimited house specs");
  add_common(gen, c);
  int count = 100;
  gen->add_option("--count", count, "number of houses");

  auto* pre = app.add_subcommand("pretrain", "behavior cloning on A* demonstrations");
  add_common(pre, c);

  auto* train = app.add_subcommand("train", "value initialization then PPO finetuning");
  add_common(train, c);
  train->add_option("--checkpoint", c.checkpoint, "pretrained policy checkpoint");
  train->add_option("--endpoint-url", c.endpoint_url, "base url of external decomposer/estimator services");
  train->add_option("--profile", c.profile, "estimator profile")
      ->check(CLI::IsMember({"oracle", "late_gradual", "early_saturating", "uncorrelated"}));

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on held-out houses");
  add_common(eval, c);
  eval->add_option("--checkpoint", c.checkpoint, "policy checkpoint")->required();
  eval->add_option("--houses", c.houses, "house file from gen-houses (default: configured test houses)");

  auto* cmp = app.add_subcommand("compare", "per-task deltas between two reports");
  std::string report_a, report_b, cmp_out;
  cmp->add_option("report_a", report_a, "baseline report.json")->required();
  cmp->add_option("report_b", report_b, "treatment report.json")->required();
  cmp->add_option("--out", cmp_out, "delta CSV path");

  auto* ft = app.add_subcommand("filter-trace", "apply the spike filter to recorded progress traces");
  add_common(ft, c);
  std::string trace_in;
  std::optional<int> half_width;
  std::optional<double> threshold;
  ft->add_option("--in", trace_in, "JSONL traces {episode_id, values[, num_subgoals]}")->required();
  ft->add_option("-S,--half-width", half_width, "window half-width S");
  ft->add_option("-T,--threshold", threshold, "spike threshold T");

  auto* render = app.add_subcommand("render", "print a house and task as ASCII");
  add_common(render, c);
  std::string task = "objnav";
  std::uint64_t episode_seed = 0;
  render->add_option("--task", task, "task kind");
  render->add_option("--episode", episode_seed, "reset seed");

  auto* abl = app.add_subcommand("ablation", "train base/scr/vlm/full arms over several seeds");
  add_common(abl, c);
  int num_seeds = 3;
  std::vector<std::string> arm_names = {"base", "scr", "vlm", "full"};
  abl->add_option("--seeds", num_seeds, "number of seeds (config seed, +1, ...)");
  abl->add_option("--arms", arm_names, "arms to run")->take_all();

  auto* show = app.add_subcommand("show-config", "print the resolved config and its hash");
  add_common(show, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const auto cfg = resolve(c);
      const std::string out = c.out.empty() ? "houses.jsonl" : c.out;
      vllr::cmd_gen_houses(count, cfg.seed, cfg.houses.params, out);
      std::cout << "wrote " << count << " houses to " << out << "\n";
    } else if (*pre) {
      const auto cfg = resolve(c);
      const auto dir = vllr::resolve_run_dir(cfg, c.out);
      std::cout << "checkpoint: " << vllr::cmd_pretrain(cfg, dir).string() << "\n";
    } else if (*train) {
      const auto cfg = resolve(c);
      const auto dir = vllr::resolve_run_dir(cfg, c.out);
      const auto r = vllr::cmd_train(cfg, dir, c.checkpoint);
      std::cout << "run directory: " << dir.string() << "\nsuccess " << r.overall.success << " sel " << r.overall.sel << "\n";
    } else if (*eval) {
      const auto cfg = resolve(c);
      const auto dir = vllr::resolve_run_dir(cfg, c.out);
      const auto r = vllr::cmd_eval(cfg, dir, c.checkpoint, c.houses);
      std::cout << vllr::report_csv(r, "eval");
    } else if (*cmp) {
      std::cout << vllr::delta_csv(vllr::cmd_compare(report_a, report_b, cmp_out));
    } else if (*ft) {
      const auto cfg = resolve(c);
      const std::string out = c.out.empty() ? "filtered.csv" : c.out;
      const auto st = vllr::cmd_filter_trace(trace_in, half_width, threshold, out, cfg.filter.half_width);
      std::cout << "filtered " << (st.records - st.malformed) << " of " << st.records << " records into " << out << "\n";
      if (st.malformed > 0) std::cerr << st.malformed << " malformed records skipped\n";
    } else if (*render) {
      const auto cfg = resolve(c);
      const auto house = vllr::generate_house(cfg.seed, cfg.houses.params);
      vllr::Env env(cfg.env.cfg);
      const auto rr = env.reset(house, vllr::task_kind_from_string(task), episode_seed);
      std::cout << rr.instruction.describe() << "\n" << env.render() << "\n";
      const auto plan = vllr::decompose_oracle(rr.scene_graph, rr.instruction);
      for (const auto& g : plan.subgoals) std::cout << g.index << ". " << g.description << "\n";
      std::cout << "t_min " << env.state().task.t_min << ", max_steps " << env.state().task.max_steps << "\n";
    } else if (*abl) {
      const auto cfg = resolve(c);
      const auto dir = vllr::resolve_run_dir(cfg, c.out);
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < num_seeds; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
      std::vector<vllr::ArmSpec> arms;
      for (const auto& name : arm_names) {
        bool found = false;
        for (const auto& a : vllr::default_arms()) {
          if (a.name == name) {
            arms.push_back(a);
            found = true;
          }
        }
        if (!found) throw vllr::Error(vllr::ErrorKind::kConfig, "unknown arm '" + name + "'");
      }
      vllr::RunManifest manifest(dir, cfg, "ablation");
      const auto results = vllr::run_ablation(cfg, seeds, arms, dir, &std::cout);
      vllr::write_file_atomic(dir / "ablation.csv", vllr::ablation_csv(results));
      vllr::write_file_atomic(dir / "curves.csv", vllr::curves_csv(results));
      manifest.finish();
      std::cout << vllr::ablation_csv(results);
    } else if (*show) {
      const auto cfg = resolve(c);
      std::cout << vllr::to_json(cfg).dump(2) << "\nhash " << vllr::config_hash(cfg) << "\n";
    }
  } catch (const vllr::NumericalError& e) {
    return report_error(vllr::to_string(e.kind()), e.what(), e.dump());
  } catch (const vllr::ProtocolError& e) {
    return report_error(vllr::to_string(e.kind()), e.what(), {{"raw_response", e.raw_response()}});
  } catch (const vllr::Error& e) {
    return report_error(vllr::to_string(e.kind()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal", e.what());
  }
  return 0;
}
