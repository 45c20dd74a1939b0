#include <gtest/gtest.h>

#include "vllr/metrics.hpp"
#include "vllr/trainer.hpp"

using namespace vllr;

namespace {

std::vector<HouseSpec> small_houses(int n, std::uint64_t base) {
  HouseParams p;
  p.rooms_max = 2;
  return make_house_set(p, base, n);
}

EvalOptions options(int episodes, bool greedy = true) {
  EvalOptions o;
  o.episodes_per_task = episodes;
  o.greedy = greedy;
  o.config_hash = "test";
  return o;
}

EvalReport synthetic_report(const std::vector<std::pair<int, int>>& success_and_steps, int t_min) {
  std::vector<EpisodeResult> eps;
  for (std::size_t i = 0; i < success_and_steps.size(); ++i) {
    eps.push_back({success_and_steps[i].first, success_and_steps[i].second, t_min, TaskKind::kObjNav, i});
  }
  return assemble_report(eps, {TaskKind::kObjNav}, "h");
}

}  // namespace

TEST(Sel, UnitCases) {
  EXPECT_EQ(sel(1, 10, 10), 1.0);
  EXPECT_EQ(sel(0, 10, 12), 0.0);
  EXPECT_EQ(sel(1, 10, 20), 0.5);
  EXPECT_EQ(sel(1, 10, 5), 1.0);
}

TEST(Sel, RejectsBadInputs) {
  EXPECT_THROW(sel(1, 0, 5), Error);
  EXPECT_THROW(sel(1, 5, 0), Error);
  EXPECT_THROW(sel(2, 5, 5), Error);
}

TEST(Evaluate, RandomPolicyIsNeitherPerfectNorHopeless) {
  const auto houses = small_houses(20, 500);
  const EnvConfig env;
  const auto policy = make_policy(env.observation_dim(), env.num_actions, {16}, 11);
  const auto r = evaluate(policy, houses, {TaskKind::kObjNav}, options(200, false));
  EXPECT_EQ(r.overall.episodes, 200);
  EXPECT_GT(r.overall.success, 0.0);
  EXPECT_LT(r.overall.success, 1.0);
  for (const auto& e : r.episodes) EXPECT_LE(e.sel_value(), static_cast<double>(e.success));
}

TEST(Evaluate, ExpertIsPerfect) {
  const auto houses = small_houses(20, 500);
  const auto r = evaluate_expert(houses, {TaskKind::kObjNav, TaskKind::kFetch}, options(50));
  EXPECT_EQ(r.overall.success, 1.0);
  EXPECT_EQ(r.overall.sel, 1.0);
  EXPECT_EQ(r.tasks.size(), 2u);
}

TEST(Evaluate, IsDeterministic) {
  const auto houses = small_houses(10, 500);
  const EnvConfig env;
  const auto policy = make_policy(env.observation_dim(), env.num_actions, {16}, 5);
  const auto a = evaluate(policy, houses, {TaskKind::kObjNav}, options(40, false));
  const auto b = evaluate(policy, houses, {TaskKind::kObjNav}, options(40, false));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Evaluate, RejectsEmptyInputs) {
  const EnvConfig env;
  const auto policy = make_policy(env.observation_dim(), env.num_actions, {8}, 1);
  EXPECT_THROW(evaluate(policy, {}, {TaskKind::kObjNav}, options(1)), Error);
  EXPECT_THROW(evaluate(policy, small_houses(1, 1), {}, options(1)), Error);
  EXPECT_THROW(evaluate(policy, small_houses(1, 1), {TaskKind::kObjNav}, options(0)), Error);
}

TEST(Compare, SelfComparisonIsZero) {
  const auto r = synthetic_report({{1, 10}, {0, 30}, {1, 20}}, 10);
  for (const auto& row : compare(r, r)) {
    EXPECT_EQ(row.d_success, 0.0);
    EXPECT_EQ(row.d_sel, 0.0);
  }
}

TEST(Compare, BetterArmHasPositiveDeltas) {
  const auto a = synthetic_report({{1, 20}, {0, 30}, {0, 30}, {1, 20}}, 10);
  const auto b = synthetic_report({{1, 10}, {1, 20}, {0, 30}, {1, 10}}, 10);
  const auto rows = compare(a, b);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].d_success, 0.25);
  EXPECT_DOUBLE_EQ(rows[0].d_sel, (1.0 + 0.5 + 1.0) / 4 - (0.5 + 0.5) / 4);
  EXPECT_EQ(rows[1].task, "overall");
  EXPECT_GT(rows[1].d_sel, 0.0);
}

TEST(Compare, MismatchedTasksError) {
  const auto a = synthetic_report({{1, 10}}, 10);
  auto b = a;
  b.tasks[0].task = "fetch";
  EXPECT_THROW(compare(a, b), Error);
  b.tasks.push_back(a.tasks[0]);
  EXPECT_THROW(compare(a, b), Error);
}

TEST(Summary, HalfWidthMatchesBootstrap) {
  std::mt19937_64 rng(8);
  std::vector<std::pair<int, int>> eps;
  for (int i = 0; i < 400; ++i) {
    const int s = rng() % 3 != 0;
    eps.push_back({s, 10 + static_cast<int>(rng() % 30)});
  }
  const auto r = synthetic_report(eps, 10);
  const double boot = sel_bootstrap_half_width(r.episodes, 1000, 3);
  EXPECT_NEAR(boot / r.overall.sel_half_width, 1.0, 0.2);
  const double p = r.overall.success;
  EXPECT_NEAR(r.overall.success_half_width, kZ95 * std::sqrt(p * (1 - p) / 400.0), 1e-15);
}

TEST(Report, JsonRoundTrip) {
  const auto r = synthetic_report({{1, 10}, {0, 30}, {1, 14}}, 10);
  const auto back = report_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(r).dump());
  EXPECT_THROW(report_from_json(nlohmann::json{{"tasks", 3}}), Error);
}

TEST(Report, CsvHasOneRowPerTaskPlusOverall) {
  const auto r = synthetic_report({{1, 10}, {0, 30}}, 10);
  const std::string csv = report_csv(r, "base");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("base,objnav,2,0.5,0.5,"), std::string::npos);
}
