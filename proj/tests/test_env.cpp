#include <gtest/gtest.h>

#include <set>

#include "oracles/bfs.hpp"
#include "support/houses.hpp"
#include "vllr/env.hpp"
#include "vllr/progress_estimator.hpp"

using namespace vllr;
using testing_support::corridor;

namespace {

int count_generated(HouseParams params) {
  int n = 0;
  for (std::uint64_t s = 0; s < 20; ++s) n += check_house(generate_house(s, params)).empty() ? 1 : 0;
  return n;
}

}  // namespace

TEST(House, DeterministicPerSeed) {
  HouseParams p;
  p.rooms_min = p.rooms_max = 3;
  const auto a = generate_house(7, p), b = generate_house(7, p);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_EQ(a.rooms.size(), 3u);
}

TEST(House, DifferentSeedsDifferentLayouts) {
  HouseParams p;
  int distinct = 0;
  for (std::uint64_t s = 0; s < 100; ++s) distinct += layout_hash(generate_house(2 * s, p)) != layout_hash(generate_house(2 * s + 1, p));
  EXPECT_EQ(distinct, 100);
}

TEST(House, StructurallyValid) {
  EXPECT_EQ(count_generated({}), 20);
  HouseParams big;
  big.width = big.height = 16;
  big.rooms_min = 2;
  big.rooms_max = 5;
  EXPECT_EQ(count_generated(big), 20);
}

TEST(House, JsonRoundTrip) {
  const auto h = generate_house(31, {});
  EXPECT_EQ(to_json(house_from_json(to_json(h))), to_json(h));
}

TEST(House, InfeasibleParams) {
  HouseParams p;
  p.rooms_min = 4;
  p.rooms_max = 2;
  EXPECT_THROW(generate_house(1, p), Error);
  HouseParams tiny;
  tiny.width = tiny.height = 4;
  tiny.rooms_min = tiny.rooms_max = 8;
  try {
    generate_house(1, tiny);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kGeneration);
  }
}

TEST(Reset, PickupWithoutObjectsIsTaskAssignmentError) {
  HouseParams p;
  p.rooms_min = p.rooms_max = 1;
  p.objects_per_room_min = p.objects_per_room_max = 0;
  const auto h = generate_house(3, p);
  Env env;
  try {
    env.reset(h, TaskKind::kPickup, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTaskAssignment);
  }
}

TEST(Reset, FetchTargetsTheMug) {
  const auto h = corridor(5, {{"mug", 5, 1, true}, {"chair", 3, 1, false}});
  Env env;
  const auto rr = env.reset(h, TaskKind::kFetch, 1);
  EXPECT_EQ(rr.instruction.category, "mug");
  EXPECT_EQ(env.state().task.target_object, 0);
  EXPECT_EQ(env.state().task.success, SuccessPredicate::kHoldingTarget);
}

TEST(Reset, RelativeTargetIsLargest) {
  auto h = corridor(6, {{"apple", 1, 1, true}, {"apple", 6, 1, true}});
  h.objects[0].size = SizeClass::kSmall;
  h.objects[1].size = SizeClass::kLarge;
  Env env;
  TaskRequest req;
  req.category = "apple";
  req.attribute = RelAttribute::kLargest;
  env.reset(h, TaskKind::kObjNavRel, 0, req);
  EXPECT_EQ(env.state().task.target_object, 1);
}

TEST(Reset, RoomVisitNeedsEnoughRooms) {
  const auto h = corridor(4, {{"chair", 4, 1, false}});
  Env env;
  TaskRequest req;
  req.rooms_required = 2;
  EXPECT_THROW(env.reset(h, TaskKind::kRoomVisit, 0, req), Error);
}

TEST(Reset, MaxStepsFromMinimumSteps) {
  Env env;
  const auto h = generate_house(12, {});
  env.reset(h, TaskKind::kObjNav, 3);
  const auto& t = env.state().task;
  EXPECT_EQ(t.max_steps, std::min(16 * t.t_min, 600));
  EXPECT_EQ(env.observe().features.size(), static_cast<std::size_t>(env.config().observation_dim()));
}

TEST(Step, MoveIntoWallKeepsPosition) {
  const auto h = corridor(3, {{"chair", 3, 1, false}});
  Env env;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    env.reset(h, TaskKind::kObjNav, seed);
    if (env.state().heading == 0) break;  // facing north, into the wall
  }
  ASSERT_EQ(env.state().heading, 0);
  const Vec2 before = env.state().agent;
  env.step(static_cast<int>(Action::kMoveFwd));
  EXPECT_EQ(env.state().agent, before);
  EXPECT_EQ(env.state().step_count, 1);
}

TEST(Step, PickupAndDone) {
  const auto h = corridor(2, {{"mug", 2, 1, true}});
  Env env;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    env.reset(h, TaskKind::kPickup, seed);
    if (env.state().heading == 1) break;
  }
  ASSERT_EQ(env.state().heading, 1);
  EXPECT_EQ(env.state().task.t_min, 2);
  EXPECT_EQ(oracle::bfs_min_steps(env), 2);
  auto r = env.step(static_cast<int>(Action::kPickup));
  EXPECT_EQ(env.state().held, std::optional<int>(0));
  EXPECT_FALSE(r.done);
  r = env.step(static_cast<int>(Action::kDone));
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.r_task, 1);
  EXPECT_THROW(env.step(0), Error);
}

TEST(Step, DoneWithoutSuccessEndsEpisode) {
  const auto h = corridor(5, {{"chair", 5, 1, false}});
  Env env;
  env.reset(h, TaskKind::kObjNav, 2);
  const auto r = env.step(static_cast<int>(Action::kDone));
  EXPECT_TRUE(r.done);
  EXPECT_EQ(r.r_task, 0);
}

TEST(Step, TruncatesAtMaxSteps) {
  const auto h = corridor(5, {{"chair", 5, 1, false}});
  Env env;
  env.reset(h, TaskKind::kObjNav, 2);
  const int limit = env.state().task.max_steps;
  StepResult r;
  for (int i = 0; i < limit; ++i) r = env.step(static_cast<int>(Action::kRotateLSmall));
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(env.state().success);
}

TEST(Step, RejectsOutOfRangeAction) {
  const auto h = corridor(3, {{"chair", 3, 1, false}});
  Env env;
  env.reset(h, TaskKind::kObjNav, 0);
  EXPECT_THROW(env.step(10), Error);
  EXPECT_THROW(env.step(-1), Error);
}

TEST(MinSteps, CorridorMatchesBfs) {
  const auto h = corridor(5, {{"chair", 5, 1, false}});
  Env env;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    env.reset(h, TaskKind::kObjNav, seed);
    EXPECT_EQ(env.state().task.t_min, oracle::bfs_min_steps(env)) << "seed " << seed;
  }
}

TEST(MinSteps, WalledOffTargetIsInfeasible) {
  const auto h = corridor(5, {{"chair", 2, 1, false}, {"mug", 3, 1, true}, {"chair", 4, 1, false}});
  Env env;
  TaskRequest req;
  req.category = "mug";
  try {
    env.reset(h, TaskKind::kObjNav, 0, req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
}

TEST(MinSteps, GeneratedInstancesMatchBfs) {
  Env env;
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 40; ++seed) {
    const auto h = generate_house(seed, {});
    const auto kind = static_cast<TaskKind>(seed % kNumTaskKinds);
    try {
      env.reset(h, kind, seed);
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::kTaskAssignment);
      continue;
    }
    EXPECT_EQ(env.state().task.t_min, oracle::bfs_min_steps(env)) << "seed " << seed;
    ++checked;
  }
}

TEST(Expert, ReplaySucceedsInMinimumSteps) {
  Env env;
  int checked = 0;
  for (std::uint64_t seed = 100; checked < 60; ++seed) {
    const auto h = generate_house(seed, {});
    try {
      env.reset(h, static_cast<TaskKind>(seed % kNumTaskKinds), seed);
    } catch (const Error&) {
      continue;
    }
    const auto actions = expert_trajectory(env.house(), env.state());
    EXPECT_EQ(static_cast<int>(actions.size()), env.state().task.t_min);
    StepResult r;
    for (int a : actions) r = env.step(a);
    EXPECT_TRUE(r.done);
    EXPECT_TRUE(env.state().success);
    ++checked;
  }
}

TEST(Subgoals, LatchInPlanOrderDuringExpertReplay) {
  Env env;
  int checked = 0;
  for (std::uint64_t seed = 500; checked < 40; ++seed) {
    const auto h = generate_house(seed, {});
    Env::ResetResult rr;
    try {
      rr = env.reset(h, static_cast<TaskKind>(seed % kNumTaskKinds), seed);
    } catch (const Error&) {
      continue;
    }
    const auto plan = decompose_oracle(rr.scene_graph, rr.instruction);
    env.attach_plan(plan);
    const auto actions = expert_trajectory(env.house(), env.state());
    double last = true_progress(env.state(), plan);
    for (int a : actions) {
      env.step(a);
      const double p = true_progress(env.state(), plan);
      EXPECT_GE(p, last);
      last = p;
    }
    EXPECT_EQ(last, 1.0);
    const auto& steps = env.state().plan_progress->latch_step;
    for (std::size_t k = 1; k < steps.size(); ++k) EXPECT_LE(steps[k - 1], steps[k]);
    const auto status = subgoal_status(env.state(), plan);
    for (bool b : status) EXPECT_TRUE(b);
    ++checked;
  }
}

TEST(Subgoals, GraspLatchesAfterPickup) {
  const auto h = corridor(2, {{"mug", 2, 1, true}});
  Env env;
  Env::ResetResult rr;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    rr = env.reset(h, TaskKind::kPickup, seed);
    if (env.state().heading == 1) break;
  }
  const auto plan = decompose_oracle(rr.scene_graph, rr.instruction);
  env.attach_plan(plan);
  EXPECT_FALSE(subgoal_status(env.state(), plan).back());
  env.step(static_cast<int>(Action::kPickup));
  EXPECT_TRUE(subgoal_status(env.state(), plan).back());
}

TEST(Subgoals, DanglingTargetRejected) {
  const auto h = corridor(3, {{"chair", 3, 1, false}});
  Env env;
  env.reset(h, TaskKind::kObjNav, 0);
  SubgoalPlan bad;
  bad.subgoals.push_back({1, "see it", "sight", {TargetRef::Kind::kObject, 5}});
  EXPECT_THROW(env.attach_plan(bad), Error);
}
