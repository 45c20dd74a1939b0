#pragma once

// Long-horizon household tasks on a procedurally generated grid house.
// The agent has a cell and one of four headings; objects block movement
// and the task target can be picked up and dropped.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "vllr/error.hpp"
#include "vllr/house.hpp"
#include "vllr/rng.hpp"
#include "vllr/scene_graph.hpp"

namespace vllr {

enum class Action : int {
  kMoveFwd = 0,
  kMoveBack = 1,
  kRotateL = 2,
  kRotateR = 3,
  kRotateLSmall = 4,
  kRotateRSmall = 5,
  kPickup = 6,
  kDropoff = 7,
  kSubDone = 8,
  kDone = 9,
};

inline constexpr int kBaseActions = 10;
inline constexpr int kMaxActions = 20;

inline const char* action_name(int a) {
  static constexpr std::array<const char*, kBaseActions> names = {
      "move_fwd", "move_back", "rotate_l", "rotate_r", "rotate_l_small",
      "rotate_r_small", "pickup", "dropoff", "sub_done", "done"};
  return a >= 0 && a < kBaseActions ? names[static_cast<std::size_t>(a)] : "noop";
}

// Headings: 0 = north (y - 1), 1 = east, 2 = south, 3 = west.
inline constexpr std::array<Vec2, 4> kHeadingDelta{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

inline Vec2 offset(Vec2 c, int heading, int k = 1) {
  const Vec2 d = kHeadingDelta[static_cast<std::size_t>(heading & 3)];
  return {c.x + k * d.x, c.y + k * d.y};
}

struct EnvConfig {
  int num_actions = kBaseActions;  // extra actions beyond 10 are no-ops
  int view_radius = 3;
  int max_steps_factor = 16;
  int max_steps_cap = 600;

  void validate() const {
    if (num_actions < kBaseActions || num_actions > kMaxActions) {
      fail(ErrorKind::kInvalidInput, "num_actions must be between 10 and 20");
    }
    if (view_radius < 1 || view_radius > 8) fail(ErrorKind::kInvalidInput, "view_radius must be between 1 and 8");
    if (max_steps_factor < 1 || max_steps_cap < 1) fail(ErrorKind::kInvalidInput, "max_steps settings must be positive");
  }

  // channels per patch cell: wall, door, object, instruction match,
  // small, medium, large, visited-room
  static constexpr int kPatchChannels = 8;

  int observation_dim() const {
    const int side = 2 * view_radius + 1;
    return side * side * kPatchChannels + kNumTaskKinds + static_cast<int>(category_catalog().size()) +
           static_cast<int>(affordance_catalog().size()) + 2 /*attribute*/ + 1 /*rooms remaining*/ +
           1 /*held*/ + 1 /*step fraction*/ + 4 /*heading*/ + 2 /*position*/;
  }
};

enum class SuccessPredicate { kHoldingTarget, kFacingTarget, kRoomsVisited };

inline const char* to_string(SuccessPredicate p) {
  switch (p) {
    case SuccessPredicate::kHoldingTarget: return "holding_target";
    case SuccessPredicate::kFacingTarget: return "facing_target";
    case SuccessPredicate::kRoomsVisited: return "rooms_visited";
  }
  return "facing_target";
}

struct TaskSpec {
  TaskInstruction instruction;
  int target_object = -1;  // -1 for roomvisit
  int max_steps = 0;
  int t_min = 0;
  SuccessPredicate success = SuccessPredicate::kFacingTarget;
};

// Latched verification state for an attached plan.
struct PlanProgress {
  std::vector<char> latched;
  std::vector<int> latch_step;  // step at which each subgoal latched, -1 if not yet
  int active = 0;               // first unlatched subgoal
  int start_dist = 0;           // distance when the active subgoal became active
  int best_dist = 0;            // closest distance reached since then
};

struct EnvState {
  Vec2 agent;
  int heading = 0;
  std::optional<int> held;
  std::uint32_t visited_rooms = 0;  // bitmask over room ids
  int step_count = 0;
  TaskSpec task;
  bool success = false;
  bool terminated = false;
  std::vector<Vec2> object_cells;  // indexed by object id; {-1,-1} while held
  std::optional<PlanProgress> plan_progress;

  int rooms_visited() const { return std::popcount(visited_rooms); }
};

struct Observation {
  std::vector<double> features;
};

struct StepResult {
  Observation observation;
  int r_task = 0;
  bool done = false;
};

struct TaskRequest {
  std::optional<std::string> category;
  std::optional<std::string> affordance;
  std::optional<RelAttribute> attribute;
  std::optional<int> rooms_required;
};

namespace env_detail {

inline constexpr int kUnreachable = std::numeric_limits<int>::max();

inline bool blocked(const HouseSpec& h, const std::vector<Vec2>& objects, Vec2 c) {
  if (h.at(c) == CellType::kWall) return true;
  return std::find(objects.begin(), objects.end(), c) != objects.end();
}

inline int object_at(const std::vector<Vec2>& objects, Vec2 c) {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    if (objects[i] == c) return static_cast<int>(i);
  }
  return -1;
}

// Multi-source BFS over free cells; returns the distance from `from` to the
// nearest goal cell.
template <typename GoalFn>
int cell_distance(const HouseSpec& h, const std::vector<Vec2>& objects, Vec2 from, GoalFn&& is_goal) {
  if (is_goal(from)) return 0;
  std::vector<int> dist(h.grid.size(), -1);
  std::deque<Vec2> q{from};
  dist[static_cast<std::size_t>(h.index(from))] = 0;
  while (!q.empty()) {
    Vec2 c = q.front();
    q.pop_front();
    const int dc = dist[static_cast<std::size_t>(h.index(c))];
    for (int k = 0; k < 4; ++k) {
      Vec2 n = offset(c, k);
      if (!h.in_bounds(n) || blocked(h, objects, n)) continue;
      auto idx = static_cast<std::size_t>(h.index(n));
      if (dist[idx] >= 0) continue;
      dist[idx] = dc + 1;
      if (is_goal(n)) return dc + 1;
      q.push_back(n);
    }
  }
  return kUnreachable;
}

}  // namespace env_detail

// Verification predicates over the current state.
inline bool predicate_holds(const HouseSpec& h, const EnvState& s, const Subgoal& g, int view_radius) {
  const auto pred = predicate_from_string(g.predicate);
  if (!pred) fail(ErrorKind::kInvalidInput, "unknown predicate '" + g.predicate + "'");
  if (g.target.kind == TargetRef::Kind::kRoom) {
    if (g.target.id < 0 || g.target.id >= static_cast<int>(h.rooms.size())) {
      fail(ErrorKind::kInvalidInput, "dangling target " + g.target.str());
    }
    return h.room_of(s.agent) == g.target.id;
  }
  if (g.target.id < 0 || g.target.id >= static_cast<int>(s.object_cells.size())) {
    fail(ErrorKind::kInvalidInput, "dangling target " + g.target.str());
  }
  const int id = g.target.id;
  const bool holding = s.held && *s.held == id;
  const Vec2 cell = s.object_cells[static_cast<std::size_t>(id)];
  switch (*pred) {
    case Predicate::kSight:
      return holding || (h.room_of(s.agent) >= 0 && h.room_of(s.agent) == h.room_of(cell) &&
                         chebyshev(s.agent, cell) <= view_radius);
    case Predicate::kApproach: return holding || offset(s.agent, s.heading) == cell;
    case Predicate::kGrasp: return holding;
    case Predicate::kEnter: break;
  }
  return false;
}

// Cell distance from the agent to the region where a subgoal can be satisfied.
inline int subgoal_distance(const HouseSpec& h, const EnvState& s, const Subgoal& g, int view_radius) {
  if (g.target.kind == TargetRef::Kind::kRoom) {
    const auto& room = h.rooms[static_cast<std::size_t>(g.target.id)];
    return env_detail::cell_distance(h, s.object_cells, s.agent, [&room](Vec2 c) { return room.contains(c); });
  }
  const int id = g.target.id;
  if (s.held && *s.held == id) return 0;
  const Vec2 cell = s.object_cells[static_cast<std::size_t>(id)];
  const int room = h.room_of(cell);
  if (g.predicate == "sight") {
    return env_detail::cell_distance(h, s.object_cells, s.agent, [&](Vec2 c) {
      return h.room_of(c) == room && chebyshev(c, cell) <= view_radius;
    });
  }
  return env_detail::cell_distance(h, s.object_cells, s.agent, [&](Vec2 c) { return manhattan(c, cell) == 1; });
}

inline void update_plan_progress(const HouseSpec& h, EnvState& s, const SubgoalPlan& plan, int view_radius) {
  auto& pp = *s.plan_progress;
  for (std::size_t k = 0; k < plan.subgoals.size(); ++k) {
    if (!pp.latched[k] && predicate_holds(h, s, plan.subgoals[k], view_radius)) {
      pp.latched[k] = 1;
      pp.latch_step[k] = s.step_count;
    }
  }
  int active = 0;
  while (active < plan.size() && pp.latched[static_cast<std::size_t>(active)]) ++active;
  if (active >= plan.size()) {
    pp.active = active;
    pp.start_dist = pp.best_dist = 0;
    return;
  }
  const int d = subgoal_distance(h, s, plan.subgoals[static_cast<std::size_t>(active)], view_radius);
  if (active != pp.active || s.step_count == 0) {
    pp.active = active;
    pp.start_dist = pp.best_dist = d;
  } else {
    pp.best_dist = std::min(pp.best_dist, d);
  }
}

class Env {
 public:
  struct ResetResult {
    EnvState state;
    TaskInstruction instruction;
    SceneGraph scene_graph;
  };

  explicit Env(EnvConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  const EnvConfig& config() const { return cfg_; }
  const HouseSpec& house() const { return house_; }
  const EnvState& state() const { return state_; }
  const std::optional<SubgoalPlan>& plan() const { return plan_; }

  ResetResult reset(const HouseSpec& house, TaskKind kind, std::uint64_t seed, const TaskRequest& request = {});

  // Starts verification tracking for a plan; latches are evaluated on the
  // current state immediately.
  void attach_plan(const SubgoalPlan& plan) {
    for (const auto& g : plan.subgoals) {
      if (g.target.kind == TargetRef::Kind::kRoom && (g.target.id < 0 || g.target.id >= static_cast<int>(house_.rooms.size()))) {
        fail(ErrorKind::kInvalidInput, "dangling target " + g.target.str());
      }
      if (g.target.kind == TargetRef::Kind::kObject &&
          (g.target.id < 0 || g.target.id >= static_cast<int>(house_.objects.size()))) {
        fail(ErrorKind::kInvalidInput, "dangling target " + g.target.str());
      }
    }
    plan_ = plan;
    PlanProgress pp;
    pp.latched.assign(plan.subgoals.size(), 0);
    pp.latch_step.assign(plan.subgoals.size(), -1);
    pp.active = -1;
    state_.plan_progress = pp;
    const int saved = state_.step_count;
    state_.step_count = 0;
    update_plan_progress(house_, state_, *plan_, cfg_.view_radius);
    state_.step_count = saved;
  }

  StepResult step(int action);

  Observation observe() const;

  bool success_holds(const EnvState& s) const {
    switch (s.task.success) {
      case SuccessPredicate::kHoldingTarget: return s.held && *s.held == s.task.target_object;
      case SuccessPredicate::kFacingTarget:
        return s.object_cells[static_cast<std::size_t>(s.task.target_object)] == offset(s.agent, s.heading);
      case SuccessPredicate::kRoomsVisited: return s.rooms_visited() >= s.task.instruction.rooms_required;
    }
    return false;
  }

  std::string render() const {
    std::optional<int> target;
    if (state_.task.target_object >= 0) target = state_.task.target_object;
    HouseSpec view = house_;
    for (auto& o : view.objects) o.cell = state_.object_cells[static_cast<std::size_t>(o.id)];
    return render_ascii(view, state_.agent, state_.heading, target);
  }

 private:
  void mark_visited() {
    const int r = house_.room_of(state_.agent);
    if (r >= 0) state_.visited_rooms |= (1u << r);
  }

  EnvConfig cfg_;
  HouseSpec house_;
  EnvState state_;
  std::optional<SubgoalPlan> plan_;
};

// ---------------------------------------------------------------------------
// A* over (cell, heading, held, visited rooms).

struct SearchResult {
  int cost = 0;
  std::vector<int> actions;
};

namespace search_detail {

struct Node {
  Vec2 cell;
  int heading;
  bool held;
  std::uint32_t mask;
  friend bool operator==(const Node&, const Node&) = default;
};

inline std::uint64_t key(const Node& n) {
  return (static_cast<std::uint64_t>(n.mask) << 32) | (static_cast<std::uint64_t>(n.held) << 31) |
         (static_cast<std::uint64_t>(n.heading) << 24) | (static_cast<std::uint64_t>(n.cell.y) << 12) |
         static_cast<std::uint64_t>(n.cell.x);
}

inline int rect_distance(const RoomSpec& r, Vec2 c) {
  const int dx = std::max({r.min.x - c.x, 0, c.x - r.max.x});
  const int dy = std::max({r.min.y - c.y, 0, c.y - r.max.y});
  return dx + dy;
}

}  // namespace search_detail

// Minimal action sequence (rotations and interactions included, DONE last)
// that satisfies the task's success predicate from `start`.
inline SearchResult astar_search(const HouseSpec& house, const EnvState& start) {
  using search_detail::Node;
  const TaskSpec& task = start.task;
  const bool manip = task.success == SuccessPredicate::kHoldingTarget;
  const bool visit = task.success == SuccessPredicate::kRoomsVisited;
  const int target = task.target_object;
  const int required = task.instruction.rooms_required;

  std::vector<Vec2> objects = start.object_cells;
  const Vec2 target_cell = target >= 0 ? start.object_cells[static_cast<std::size_t>(target)] : Vec2{-1, -1};
  std::vector<Vec2> objects_held = objects;
  if (target >= 0) objects_held[static_cast<std::size_t>(target)] = {-1, -1};

  auto satisfied = [&](const Node& n) {
    if (manip) return n.held;
    if (visit) return std::popcount(n.mask) >= required;
    return offset(n.cell, n.heading) == target_cell;
  };
  auto heuristic = [&](const Node& n) {
    if (manip) return n.held ? 1 : std::max(0, manhattan(n.cell, target_cell) - 1) + 2;
    if (visit) {
      if (std::popcount(n.mask) >= required) return 1;
      int best = std::numeric_limits<int>::max();
      for (const auto& r : house.rooms) {
        if (!(n.mask & (1u << r.id))) best = std::min(best, search_detail::rect_distance(r, n.cell));
      }
      return best + 1;
    }
    return std::max(0, manhattan(n.cell, target_cell) - 1) + 1;
  };

  struct Entry {
    int f, h;
    std::uint64_t seq;
    int id;
  };
  struct Cmp {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.f != b.f) return a.f > b.f;
      if (a.h != b.h) return a.h > b.h;
      return a.seq > b.seq;
    }
  };
  struct Record {
    Node node;
    int g;
    int parent;
    int action;
    bool closed;
  };
  std::vector<Record> records;
  std::unordered_map<std::uint64_t, int> index;
  std::priority_queue<Entry, std::vector<Entry>, Cmp> open;
  std::uint64_t seq = 0;

  const Node root{start.agent, start.heading, start.held.has_value() && *start.held == target,
                  visit ? start.visited_rooms : 0u};
  records.push_back({root, 0, -1, -1, false});
  index[search_detail::key(root)] = 0;
  open.push({heuristic(root), heuristic(root), seq++, 0});
  int goal_parent = -1;
  int goal_cost = std::numeric_limits<int>::max();

  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    Record& rec = records[static_cast<std::size_t>(e.id)];
    if (rec.closed) continue;
    rec.closed = true;
    const Node cur = rec.node;
    const int g = rec.g;
    // Satisfied nodes have h == 1, so the first one popped ends an optimal plan.
    if (satisfied(cur)) {
      goal_cost = g + 1;
      goal_parent = e.id;
      break;
    }
    const auto& obstacles = cur.held ? objects_held : objects;
    auto relax = [&](Node next, int action) {
      const auto k = search_detail::key(next);
      auto it = index.find(k);
      if (it == index.end()) {
        const int id = static_cast<int>(records.size());
        records.push_back({next, g + 1, e.id, action, false});
        index.emplace(k, id);
        const int h = heuristic(next);
        open.push({g + 1 + h, h, seq++, id});
      } else {
        Record& r = records[static_cast<std::size_t>(it->second)];
        if (!r.closed && g + 1 < r.g) {
          r.g = g + 1;
          r.parent = e.id;
          r.action = action;
          const int h = heuristic(next);
          open.push({g + 1 + h, h, seq++, it->second});
        }
      }
    };
    for (int dir : {0, 1}) {
      const Vec2 c = offset(cur.cell, dir == 0 ? cur.heading : cur.heading + 2);
      if (house.in_bounds(c) && !env_detail::blocked(house, obstacles, c)) {
        Node n = cur;
        n.cell = c;
        if (visit) {
          const int r = house.room_of(c);
          if (r >= 0) n.mask |= (1u << r);
        }
        relax(n, dir == 0 ? static_cast<int>(Action::kMoveFwd) : static_cast<int>(Action::kMoveBack));
      }
    }
    {
      Node n = cur;
      n.heading = (cur.heading + 3) & 3;
      relax(n, static_cast<int>(Action::kRotateL));
      n.heading = (cur.heading + 1) & 3;
      relax(n, static_cast<int>(Action::kRotateR));
    }
    if (manip && !cur.held && offset(cur.cell, cur.heading) == target_cell) {
      Node n = cur;
      n.held = true;
      relax(n, static_cast<int>(Action::kPickup));
    }
  }
  if (goal_parent < 0) {
    fail(ErrorKind::kInfeasible, "task '" + task.instruction.describe() + "' is infeasible in house " +
                                     std::to_string(house.seed));
  }
  SearchResult out;
  out.cost = goal_cost;
  out.actions.push_back(static_cast<int>(Action::kDone));
  for (int id = goal_parent; records[static_cast<std::size_t>(id)].parent >= 0;
       id = records[static_cast<std::size_t>(id)].parent) {
    out.actions.push_back(records[static_cast<std::size_t>(id)].action);
  }
  std::reverse(out.actions.begin(), out.actions.end());
  return out;
}

inline int astar_min_steps(const HouseSpec& house, const EnvState& start) { return astar_search(house, start).cost; }

inline std::vector<int> expert_trajectory(const HouseSpec& house, const EnvState& start) {
  return astar_search(house, start).actions;
}

// ---------------------------------------------------------------------------

inline Env::ResetResult Env::reset(const HouseSpec& house, TaskKind kind, std::uint64_t seed,
                                   const TaskRequest& request) {
  house_ = house;
  plan_.reset();
  std::mt19937_64 rng(hash_combine(splitmix64(seed), static_cast<std::uint64_t>(kind)));
  auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  // Instruction
  TaskInstruction instr;
  instr.kind = kind;
  std::map<std::string, int> category_count, affordance_count;
  for (const auto& o : house.objects) {
    if (!is_manipulation(kind) || o.pickable) ++category_count[o.category];
    for (const auto& a : o.affordances) ++affordance_count[a];
  }
  auto choose_unique_first = [&](const std::map<std::string, int>& counts, int min_count) -> std::string {
    std::vector<std::string> unique, any;
    for (const auto& [name, n] : counts) {
      if (n < min_count) continue;
      any.push_back(name);
      if (n == 1) unique.push_back(name);
    }
    const auto& pool = (min_count == 1 && !unique.empty()) ? unique : any;
    if (pool.empty()) return {};
    return pool[pick(pool.size())];
  };
  switch (kind) {
    case TaskKind::kFetch:
    case TaskKind::kPickup:
    case TaskKind::kObjNav:
      instr.category = request.category.value_or(choose_unique_first(category_count, 1));
      break;
    case TaskKind::kObjNavRel:
      instr.category = request.category.value_or(choose_unique_first(category_count, 2));
      instr.attribute = request.attribute.value_or(pick(2) == 0 ? RelAttribute::kLargest : RelAttribute::kSmallest);
      break;
    case TaskKind::kObjNavAff:
      instr.affordance = request.affordance.value_or(choose_unique_first(affordance_count, 1));
      break;
    case TaskKind::kRoomVisit:
      instr.rooms_required = request.rooms_required.value_or(static_cast<int>(house.rooms.size()));
      break;
  }
  const bool has_target = kind == TaskKind::kObjNavAff ? !instr.affordance.empty()
                                                       : (kind == TaskKind::kRoomVisit || !instr.category.empty());
  if (!has_target) {
    fail(ErrorKind::kTaskAssignment, std::string("house ") + std::to_string(house.seed) + " cannot host a " +
                                         to_string(kind) + " task");
  }
  if (kind == TaskKind::kRoomVisit && (instr.rooms_required < 1 || instr.rooms_required > static_cast<int>(house.rooms.size()))) {
    fail(ErrorKind::kTaskAssignment, "roomvisit requires " + std::to_string(instr.rooms_required) + " rooms but house " +
                                         std::to_string(house.seed) + " has " + std::to_string(house.rooms.size()));
  }

  TaskSpec task;
  task.instruction = instr;
  SceneGraph graph = scene_graph_of(house, 0);
  if (kind != TaskKind::kRoomVisit) {
    try {
      task.target_object = resolve_target(graph, instr);
    } catch (const Error& e) {
      fail(ErrorKind::kTaskAssignment, e.what());
    }
  }
  task.success = is_manipulation(kind) ? SuccessPredicate::kHoldingTarget
                                       : (kind == TaskKind::kRoomVisit ? SuccessPredicate::kRoomsVisited
                                                                       : SuccessPredicate::kFacingTarget);

  // Agent placement
  std::vector<int> start_rooms;
  if (kind == TaskKind::kPickup) {
    start_rooms.push_back(house.object(task.target_object).room);
  } else if (kind == TaskKind::kRoomVisit) {
    for (const auto& r : house.rooms) {
      if (graph.neighbors(r.id).size() <= 1) start_rooms.push_back(r.id);
    }
  } else {
    for (const auto& r : house.rooms) start_rooms.push_back(r.id);
  }
  std::vector<Vec2> object_cells(house.objects.size());
  for (const auto& o : house.objects) object_cells[static_cast<std::size_t>(o.id)] = o.cell;
  const int room_id = start_rooms[pick(start_rooms.size())];
  const auto& room = house.rooms[static_cast<std::size_t>(room_id)];
  std::vector<Vec2> free_cells;
  for (int y = room.min.y; y <= room.max.y; ++y) {
    for (int x = room.min.x; x <= room.max.x; ++x) {
      if (!env_detail::blocked(house, object_cells, {x, y})) free_cells.push_back({x, y});
    }
  }
  if (free_cells.empty()) fail(ErrorKind::kTaskAssignment, "no free cell for the agent");

  state_ = EnvState{};
  state_.agent = free_cells[pick(free_cells.size())];
  state_.heading = static_cast<int>(pick(4));
  state_.object_cells = std::move(object_cells);
  state_.task = task;
  mark_visited();
  state_.task.t_min = astar_min_steps(house_, state_);
  state_.task.max_steps = std::min(cfg_.max_steps_factor * state_.task.t_min, cfg_.max_steps_cap);
  state_.task.max_steps = std::max(state_.task.max_steps, state_.task.t_min);

  graph.agent_room = room_id;
  return {state_, instr, graph};
}

inline StepResult Env::step(int action) {
  if (state_.terminated) fail(ErrorKind::kContractViolation, "step called on a finished episode");
  if (action < 0 || action >= cfg_.num_actions) {
    fail(ErrorKind::kInvalidInput, "action index " + std::to_string(action) + " out of range");
  }
  StepResult out;
  EnvState& s = state_;
  const Vec2 front = offset(s.agent, s.heading);
  switch (static_cast<Action>(action)) {
    case Action::kMoveFwd:
    case Action::kMoveBack: {
      const Vec2 dest = action == 0 ? front : offset(s.agent, s.heading + 2);
      if (house_.in_bounds(dest) && !env_detail::blocked(house_, s.object_cells, dest)) s.agent = dest;
      break;
    }
    case Action::kRotateL: s.heading = (s.heading + 3) & 3; break;
    case Action::kRotateR: s.heading = (s.heading + 1) & 3; break;
    case Action::kPickup: {
      const int target = s.task.target_object;
      if (!s.held && s.task.success == SuccessPredicate::kHoldingTarget &&
          s.object_cells[static_cast<std::size_t>(target)] == front && house_.object(target).pickable) {
        s.held = target;
        s.object_cells[static_cast<std::size_t>(target)] = {-1, -1};
      }
      break;
    }
    case Action::kDropoff:
      if (s.held && house_.at(front) == CellType::kFloor && env_detail::object_at(s.object_cells, front) < 0) {
        s.object_cells[static_cast<std::size_t>(*s.held)] = front;
        s.held.reset();
      }
      break;
    case Action::kDone:
      s.terminated = true;
      s.success = success_holds(s);
      out.r_task = s.success ? 1 : 0;
      break;
    default: break;  // fine rotations, sub_done and padding actions leave the state unchanged
  }
  ++s.step_count;
  mark_visited();
  if (plan_) update_plan_progress(house_, s, *plan_, cfg_.view_radius);
  if (!s.terminated && s.step_count >= s.task.max_steps) s.terminated = true;
  out.done = s.terminated;
  out.observation = observe();
  return out;
}

inline Observation Env::observe() const {
  const EnvState& s = state_;
  const int r = cfg_.view_radius;
  Observation obs;
  auto& f = obs.features;
  f.assign(static_cast<std::size_t>(cfg_.observation_dim()), 0.0);
  const auto& instr = s.task.instruction;
  const int right = (s.heading + 1) & 3;
  std::size_t base = 0;
  for (int u = r; u >= -r; --u) {      // forward distance
    for (int v = -r; v <= r; ++v) {    // rightward distance
      const Vec2 fwd = offset(s.agent, s.heading, u);
      const Vec2 c = offset(fwd, right, v);
      double* cell = f.data() + base;
      base += EnvConfig::kPatchChannels;
      const CellType t = house_.at(c);
      if (t == CellType::kWall) {
        cell[0] = 1.0;
        continue;
      }
      if (t == CellType::kDoor) cell[1] = 1.0;
      const int id = env_detail::object_at(s.object_cells, c);
      if (id >= 0) {
        const auto& o = house_.objects[static_cast<std::size_t>(id)];
        cell[2] = 1.0;
        bool match = false;
        if (instr.kind == TaskKind::kObjNavAff) {
          match = std::find(o.affordances.begin(), o.affordances.end(), instr.affordance) != o.affordances.end();
        } else if (instr.kind != TaskKind::kRoomVisit) {
          match = o.category == instr.category;
        }
        cell[3] = match ? 1.0 : 0.0;
        cell[4 + static_cast<int>(o.size)] = 1.0;
      }
      const int room = house_.room_of(c);
      if (room >= 0 && (s.visited_rooms & (1u << room))) cell[7] = 1.0;
    }
  }
  f[base + static_cast<std::size_t>(instr.kind)] = 1.0;
  base += kNumTaskKinds;
  if (const int ci = category_index(instr.category); ci >= 0) f[base + static_cast<std::size_t>(ci)] = 1.0;
  base += category_catalog().size();
  if (const int ai = affordance_index(instr.affordance); ai >= 0) f[base + static_cast<std::size_t>(ai)] = 1.0;
  base += affordance_catalog().size();
  if (instr.kind == TaskKind::kObjNavRel) f[base + (instr.attribute == RelAttribute::kLargest ? 0 : 1)] = 1.0;
  base += 2;
  if (instr.kind == TaskKind::kRoomVisit) {
    f[base] = std::max(0, instr.rooms_required - s.rooms_visited()) / 8.0;
  }
  base += 1;
  f[base++] = s.held ? 1.0 : 0.0;
  f[base++] = s.task.max_steps > 0 ? static_cast<double>(s.step_count) / s.task.max_steps : 0.0;
  f[base + static_cast<std::size_t>(s.heading)] = 1.0;
  base += 4;
  f[base++] = static_cast<double>(s.agent.x) / house_.width;
  f[base++] = static_cast<double>(s.agent.y) / house_.height;
  return obs;
}

// Latched status of every subgoal.
inline std::vector<bool> subgoal_status(const EnvState& s, const SubgoalPlan& plan) {
  if (!s.plan_progress || s.plan_progress->latched.size() != plan.subgoals.size()) {
    fail(ErrorKind::kInvalidInput, "state is not tracking this plan");
  }
  return {s.plan_progress->latched.begin(), s.plan_progress->latched.end()};
}

}  // namespace vllr
