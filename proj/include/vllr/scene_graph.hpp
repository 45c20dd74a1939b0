#pragma once

// Scene graph, structured task instructions and ordered subgoal plans.
// decompose_oracle is the deterministic stand-in for a language-model
// planner: it maps (scene graph, instruction) to verifiable waypoints.

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/error.hpp"
#include "vllr/house.hpp"

namespace vllr {

enum class TaskKind { kFetch, kPickup, kObjNav, kRoomVisit, kObjNavRel, kObjNavAff };

inline constexpr int kNumTaskKinds = 6;

inline const char* to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kFetch: return "fetch";
    case TaskKind::kPickup: return "pickup";
    case TaskKind::kObjNav: return "objnav";
    case TaskKind::kRoomVisit: return "roomvisit";
    case TaskKind::kObjNavRel: return "objnav_rel";
    case TaskKind::kObjNavAff: return "objnav_aff";
  }
  return "objnav";
}

inline TaskKind task_kind_from_string(std::string_view s) {
  for (int i = 0; i < kNumTaskKinds; ++i) {
    if (s == to_string(static_cast<TaskKind>(i))) return static_cast<TaskKind>(i);
  }
  fail(ErrorKind::kInvalidInput, "unknown task kind '" + std::string(s) + "'");
}

inline bool is_manipulation(TaskKind k) { return k == TaskKind::kFetch || k == TaskKind::kPickup; }

enum class RelAttribute { kLargest, kSmallest };

struct TaskInstruction {
  TaskKind kind = TaskKind::kObjNav;
  std::string category;        // FETCH, PICKUP, OBJNAV, OBJNAV_REL
  std::string affordance;      // OBJNAV_AFF
  RelAttribute attribute = RelAttribute::kLargest;  // OBJNAV_REL
  int rooms_required = 0;      // ROOMVISIT

  void validate() const {
    switch (kind) {
      case TaskKind::kFetch:
      case TaskKind::kPickup:
      case TaskKind::kObjNav:
      case TaskKind::kObjNavRel:
        if (category.empty()) fail(ErrorKind::kInvalidInput, std::string(to_string(kind)) + " needs a target category");
        break;
      case TaskKind::kObjNavAff:
        if (affordance.empty()) fail(ErrorKind::kInvalidInput, "objnav_aff needs an affordance tag");
        break;
      case TaskKind::kRoomVisit:
        if (rooms_required < 1) fail(ErrorKind::kInvalidInput, "roomvisit needs rooms_required >= 1");
        break;
    }
  }

  std::string describe() const {
    switch (kind) {
      case TaskKind::kFetch: return "locate a " + category + " and pick up that " + category;
      case TaskKind::kPickup: return "pick up a " + category;
      case TaskKind::kObjNav: return "find a " + category;
      case TaskKind::kObjNavRel:
        return std::string("find the ") + (attribute == RelAttribute::kLargest ? "largest " : "smallest ") + category;
      case TaskKind::kObjNavAff: return "find something that is " + affordance;
      case TaskKind::kRoomVisit: return "visit " + std::to_string(rooms_required) + " rooms";
    }
    return {};
  }
};

struct SceneRoom {
  int id = 0;
  std::string kind;
};

struct SceneObject {
  int id = 0;
  std::string category;
  SizeClass size = SizeClass::kSmall;
  std::vector<std::string> affordances;
  int room = 0;
  bool pickable = false;
};

struct SceneAdjacency {
  int room_a = 0;
  int room_b = 0;
  Vec2 door;
};

struct SceneGraph {
  std::vector<SceneRoom> rooms;
  std::vector<SceneObject> objects;
  std::vector<SceneAdjacency> adjacency;
  int agent_room = 0;

  bool has_room(int id) const {
    return std::any_of(rooms.begin(), rooms.end(), [id](const SceneRoom& r) { return r.id == id; });
  }
  const SceneObject* find_object(int id) const {
    for (const auto& o : objects) {
      if (o.id == id) return &o;
    }
    return nullptr;
  }

  // Neighbors in ascending id order.
  std::vector<int> neighbors(int room) const {
    std::set<int> out;
    for (const auto& a : adjacency) {
      if (a.room_a == room) out.insert(a.room_b);
      if (a.room_b == room) out.insert(a.room_a);
    }
    return {out.begin(), out.end()};
  }

  std::map<int, int> hop_distances(int from) const {
    std::map<int, int> dist{{from, 0}};
    std::deque<int> queue{from};
    while (!queue.empty()) {
      int r = queue.front();
      queue.pop_front();
      for (int n : neighbors(r)) {
        if (!dist.count(n)) {
          dist[n] = dist[r] + 1;
          queue.push_back(n);
        }
      }
    }
    return dist;
  }

  // Shortest room path from `from` to `to`, inclusive, lowest-id parents first.
  std::vector<int> room_path(int from, int to) const {
    std::map<int, int> parent{{from, from}};
    std::deque<int> queue{from};
    while (!queue.empty()) {
      int r = queue.front();
      queue.pop_front();
      if (r == to) break;
      for (int n : neighbors(r)) {
        if (!parent.count(n)) {
          parent[n] = r;
          queue.push_back(n);
        }
      }
    }
    if (!parent.count(to)) return {};
    std::vector<int> path{to};
    while (path.back() != from) path.push_back(parent[path.back()]);
    std::reverse(path.begin(), path.end());
    return path;
  }

  bool connected() const {
    if (rooms.empty()) return false;
    return hop_distances(rooms.front().id).size() == rooms.size();
  }
};

inline SceneGraph scene_graph_of(const HouseSpec& house, int agent_room) {
  SceneGraph g;
  for (const auto& r : house.rooms) g.rooms.push_back({r.id, r.kind});
  for (const auto& o : house.objects) g.objects.push_back({o.id, o.category, o.size, o.affordances, o.room, o.pickable});
  for (const auto& d : house.doors) g.adjacency.push_back({d.room_a, d.room_b, d.cell});
  g.agent_room = agent_room;
  return g;
}

enum class Predicate { kEnter, kSight, kApproach, kGrasp };

inline const char* to_string(Predicate p) {
  switch (p) {
    case Predicate::kEnter: return "enter";
    case Predicate::kSight: return "sight";
    case Predicate::kApproach: return "approach";
    case Predicate::kGrasp: return "grasp";
  }
  return "enter";
}

inline std::optional<Predicate> predicate_from_string(std::string_view s) {
  if (s == "enter") return Predicate::kEnter;
  if (s == "sight") return Predicate::kSight;
  if (s == "approach") return Predicate::kApproach;
  if (s == "grasp") return Predicate::kGrasp;
  return std::nullopt;
}

struct TargetRef {
  enum class Kind { kRoom, kObject } kind = Kind::kRoom;
  int id = 0;
  friend bool operator==(const TargetRef&, const TargetRef&) = default;

  std::string str() const { return (kind == Kind::kRoom ? "room:" : "object:") + std::to_string(id); }
  static std::optional<TargetRef> parse(std::string_view s) {
    TargetRef t;
    std::string_view rest;
    if (s.rfind("room:", 0) == 0) {
      t.kind = Kind::kRoom;
      rest = s.substr(5);
    } else if (s.rfind("object:", 0) == 0) {
      t.kind = Kind::kObject;
      rest = s.substr(7);
    } else {
      return std::nullopt;
    }
    if (rest.empty() || rest.size() > 9) return std::nullopt;
    int v = 0;
    for (char c : rest) {
      if (c < '0' || c > '9') return std::nullopt;
      v = v * 10 + (c - '0');
    }
    t.id = v;
    return t;
  }
};

struct Subgoal {
  int index = 1;
  std::string description;
  std::string predicate;  // verification predicate id
  TargetRef target;
  friend bool operator==(const Subgoal&, const Subgoal&) = default;
};

struct SubgoalPlan {
  std::vector<Subgoal> subgoals;
  bool tie_broken = false;  // metadata: ambiguous relative attribute resolved by lowest id
  int size() const { return static_cast<int>(subgoals.size()); }
  bool operator==(const SubgoalPlan& o) const { return subgoals == o.subgoals; }
};

// Picks the single object an instruction refers to. Multiple candidates are
// resolved by the lowest object id; `tie_broken` reports whether that
// happened for a relative-attribute query.
inline int resolve_target(const SceneGraph& g, const TaskInstruction& instr, bool* tie_broken = nullptr) {
  instr.validate();
  if (tie_broken) *tie_broken = false;
  std::vector<const SceneObject*> matches;
  for (const auto& o : g.objects) {
    bool m = false;
    switch (instr.kind) {
      case TaskKind::kFetch:
      case TaskKind::kPickup: m = o.category == instr.category && o.pickable; break;
      case TaskKind::kObjNav:
      case TaskKind::kObjNavRel: m = o.category == instr.category; break;
      case TaskKind::kObjNavAff:
        m = std::find(o.affordances.begin(), o.affordances.end(), instr.affordance) != o.affordances.end();
        break;
      case TaskKind::kRoomVisit: break;
    }
    if (m) matches.push_back(&o);
  }
  if (instr.kind == TaskKind::kRoomVisit) fail(ErrorKind::kPlanning, "roomvisit has no object target");
  if (matches.empty()) {
    const std::string what = instr.kind == TaskKind::kObjNavAff ? "affordance '" + instr.affordance + "'"
                                                                 : "category '" + instr.category + "'";
    fail(ErrorKind::kPlanning, "no object with " + what + " in the scene");
  }
  std::sort(matches.begin(), matches.end(), [](auto* a, auto* b) { return a->id < b->id; });
  if (instr.kind != TaskKind::kObjNavRel) return matches.front()->id;
  if (matches.size() < 2) {
    fail(ErrorKind::kPlanning, "relative attribute needs at least two '" + instr.category + "' objects");
  }
  const bool largest = instr.attribute == RelAttribute::kLargest;
  const SceneObject* best = matches.front();
  int ties = 0;
  for (const auto* o : matches) {
    const bool better = largest ? o->size > best->size : o->size < best->size;
    if (better) {
      best = o;
      ties = 0;
    } else if (o != best && o->size == best->size) {
      ++ties;
    }
  }
  if (tie_broken) *tie_broken = ties > 0;
  return best->id;
}

// Rooms in nearest-unvisited order (room-graph hops, lowest id on ties),
// starting with the agent's room.
inline std::vector<int> room_visit_order(const SceneGraph& g, int count) {
  std::vector<int> order{g.agent_room};
  std::set<int> visited{g.agent_room};
  while (static_cast<int>(order.size()) < count) {
    auto dist = g.hop_distances(order.back());
    int best = -1;
    for (const auto& [room, d] : dist) {  // map iterates in ascending id
      if (visited.count(room)) continue;
      if (best < 0 || d < dist[best]) best = room;
    }
    if (best < 0) break;
    order.push_back(best);
    visited.insert(best);
  }
  return order;
}

inline SubgoalPlan decompose_oracle(const SceneGraph& g, const TaskInstruction& instr) {
  instr.validate();
  if (!g.has_room(g.agent_room)) fail(ErrorKind::kPlanning, "agent room " + std::to_string(g.agent_room) + " not in scene");
  SubgoalPlan plan;
  auto add = [&plan](Predicate p, TargetRef t, std::string desc) {
    plan.subgoals.push_back({static_cast<int>(plan.subgoals.size()) + 1, std::move(desc), to_string(p), t});
  };
  auto room_label = [&g](int id) {
    for (const auto& r : g.rooms) {
      if (r.id == id) return r.kind + " (room " + std::to_string(id) + ")";
    }
    return "room " + std::to_string(id);
  };

  if (instr.kind == TaskKind::kRoomVisit) {
    if (instr.rooms_required > static_cast<int>(g.rooms.size())) {
      fail(ErrorKind::kPlanning, "scene has " + std::to_string(g.rooms.size()) + " rooms, task requires " +
                                     std::to_string(instr.rooms_required));
    }
    const auto order = room_visit_order(g, instr.rooms_required);
    if (static_cast<int>(order.size()) < instr.rooms_required) fail(ErrorKind::kPlanning, "rooms unreachable from agent room");
    for (int r : order) add(Predicate::kEnter, {TargetRef::Kind::kRoom, r}, "enter the " + room_label(r));
    return plan;
  }

  bool tie = false;
  const int target = resolve_target(g, instr, &tie);
  plan.tie_broken = tie;
  const SceneObject& obj = *g.find_object(target);
  const auto path = g.room_path(g.agent_room, obj.room);
  if (path.empty()) fail(ErrorKind::kPlanning, "room " + std::to_string(obj.room) + " unreachable from agent room");
  for (std::size_t i = 1; i < path.size(); ++i) {
    add(Predicate::kEnter, {TargetRef::Kind::kRoom, path[i]}, "enter the " + room_label(path[i]));
  }
  const TargetRef ref{TargetRef::Kind::kObject, target};
  const std::string name = obj.category + " (object " + std::to_string(target) + ")";
  add(Predicate::kSight, ref, "see the " + name);
  add(Predicate::kApproach, ref, "move within reach of the " + name);
  if (is_manipulation(instr.kind)) add(Predicate::kGrasp, ref, "pick up the " + name);
  return plan;
}

struct PlanViolation {
  int subgoal_index = 0;
  std::string message;
};

inline std::vector<PlanViolation> validate_plan(const SubgoalPlan& plan, const SceneGraph& g) {
  std::vector<PlanViolation> out;
  if (plan.subgoals.empty()) out.push_back({0, "plan has no subgoals"});
  for (std::size_t i = 0; i < plan.subgoals.size(); ++i) {
    const auto& s = plan.subgoals[i];
    const int expected = static_cast<int>(i) + 1;
    if (s.index != expected) {
      out.push_back({expected, "index contiguity broken: expected " + std::to_string(expected) + ", found " +
                                   std::to_string(s.index)});
    }
    const auto pred = predicate_from_string(s.predicate);
    if (!pred) {
      out.push_back({s.index, "unknown verification predicate '" + s.predicate + "'"});
      continue;
    }
    const bool wants_room = *pred == Predicate::kEnter;
    if (wants_room != (s.target.kind == TargetRef::Kind::kRoom)) {
      out.push_back({s.index, "predicate '" + s.predicate + "' cannot apply to " + s.target.str()});
    }
    if (s.target.kind == TargetRef::Kind::kRoom && !g.has_room(s.target.id)) {
      out.push_back({s.index, "target " + s.target.str() + " does not resolve"});
    }
    if (s.target.kind == TargetRef::Kind::kObject) {
      const SceneObject* o = g.find_object(s.target.id);
      if (!o) {
        out.push_back({s.index, "target " + s.target.str() + " does not resolve"});
      } else if (*pred == Predicate::kGrasp && !o->pickable) {
        out.push_back({s.index, "target " + s.target.str() + " cannot be grasped"});
      }
    }
  }
  return out;
}

// Wire formats.

inline nlohmann::json to_json(const TaskInstruction& t) {
  return {{"kind", to_string(t.kind)},
          {"category", t.category},
          {"affordance", t.affordance},
          {"attribute", t.attribute == RelAttribute::kLargest ? "largest" : "smallest"},
          {"rooms_required", t.rooms_required},
          {"text", t.describe()}};
}

inline TaskInstruction instruction_from_json(const nlohmann::json& j) {
  TaskInstruction t;
  t.kind = task_kind_from_string(j.at("kind").get<std::string>());
  t.category = j.value("category", "");
  t.affordance = j.value("affordance", "");
  t.attribute = j.value("attribute", "largest") == "smallest" ? RelAttribute::kSmallest : RelAttribute::kLargest;
  t.rooms_required = j.value("rooms_required", 0);
  return t;
}

inline nlohmann::json to_json(const SceneGraph& g) {
  using nlohmann::json;
  json rooms = json::array(), objects = json::array(), adjacency = json::array();
  for (const auto& r : g.rooms) rooms.push_back({{"room_id", r.id}, {"room_kind", r.kind}});
  for (const auto& o : g.objects) {
    objects.push_back({{"object_id", o.id},
                       {"category", o.category},
                       {"size_class", to_string(o.size)},
                       {"affordances", o.affordances},
                       {"containing_room", o.room},
                       {"pickable", o.pickable}});
  }
  for (const auto& a : g.adjacency) adjacency.push_back({{"rooms", {a.room_a, a.room_b}}, {"door", {a.door.x, a.door.y}}});
  return {{"rooms", rooms}, {"objects", objects}, {"adjacency", adjacency}, {"agent_room", g.agent_room}};
}

inline SceneGraph scene_graph_from_json(const nlohmann::json& j) {
  SceneGraph g;
  for (const auto& r : j.at("rooms")) g.rooms.push_back({r.at("room_id").get<int>(), r.at("room_kind").get<std::string>()});
  for (const auto& o : j.at("objects")) {
    g.objects.push_back({o.at("object_id").get<int>(), o.at("category").get<std::string>(),
                         size_from_string(o.at("size_class").get<std::string>()),
                         o.at("affordances").get<std::vector<std::string>>(), o.at("containing_room").get<int>(),
                         o.value("pickable", false)});
  }
  for (const auto& a : j.at("adjacency")) {
    g.adjacency.push_back({a.at("rooms")[0].get<int>(), a.at("rooms")[1].get<int>(),
                           {a.at("door")[0].get<int>(), a.at("door")[1].get<int>()}});
  }
  g.agent_room = j.at("agent_room").get<int>();
  return g;
}

inline nlohmann::json to_json(const SubgoalPlan& p) {
  nlohmann::json subgoals = nlohmann::json::array();
  for (const auto& s : p.subgoals) {
    subgoals.push_back({{"index", s.index}, {"description", s.description}, {"predicate", s.predicate},
                        {"target", s.target.str()}});
  }
  return {{"subgoals", subgoals}};
}

// Throws ProtocolError on structural problems; semantic checks belong to
// validate_plan.
inline SubgoalPlan plan_from_json(const nlohmann::json& j, const std::string& raw) {
  SubgoalPlan p;
  if (!j.is_object() || !j.contains("subgoals") || !j["subgoals"].is_array()) {
    throw ProtocolError("response has no subgoals array", raw);
  }
  for (const auto& s : j["subgoals"]) {
    if (!s.is_object() || !s.contains("index") || !s["index"].is_number_integer() || !s.contains("predicate") ||
        !s["predicate"].is_string() || !s.contains("target") || !s["target"].is_string()) {
      throw ProtocolError("subgoal record is missing index, predicate or target", raw);
    }
    auto target = TargetRef::parse(s["target"].get<std::string>());
    if (!target) throw ProtocolError("unparseable target reference '" + s["target"].get<std::string>() + "'", raw);
    p.subgoals.push_back({s["index"].get<int>(), s.value("description", ""), s["predicate"].get<std::string>(), *target});
  }
  return p;
}

}  // namespace vllr
