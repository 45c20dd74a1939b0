#pragma once

// Procedurally generated multi-room houses. Rooms are carved one after the
// other so that every room shares a door with the previous one; the room
// graph is therefore a chain and doors are the only passages between rooms.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vllr/error.hpp"

namespace vllr {

struct Vec2 {
  int x = 0;
  int y = 0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
  friend auto operator<=>(const Vec2&, const Vec2&) = default;
};

inline int manhattan(Vec2 a, Vec2 b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }
inline int chebyshev(Vec2 a, Vec2 b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

enum class CellType : std::uint8_t { kWall = 0, kFloor = 1, kDoor = 2 };

enum class SizeClass : std::uint8_t { kSmall = 0, kMedium = 1, kLarge = 2 };

inline const char* to_string(SizeClass s) {
  switch (s) {
    case SizeClass::kSmall: return "small";
    case SizeClass::kMedium: return "medium";
    case SizeClass::kLarge: return "large";
  }
  return "small";
}

inline SizeClass size_from_string(std::string_view s) {
  if (s == "small") return SizeClass::kSmall;
  if (s == "medium") return SizeClass::kMedium;
  if (s == "large") return SizeClass::kLarge;
  fail(ErrorKind::kInvalidInput, "unknown size class '" + std::string(s) + "'");
}

struct CategoryInfo {
  std::string_view name;
  std::array<bool, 3> sizes;  // allowed size classes
  bool pickable;
  std::vector<std::string_view> affordances;
};

inline const std::vector<CategoryInfo>& category_catalog() {
  static const std::vector<CategoryInfo> catalog = {
      {"mug", {true, true, false}, true, {"drinkable-from"}},
      {"apple", {true, true, true}, true, {"edible"}},
      {"book", {true, true, false}, true, {"readable"}},
      {"clock", {true, true, false}, true, {"tells-time"}},
      {"laptop", {false, true, false}, true, {"typeable"}},
      {"chair", {false, true, true}, false, {"sittable"}},
      {"sofa", {false, false, true}, false, {"sittable", "lie-on"}},
      {"bed", {false, false, true}, false, {"lie-on"}},
  };
  return catalog;
}

inline const std::vector<std::string_view>& affordance_catalog() {
  static const std::vector<std::string_view> tags = {
      "drinkable-from", "edible", "readable", "tells-time", "typeable", "sittable", "lie-on"};
  return tags;
}

inline int category_index(std::string_view name) {
  const auto& cat = category_catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (cat[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

inline int affordance_index(std::string_view tag) {
  const auto& tags = affordance_catalog();
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == tag) return static_cast<int>(i);
  }
  return -1;
}

inline const std::vector<std::string_view>& room_kinds() {
  static const std::vector<std::string_view> kinds = {"kitchen", "living_room", "bedroom",
                                                      "bathroom", "hall", "office"};
  return kinds;
}

struct RoomSpec {
  int id = 0;
  std::string kind;
  Vec2 min;  // inclusive interior extent
  Vec2 max;
  bool contains(Vec2 c) const { return c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y; }
  int area() const { return (max.x - min.x + 1) * (max.y - min.y + 1); }
};

struct ObjectSpec {
  int id = 0;
  std::string category;
  SizeClass size = SizeClass::kSmall;
  std::vector<std::string> affordances;
  Vec2 cell;
  int room = 0;
  bool pickable = false;
};

struct DoorSpec {
  int room_a = 0;
  int room_b = 0;
  Vec2 cell;
};

struct HouseSpec {
  int width = 0;
  int height = 0;
  std::vector<CellType> grid;  // row-major, y * width + x
  std::vector<RoomSpec> rooms;
  std::vector<ObjectSpec> objects;
  std::vector<DoorSpec> doors;
  std::uint64_t seed = 0;

  bool in_bounds(Vec2 c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  int index(Vec2 c) const { return c.y * width + c.x; }
  CellType at(Vec2 c) const { return in_bounds(c) ? grid[static_cast<std::size_t>(index(c))] : CellType::kWall; }

  // Room containing the cell, or -1 for walls and doors.
  int room_of(Vec2 c) const {
    for (const auto& r : rooms) {
      if (r.contains(c)) return r.id;
    }
    return -1;
  }

  const ObjectSpec& object(int id) const {
    for (const auto& o : objects) {
      if (o.id == id) return o;
    }
    fail(ErrorKind::kInvalidInput, "no object with id " + std::to_string(id));
  }
};

struct HouseParams {
  int rooms_min = 1;
  int rooms_max = 3;
  int objects_per_room_min = 1;
  int objects_per_room_max = 2;
  int width = 9;
  int height = 9;

  void validate() const {
    if (rooms_min < 1 || rooms_max < rooms_min) fail(ErrorKind::kGeneration, "room count range is invalid");
    if (rooms_max > 8) fail(ErrorKind::kGeneration, "at most 8 rooms are supported");
    if (objects_per_room_min < 0 || objects_per_room_max < objects_per_room_min) {
      fail(ErrorKind::kGeneration, "objects per room range is invalid");
    }
    if (width < 4 || height < 4 || width > 64 || height > 64) {
      fail(ErrorKind::kGeneration, "grid size must be between 4 and 64 per side");
    }
  }
};

namespace detail {

struct Rect {
  Vec2 min, max;
  int w() const { return max.x - min.x + 1; }
  int h() const { return max.y - min.y + 1; }
};

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Free floor cells reachable from `start`, treating walls and objects as blocked.
inline std::vector<char> flood(const HouseSpec& h, const std::vector<char>& blocked, Vec2 start) {
  std::vector<char> seen(h.grid.size(), 0);
  std::vector<Vec2> stack{start};
  seen[static_cast<std::size_t>(h.index(start))] = 1;
  constexpr std::array<Vec2, 4> kDirs{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
  while (!stack.empty()) {
    Vec2 c = stack.back();
    stack.pop_back();
    for (Vec2 d : kDirs) {
      Vec2 n{c.x + d.x, c.y + d.y};
      if (!h.in_bounds(n) || h.at(n) == CellType::kWall) continue;
      auto idx = static_cast<std::size_t>(h.index(n));
      if (seen[idx] || blocked[idx]) continue;
      seen[idx] = 1;
      stack.push_back(n);
    }
  }
  return seen;
}

inline bool carve_rooms(HouseSpec& house, std::mt19937_64& rng, int n_rooms) {
  constexpr int kMinSide = 2;
  Rect region{{1, 1}, {house.width - 2, house.height - 2}};
  if (region.w() < kMinSide || region.h() < kMinSide) return false;
  std::vector<Rect> rects;
  // wall line (axis, coordinate) separating the previous room from `region`
  int contact_axis = -1;  // 0: vertical wall at x = contact, 1: horizontal wall at y = contact
  int contact = 0;
  struct PendingDoor { int a, b; int axis; int line; int lo, hi; };
  std::vector<PendingDoor> pending;

  for (int i = 0; i + 1 < n_rooms; ++i) {
    const bool can_x = region.w() >= 2 * kMinSide + 1;
    const bool can_y = region.h() >= 2 * kMinSide + 1;
    if (!can_x && !can_y) return false;
    int axis = can_x && can_y ? uniform_int(rng, 0, 1) : (can_x ? 0 : 1);
    Rect a = region, b = region;
    int line;
    if (axis == 0) {
      line = uniform_int(rng, region.min.x + kMinSide, region.max.x - kMinSide);
      a.max.x = line - 1;
      b.min.x = line + 1;
    } else {
      line = uniform_int(rng, region.min.y + kMinSide, region.max.y - kMinSide);
      a.max.y = line - 1;
      b.min.y = line + 1;
    }
    Rect room = a, rest = b;
    if (contact_axis == axis) {
      // Parallel split: only the part on the contact side touches the previous room.
      const bool a_near = axis == 0 ? (a.min.x == contact + 1) : (a.min.y == contact + 1);
      if (!a_near) std::swap(room, rest);
    } else if (uniform_int(rng, 0, 1) == 1) {
      std::swap(room, rest);
    }
    if (i > 0) {
      const Rect& prev = rects.back();
      // overlap of prev and room along the old contact wall
      int lo, hi;
      if (contact_axis == 0) {
        lo = std::max(prev.min.y, room.min.y);
        hi = std::min(prev.max.y, room.max.y);
      } else {
        lo = std::max(prev.min.x, room.min.x);
        hi = std::min(prev.max.x, room.max.x);
      }
      if (lo > hi) return false;
      pending.push_back({i - 1, i, contact_axis, contact, lo, hi});
    }
    rects.push_back(room);
    region = rest;
    contact_axis = axis;
    contact = line;
  }
  if (n_rooms > 1) {
    const Rect& prev = rects.back();
    int lo, hi;
    if (contact_axis == 0) {
      lo = std::max(prev.min.y, region.min.y);
      hi = std::min(prev.max.y, region.max.y);
    } else {
      lo = std::max(prev.min.x, region.min.x);
      hi = std::min(prev.max.x, region.max.x);
    }
    if (lo > hi) return false;
    pending.push_back({n_rooms - 2, n_rooms - 1, contact_axis, contact, lo, hi});
  }
  rects.push_back(region);

  house.rooms.clear();
  const auto& kinds = room_kinds();
  for (std::size_t i = 0; i < rects.size(); ++i) {
    RoomSpec r;
    r.id = static_cast<int>(i);
    r.kind = std::string(kinds[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(kinds.size()) - 1))]);
    r.min = rects[i].min;
    r.max = rects[i].max;
    house.rooms.push_back(r);
    for (int y = r.min.y; y <= r.max.y; ++y) {
      for (int x = r.min.x; x <= r.max.x; ++x) {
        house.grid[static_cast<std::size_t>(house.index({x, y}))] = CellType::kFloor;
      }
    }
  }
  house.doors.clear();
  for (const auto& p : pending) {
    const int along = uniform_int(rng, p.lo, p.hi);
    Vec2 cell = p.axis == 0 ? Vec2{p.line, along} : Vec2{along, p.line};
    house.grid[static_cast<std::size_t>(house.index(cell))] = CellType::kDoor;
    house.doors.push_back({p.a, p.b, cell});
  }
  return true;
}

inline bool place_objects(HouseSpec& house, std::mt19937_64& rng, const HouseParams& params) {
  const auto& catalog = category_catalog();
  std::vector<char> blocked(house.grid.size(), 0);
  house.objects.clear();
  int next_id = 0;
  for (const auto& room : house.rooms) {
    const int count = uniform_int(rng, params.objects_per_room_min, params.objects_per_room_max);
    std::vector<Vec2> candidates;
    for (int y = room.min.y; y <= room.max.y; ++y) {
      for (int x = room.min.x; x <= room.max.x; ++x) {
        Vec2 c{x, y};
        bool near_door = false;
        for (const auto& d : house.doors) near_door |= manhattan(d.cell, c) <= 1;
        if (!near_door) candidates.push_back(c);
      }
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    int placed = 0;
    for (Vec2 c : candidates) {
      if (placed == count) break;
      auto idx = static_cast<std::size_t>(house.index(c));
      blocked[idx] = 1;
      // keep every free cell connected and every object reachable from some side
      Vec2 any_free{-1, -1};
      for (std::size_t k = 0; k < house.grid.size() && any_free.x < 0; ++k) {
        if (house.grid[k] != CellType::kWall && !blocked[k]) {
          any_free = {static_cast<int>(k) % house.width, static_cast<int>(k) / house.width};
        }
      }
      bool ok = any_free.x >= 0;
      if (ok) {
        auto seen = flood(house, blocked, any_free);
        for (std::size_t k = 0; k < house.grid.size() && ok; ++k) {
          if (house.grid[k] != CellType::kWall && !blocked[k] && !seen[k]) ok = false;
        }
        auto reachable_side = [&](Vec2 o) {
          constexpr std::array<Vec2, 4> kDirs{{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};
          for (Vec2 d : kDirs) {
            Vec2 n{o.x + d.x, o.y + d.y};
            if (house.in_bounds(n) && house.at(n) != CellType::kWall &&
                seen[static_cast<std::size_t>(house.index(n))]) {
              return true;
            }
          }
          return false;
        };
        if (ok) ok = reachable_side(c);
        for (const auto& o : house.objects) {
          if (ok) ok = reachable_side(o.cell);
        }
      }
      if (!ok) {
        blocked[idx] = 0;
        continue;
      }
      const auto& info = catalog[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(catalog.size()) - 1))];
      std::vector<SizeClass> sizes;
      for (int s = 0; s < 3; ++s) {
        if (info.sizes[static_cast<std::size_t>(s)]) sizes.push_back(static_cast<SizeClass>(s));
      }
      ObjectSpec obj;
      obj.id = next_id++;
      obj.category = std::string(info.name);
      obj.size = sizes[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(sizes.size()) - 1))];
      for (auto a : info.affordances) obj.affordances.emplace_back(a);
      obj.cell = c;
      obj.room = room.id;
      obj.pickable = info.pickable;
      house.objects.push_back(std::move(obj));
      ++placed;
    }
    if (placed < params.objects_per_room_min) return false;
  }
  return true;
}

}  // namespace detail

inline HouseSpec generate_house(std::uint64_t seed, const HouseParams& params) {
  params.validate();
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 64; ++attempt) {
    HouseSpec house;
    house.width = params.width;
    house.height = params.height;
    house.seed = seed;
    house.grid.assign(static_cast<std::size_t>(params.width * params.height), CellType::kWall);
    const int n_rooms = detail::uniform_int(rng, params.rooms_min, params.rooms_max);
    if (!detail::carve_rooms(house, rng, n_rooms)) continue;
    if (!detail::place_objects(house, rng, params)) continue;
    return house;
  }
  fail(ErrorKind::kGeneration, "could not generate a house with the requested parameters (seed " +
                                   std::to_string(seed) + ")");
}

// Structural checks: rooms disjoint, doors join the rooms they name, objects
// on floor cells of their room, every room reachable.
inline std::vector<std::string> check_house(const HouseSpec& h) {
  std::vector<std::string> issues;
  for (std::size_t i = 0; i < h.rooms.size(); ++i) {
    for (std::size_t j = i + 1; j < h.rooms.size(); ++j) {
      const auto& a = h.rooms[i];
      const auto& b = h.rooms[j];
      if (a.min.x <= b.max.x && b.min.x <= a.max.x && a.min.y <= b.max.y && b.min.y <= a.max.y) {
        issues.push_back("rooms " + std::to_string(a.id) + " and " + std::to_string(b.id) + " overlap");
      }
    }
  }
  for (std::size_t k = 0; k < h.grid.size(); ++k) {
    Vec2 c{static_cast<int>(k) % h.width, static_cast<int>(k) / h.width};
    if (h.grid[k] == CellType::kFloor && h.room_of(c) < 0) issues.push_back("floor cell outside any room");
    if (h.grid[k] != CellType::kFloor && h.room_of(c) >= 0) issues.push_back("room cell is not floor");
  }
  for (const auto& o : h.objects) {
    if (h.at(o.cell) != CellType::kFloor || h.room_of(o.cell) != o.room) {
      issues.push_back("object " + std::to_string(o.id) + " is not on a floor cell of its room");
    }
  }
  std::vector<char> blocked(h.grid.size(), 0);
  for (const auto& o : h.objects) blocked[static_cast<std::size_t>(h.index(o.cell))] = 1;
  if (!h.rooms.empty()) {
    Vec2 start{-1, -1};
    for (std::size_t k = 0; k < h.grid.size() && start.x < 0; ++k) {
      if (h.grid[k] != CellType::kWall && !blocked[k]) start = {static_cast<int>(k) % h.width, static_cast<int>(k) / h.width};
    }
    if (start.x < 0) {
      issues.push_back("no free floor cell");
    } else {
      auto seen = detail::flood(h, blocked, start);
      for (const auto& r : h.rooms) {
        bool reached = false;
        for (int y = r.min.y; y <= r.max.y && !reached; ++y) {
          for (int x = r.min.x; x <= r.max.x && !reached; ++x) reached = seen[static_cast<std::size_t>(h.index({x, y}))] != 0;
        }
        if (!reached) issues.push_back("room " + std::to_string(r.id) + " unreachable");
      }
    }
  }
  for (const auto& d : h.doors) {
    if (h.at(d.cell) != CellType::kDoor) issues.push_back("door cell is not a door");
  }
  return issues;
}

inline std::uint64_t layout_hash(const HouseSpec& h) {
  std::uint64_t x = 1469598103934665603ULL;
  auto mix = [&x](std::uint64_t v) { x = (x ^ v) * 1099511628211ULL; };
  for (auto c : h.grid) mix(static_cast<std::uint64_t>(c));
  for (const auto& o : h.objects) {
    mix(static_cast<std::uint64_t>(h.index(o.cell)));
    mix(static_cast<std::uint64_t>(category_index(o.category)));
  }
  return x;
}

inline std::string render_ascii(const HouseSpec& h, std::optional<Vec2> agent = std::nullopt,
                                int heading = 0, std::optional<int> highlight = std::nullopt) {
  std::string out;
  for (int y = 0; y < h.height; ++y) {
    for (int x = 0; x < h.width; ++x) {
      Vec2 c{x, y};
      char ch = '#';
      if (h.at(c) == CellType::kFloor) ch = '.';
      if (h.at(c) == CellType::kDoor) ch = '+';
      for (const auto& o : h.objects) {
        if (o.cell == c) ch = highlight && *highlight == o.id ? '*' : o.category[0];
      }
      if (agent && *agent == c) ch = "^>v<"[heading & 3];
      out.push_back(ch);
    }
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::json to_json(const HouseSpec& h) {
  using nlohmann::json;
  std::string rows;
  json grid = json::array();
  for (int y = 0; y < h.height; ++y) {
    std::string row;
    for (int x = 0; x < h.width; ++x) {
      const CellType t = h.at({x, y});
      row.push_back(t == CellType::kWall ? '#' : (t == CellType::kDoor ? '+' : '.'));
    }
    grid.push_back(row);
  }
  json rooms = json::array();
  for (const auto& r : h.rooms) {
    rooms.push_back({{"id", r.id}, {"kind", r.kind}, {"min", {r.min.x, r.min.y}}, {"max", {r.max.x, r.max.y}}});
  }
  json objects = json::array();
  for (const auto& o : h.objects) {
    objects.push_back({{"id", o.id},
                       {"category", o.category},
                       {"size", to_string(o.size)},
                       {"affordances", o.affordances},
                       {"cell", {o.cell.x, o.cell.y}},
                       {"room", o.room},
                       {"pickable", o.pickable}});
  }
  json doors = json::array();
  for (const auto& d : h.doors) doors.push_back({{"rooms", {d.room_a, d.room_b}}, {"cell", {d.cell.x, d.cell.y}}});
  return {{"seed", h.seed}, {"width", h.width}, {"height", h.height}, {"grid", grid},
          {"rooms", rooms}, {"objects", objects}, {"doors", doors}};
}

inline HouseSpec house_from_json(const nlohmann::json& j) {
  try {
    HouseSpec h;
    h.seed = j.at("seed").get<std::uint64_t>();
    h.width = j.at("width").get<int>();
    h.height = j.at("height").get<int>();
    const auto& grid = j.at("grid");
    if (static_cast<int>(grid.size()) != h.height) fail(ErrorKind::kInvalidInput, "grid height mismatch");
    for (const auto& row : grid) {
      const auto s = row.get<std::string>();
      if (static_cast<int>(s.size()) != h.width) fail(ErrorKind::kInvalidInput, "grid width mismatch");
      for (char ch : s) h.grid.push_back(ch == '#' ? CellType::kWall : (ch == '+' ? CellType::kDoor : CellType::kFloor));
    }
    for (const auto& r : j.at("rooms")) {
      h.rooms.push_back({r.at("id").get<int>(), r.at("kind").get<std::string>(),
                         {r.at("min")[0].get<int>(), r.at("min")[1].get<int>()},
                         {r.at("max")[0].get<int>(), r.at("max")[1].get<int>()}});
    }
    for (const auto& o : j.at("objects")) {
      ObjectSpec obj;
      obj.id = o.at("id").get<int>();
      obj.category = o.at("category").get<std::string>();
      obj.size = size_from_string(o.at("size").get<std::string>());
      obj.affordances = o.at("affordances").get<std::vector<std::string>>();
      obj.cell = {o.at("cell")[0].get<int>(), o.at("cell")[1].get<int>()};
      obj.room = o.at("room").get<int>();
      obj.pickable = o.at("pickable").get<bool>();
      h.objects.push_back(std::move(obj));
    }
    for (const auto& d : j.at("doors")) {
      h.doors.push_back({d.at("rooms")[0].get<int>(), d.at("rooms")[1].get<int>(),
                         {d.at("cell")[0].get<int>(), d.at("cell")[1].get<int>()}});
    }
    return h;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInvalidInput, std::string("malformed house record: ") + e.what());
  }
}

}  // namespace vllr
