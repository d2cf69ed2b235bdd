#pragma once

#include <algorithm>
#include <array>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cirl/env/types.hpp"
#include "cirl/error.hpp"

namespace cirl {

struct Pose {
  Cell cell;
  Orientation facing = Orientation::North;
  friend constexpr bool operator==(const Pose&, const Pose&) = default;
};

/// Interactive tile kinds that navigation can target.
inline constexpr std::array<TileKind, 5> kTargetKinds = {
    TileKind::OnionStore, TileKind::Pot, TileKind::BowlDispenser, TileKind::Serving,
    TileKind::Bridge};

constexpr int target_slot(TileKind k) {
  switch (k) {
    case TileKind::OnionStore: return 0;
    case TileKind::Pot: return 1;
    case TileKind::BowlDispenser: return 2;
    case TileKind::Serving: return 3;
    case TileKind::Bridge: return 4;
    default: return -1;
  }
}

constexpr int side_index(Side s) { return s == Side::Left ? 0 : 1; }
constexpr Side side_of_player(int player) { return player == 0 ? Side::Left : Side::Right; }

/// Immutable kitchen geometry. Player 0 owns the region holding glyph `1`
/// (Side::Left) and player 1 the region holding glyph `2` (Side::Right).
///
/// Navigation distance fields are precomputed per (side, target kind) at load
/// time: `distance(side, kind, c)` is the number of moves from walkable cell
/// `c` to the closest cell adjacent to a tile of `kind` reachable from that
/// side, or -1.
class Layout {
 public:
  static constexpr int kUnreachable = -1;

  const std::string& id() const { return id_; }
  int width() const { return width_; }
  int height() const { return height_; }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  int index(Cell c) const { return c.y * width_ + c.x; }
  Cell cell_at(int idx) const { return {idx % width_, idx / width_}; }

  TileKind tile(Cell c) const { return in_bounds(c) ? grid_[index(c)] : TileKind::Counter; }

  /// Side owning a walkable cell, if any.
  std::optional<Side> side_of(Cell c) const {
    if (!in_bounds(c)) return std::nullopt;
    const int s = cell_side_[index(c)];
    if (s < 0) return std::nullopt;
    return static_cast<Side>(s);
  }

  bool walkable_on(Cell c, Side s) const {
    const auto owner = side_of(c);
    return owner && *owner == s;
  }

  const Pose& start(int player) const { return starts_[player]; }
  Cell bridge() const { return bridge_; }
  const std::vector<Cell>& pots() const { return pots_; }

  int pot_index(Cell c) const {
    const auto it = std::find(pots_.begin(), pots_.end(), c);
    return it == pots_.end() ? -1 : static_cast<int>(it - pots_.begin());
  }

  /// Side from which an interactive tile is reachable (bridge: both).
  std::optional<Side> tile_side(Cell c) const {
    if (!in_bounds(c)) return std::nullopt;
    const int s = tile_side_[index(c)];
    if (s < 0) return std::nullopt;
    return static_cast<Side>(s);
  }

  int distance(Side side, TileKind kind, Cell c) const {
    if (!in_bounds(c)) return kUnreachable;
    return dist_[side_index(side)][target_slot(kind)][index(c)];
  }

  /// Tile of `kind` reached by the tie-broken greedy route from `c`.
  std::optional<Cell> nearest_tile(Side side, TileKind kind, Cell c) const {
    if (!in_bounds(c)) return std::nullopt;
    const int t = nearest_[side_index(side)][target_slot(kind)][index(c)];
    if (t < 0) return std::nullopt;
    return cell_at(t);
  }

  /// Walkable cells of `side` that touch the bridge tile.
  const std::vector<Cell>& bridge_adjacent(Side side) const {
    return bridge_adjacent_[side_index(side)];
  }
  bool is_bridge_adjacent(Cell c, Side side) const {
    const auto& v = bridge_adjacent_[side_index(side)];
    return std::find(v.begin(), v.end(), c) != v.end();
  }

  /// First move, in Up/Down/Left/Right order, that lowers the distance to
  /// `kind`. Empty when already adjacent or unreachable.
  std::optional<Action> descent_step(Side side, TileKind kind, Cell c) const {
    const int d = distance(side, kind, c);
    if (d <= 0) return std::nullopt;
    for (Action a : kMoveActions) {
      const Cell n = c + direction_delta(orientation_of(a));
      if (walkable_on(n, side) && distance(side, kind, n) == d - 1) return a;
    }
    return std::nullopt;
  }

  friend Layout load_layout(std::string_view text, std::string id);

 private:
  void build_navigation();

  std::string id_;
  int width_ = 0;
  int height_ = 0;
  std::vector<TileKind> grid_;
  std::vector<int> cell_side_;
  std::vector<int> tile_side_;
  std::array<Pose, 2> starts_{};
  Cell bridge_{};
  std::vector<Cell> pots_;
  std::array<std::vector<Cell>, 2> bridge_adjacent_;
  std::array<std::array<std::vector<int>, 5>, 2> dist_;
  std::array<std::array<std::vector<int>, 5>, 2> nearest_;
};

namespace detail {

inline std::optional<TileKind> glyph_kind(char g) {
  switch (g) {
    case 'X': return TileKind::Counter;
    case '.':
    case '1':
    case '2': return TileKind::Floor;
    case 'O': return TileKind::OnionStore;
    case 'P': return TileKind::Pot;
    case 'B': return TileKind::BowlDispenser;
    case 'S': return TileKind::Serving;
    case 'G': return TileKind::Bridge;
    default: return std::nullopt;
  }
}

inline std::array<Cell, 4> neighbours(Cell c) {
  return {c + direction_delta(Orientation::North), c + direction_delta(Orientation::South),
          c + direction_delta(Orientation::West), c + direction_delta(Orientation::East)};
}

}  // namespace detail

inline void Layout::build_navigation() {
  const int n = width_ * height_;
  for (int s = 0; s < 2; ++s) {
    const Side side = static_cast<Side>(s);
    for (TileKind kind : kTargetKinds) {
      const int slot = target_slot(kind);
      auto& dist = dist_[s][slot];
      dist.assign(n, kUnreachable);
      std::deque<Cell> frontier;
      for (int i = 0; i < n; ++i) {
        const Cell c = cell_at(i);
        if (!walkable_on(c, side)) continue;
        for (Cell nb : detail::neighbours(c)) {
          if (tile(nb) == kind) {
            dist[i] = 0;
            frontier.push_back(c);
            break;
          }
        }
      }
      while (!frontier.empty()) {
        const Cell c = frontier.front();
        frontier.pop_front();
        for (Cell nb : detail::neighbours(c)) {
          if (!walkable_on(nb, side) || dist[index(nb)] != kUnreachable) continue;
          dist[index(nb)] = dist[index(c)] + 1;
          frontier.push_back(nb);
        }
      }

      auto& nearest = nearest_[s][slot];
      nearest.assign(n, -1);
      for (int i = 0; i < n; ++i) {
        Cell c = cell_at(i);
        if (dist[i] == kUnreachable) continue;
        while (auto step = descent_step(side, kind, c)) c = c + direction_delta(orientation_of(*step));
        for (Action a : kMoveActions) {
          const Cell t = c + direction_delta(orientation_of(a));
          if (tile(t) == kind) {
            nearest[i] = index(t);
            break;
          }
        }
      }
    }
  }
}

/// Parses the ASCII map grammar: `X` counter, `.` floor, `O` onion store,
/// `P` pot, `B` bowl dispenser, `S` serving, `G` bridge, `1`/`2` player
/// starts on floor. Lines starting with `#` are comments; blank lines are
/// ignored. Throws MalformedMap or InvariantViolation.
inline Layout load_layout(std::string_view text, std::string id) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    rows.push_back(line);
  }
  if (rows.empty()) fail(ErrorKind::MalformedMap, "map has no rows");
  const std::size_t w = rows.front().size();
  for (std::size_t y = 0; y < rows.size(); ++y)
    if (rows[y].size() != w)
      fail(ErrorKind::MalformedMap, "ragged row " + std::to_string(y) + ": expected width " +
                                        std::to_string(w) + ", got " +
                                        std::to_string(rows[y].size()));

  Layout L;
  L.id_ = std::move(id);
  L.width_ = static_cast<int>(w);
  L.height_ = static_cast<int>(rows.size());
  L.grid_.resize(w * rows.size());
  int bridges = 0;
  std::array<int, 2> start_count{0, 0};
  for (int y = 0; y < L.height_; ++y) {
    for (int x = 0; x < L.width_; ++x) {
      const char g = rows[y][x];
      const auto kind = detail::glyph_kind(g);
      if (!kind)
        fail(ErrorKind::MalformedMap, std::string("unknown glyph '") + g + "' at (" +
                                          std::to_string(x) + "," + std::to_string(y) + ")");
      L.grid_[L.index({x, y})] = *kind;
      if (*kind == TileKind::Bridge) {
        ++bridges;
        L.bridge_ = {x, y};
      }
      if (*kind == TileKind::Pot) L.pots_.push_back({x, y});
      if (g == '1' || g == '2') {
        const int p = g - '1';
        ++start_count[p];
        L.starts_[p] = Pose{{x, y}, Orientation::North};
      }
    }
  }
  if (bridges != 1)
    fail(ErrorKind::InvariantViolation,
         "exactly one Bridge tile required, found " + std::to_string(bridges));
  if (start_count[0] != 1 || start_count[1] != 1)
    fail(ErrorKind::InvariantViolation, "exactly one start per player required");

  const int n = L.width_ * L.height_;
  L.cell_side_.assign(n, -1);
  for (int p = 0; p < 2; ++p) {
    const Cell origin = L.starts_[p].cell;
    if (L.cell_side_[L.index(origin)] >= 0)
      fail(ErrorKind::InvariantViolation, "side isolation: left and right regions are connected");
    std::deque<Cell> frontier{origin};
    L.cell_side_[L.index(origin)] = p;
    while (!frontier.empty()) {
      const Cell c = frontier.front();
      frontier.pop_front();
      for (Cell nb : detail::neighbours(c)) {
        if (!L.in_bounds(nb) || !is_walkable(L.tile(nb))) continue;
        int& owner = L.cell_side_[L.index(nb)];
        if (owner == p) continue;
        if (owner >= 0)
          fail(ErrorKind::InvariantViolation,
               "side isolation: left and right regions are connected");
        owner = p;
        frontier.push_back(nb);
      }
    }
  }
  for (int i = 0; i < n; ++i)
    if (is_walkable(L.grid_[i]) && L.cell_side_[i] < 0) {
      const Cell c = L.cell_at(i);
      fail(ErrorKind::InvariantViolation, "stray walkable cell at (" + std::to_string(c.x) + "," +
                                              std::to_string(c.y) + ") belongs to no side");
    }

  L.tile_side_.assign(n, -1);
  for (int i = 0; i < n; ++i) {
    const TileKind k = L.grid_[i];
    if (is_walkable(k) || k == TileKind::Counter) continue;
    bool touches[2] = {false, false};
    for (Cell nb : detail::neighbours(L.cell_at(i)))
      if (auto s = L.side_of(nb)) touches[side_index(*s)] = true;
    if (k == TileKind::Bridge) {
      for (int s = 0; s < 2; ++s)
        if (!touches[s])
          fail(ErrorKind::InvariantViolation,
               std::string("bridge access: no ") + std::string(to_string(static_cast<Side>(s))) +
                   " walkable cell adjacent to the Bridge");
      continue;
    }
    if (touches[0] && touches[1])
      fail(ErrorKind::InvariantViolation,
           std::string("side isolation: ") + std::string(to_string(k)) + " reachable from both sides");
    if (touches[0]) L.tile_side_[i] = 0;
    if (touches[1]) L.tile_side_[i] = 1;
  }
  for (int s = 0; s < 2; ++s) {
    for (TileKind k :
         {TileKind::OnionStore, TileKind::Pot, TileKind::BowlDispenser, TileKind::Serving}) {
      bool found = false;
      for (int i = 0; i < n && !found; ++i) found = L.grid_[i] == k && L.tile_side_[i] == s;
      if (!found)
        fail(ErrorKind::InvariantViolation,
             std::string("side facilities: ") + std::string(to_string(static_cast<Side>(s))) +
                 " side has no reachable " + std::string(to_string(k)));
    }
  }
  for (Cell nb : detail::neighbours(L.bridge_))
    if (auto s = L.side_of(nb)) L.bridge_adjacent_[side_index(*s)].push_back(nb);

  L.build_navigation();
  return L;
}

/// Loads a layout file; the layout id is the file stem.
inline Layout load_layout_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::MalformedMap, "cannot open layout file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string stem = path;
  if (const auto slash = stem.find_last_of('/'); slash != std::string::npos)
    stem = stem.substr(slash + 1);
  if (const auto dot = stem.find_last_of('.'); dot != std::string::npos) stem = stem.substr(0, dot);
  return load_layout(buf.str(), stem);
}

/// Breadth-first shortest walkable route from `from` to a cell adjacent to
/// the nearest `to_kind` tile on `side`. Ties break by Up, Down, Left, Right.
/// The returned list excludes `from`; an empty list means already adjacent.
inline std::vector<Cell> shortest_path(const Layout& layout, Cell from, TileKind to_kind,
                                       Side side) {
  if (!layout.walkable_on(from, side))
    fail(ErrorKind::Unreachable, "path origin is not walkable on the requested side");
  if (target_slot(to_kind) < 0 || layout.distance(side, to_kind, from) == Layout::kUnreachable)
    fail(ErrorKind::Unreachable,
         std::string("no reachable ") + std::string(to_string(to_kind)) + " from origin");
  std::vector<Cell> path;
  Cell c = from;
  while (auto step = layout.descent_step(side, to_kind, c)) {
    c = c + direction_delta(orientation_of(*step));
    path.push_back(c);
  }
  return path;
}

/// Actions taking `pose` to face the nearest `kind` tile: the shortest-path
/// moves followed by at most one turn. Updates `pose` in place.
inline std::vector<Action> approach_actions(const Layout& layout, Pose& pose, TileKind kind,
                                            Side side) {
  std::vector<Action> actions;
  Cell c = pose.cell;
  for (Cell next : shortest_path(layout, c, kind, side)) {
    for (Action a : kMoveActions) {
      if (c + direction_delta(orientation_of(a)) == next) {
        actions.push_back(a);
        pose.facing = orientation_of(a);
        break;
      }
    }
    c = next;
  }
  pose.cell = c;
  const auto target = layout.nearest_tile(side, kind, c);
  if (!target) fail(ErrorKind::Unreachable, "no target tile adjacent to route end");
  if (facing_cell(c, pose.facing) != *target) {
    for (Action a : kMoveActions) {
      if (c + direction_delta(orientation_of(a)) == *target) {
        actions.push_back(a);
        pose.facing = orientation_of(a);
        break;
      }
    }
  }
  return actions;
}

struct EffortProfile {
  int steps_to_share = 0;
  int steps_to_cook = 0;
};

/// Move-and-turn step counts of the left agent's canonical routes
/// start -> onion store -> bridge (share) and start -> onion store -> pot
/// (cook), excluding the two interactions.
inline EffortProfile effort_profile(const Layout& layout) {
  auto leg_count = [&](TileKind second) {
    Pose pose = layout.start(0);
    int steps = static_cast<int>(approach_actions(layout, pose, TileKind::OnionStore, Side::Left).size());
    steps += static_cast<int>(approach_actions(layout, pose, second, Side::Left).size());
    return steps;
  };
  return {leg_count(TileKind::Bridge), leg_count(TileKind::Pot)};
}

}  // namespace cirl
