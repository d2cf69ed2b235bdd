#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "cirl/error.hpp"

namespace cirl {

enum class TileKind : std::uint8_t {
  Floor,
  Counter,
  OnionStore,
  Pot,
  BowlDispenser,
  Serving,
  Bridge,
};

enum class Side : std::uint8_t { Left, Right };

enum class Orientation : std::uint8_t { North, South, East, West };

/// Action order doubles as the navigation tie-break order.
enum class Action : std::uint8_t { Up, Down, Left, Right, Stay, Interact };

inline constexpr std::array<Action, 6> kAllActions = {
    Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay, Action::Interact};
inline constexpr std::array<Action, 4> kMoveActions = {Action::Up, Action::Down, Action::Left,
                                                       Action::Right};
inline constexpr int kNumActions = 6;

enum class Held : std::uint8_t { None, Onion, Bowl, Soup };

using JointAction = std::array<Action, 2>;

struct Cell {
  int x = 0;
  int y = 0;
  friend constexpr bool operator==(Cell, Cell) = default;
  friend constexpr auto operator<=>(Cell, Cell) = default;
};

constexpr Cell operator+(Cell a, Cell b) { return {a.x + b.x, a.y + b.y}; }

constexpr bool is_move(Action a) { return a <= Action::Right; }

constexpr Cell direction_delta(Orientation o) {
  switch (o) {
    case Orientation::North: return {0, -1};
    case Orientation::South: return {0, 1};
    case Orientation::East: return {1, 0};
    case Orientation::West: return {-1, 0};
  }
  return {0, 0};
}

constexpr Orientation orientation_of(Action move) {
  switch (move) {
    case Action::Up: return Orientation::North;
    case Action::Down: return Orientation::South;
    case Action::Right: return Orientation::East;
    default: return Orientation::West;
  }
}

constexpr Action move_toward(Orientation o) {
  switch (o) {
    case Orientation::North: return Action::Up;
    case Orientation::South: return Action::Down;
    case Orientation::East: return Action::Right;
    case Orientation::West: return Action::Left;
  }
  return Action::Stay;
}

constexpr Cell facing_cell(Cell pos, Orientation o) { return pos + direction_delta(o); }

constexpr bool is_walkable(TileKind k) { return k == TileKind::Floor; }

constexpr std::string_view to_string(Action a) {
  switch (a) {
    case Action::Up: return "Up";
    case Action::Down: return "Down";
    case Action::Left: return "Left";
    case Action::Right: return "Right";
    case Action::Stay: return "Stay";
    case Action::Interact: return "Interact";
  }
  return "?";
}

constexpr std::string_view to_string(Held h) {
  switch (h) {
    case Held::None: return "None";
    case Held::Onion: return "Onion";
    case Held::Bowl: return "Bowl";
    case Held::Soup: return "Soup";
  }
  return "?";
}

constexpr std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::North: return "N";
    case Orientation::South: return "S";
    case Orientation::East: return "E";
    case Orientation::West: return "W";
  }
  return "?";
}

constexpr std::string_view to_string(Side s) { return s == Side::Left ? "Left" : "Right"; }

constexpr std::string_view to_string(TileKind k) {
  switch (k) {
    case TileKind::Floor: return "Floor";
    case TileKind::Counter: return "Counter";
    case TileKind::OnionStore: return "OnionStore";
    case TileKind::Pot: return "Pot";
    case TileKind::BowlDispenser: return "BowlDispenser";
    case TileKind::Serving: return "Serving";
    case TileKind::Bridge: return "Bridge";
  }
  return "?";
}

inline std::optional<Action> parse_action(std::string_view s) {
  for (Action a : kAllActions)
    if (to_string(a) == s) return a;
  return std::nullopt;
}

inline std::optional<Held> parse_held(std::string_view s) {
  for (Held h : {Held::None, Held::Onion, Held::Bowl, Held::Soup})
    if (to_string(h) == s) return h;
  return std::nullopt;
}

inline std::optional<Orientation> parse_orientation(std::string_view s) {
  for (Orientation o :
       {Orientation::North, Orientation::South, Orientation::East, Orientation::West})
    if (to_string(o) == s) return o;
  return std::nullopt;
}

}  // namespace cirl
