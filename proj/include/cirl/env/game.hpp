#pragma once

#include <array>
#include <string>
#include <vector>

#include "cirl/env/layout.hpp"
#include "cirl/env/types.hpp"
#include "cirl/error.hpp"

namespace cirl {

inline constexpr int kCookTime = 10;
inline constexpr int kHorizon = 400;
inline constexpr int kTickPeriodMs = 150;
inline constexpr int kSoupPoints = 10;
inline constexpr int kOnionsPerSoup = 3;

enum class PotPhase : std::uint8_t { Idle, Cooking, Ready };

struct PotState {
  int onions = 0;
  PotPhase phase = PotPhase::Idle;
  int cook_remaining = 0;
  friend bool operator==(const PotState&, const PotState&) = default;
};

struct PlayerState {
  Cell pos;
  Orientation facing = Orientation::North;
  Held held = Held::None;
  friend bool operator==(const PlayerState&, const PlayerState&) = default;
};

/// Snapshot of one game instance. Pots are indexed like `Layout::pots()`.
/// `pickups` counts onion pickups per player and lets stochastic bots key
/// their per-onion decisions off the state alone.
struct GameState {
  int tick = 0;
  int horizon = kHorizon;
  std::array<PlayerState, 2> players{};
  std::vector<PotState> pots;
  bool bridge_has_onion = false;
  std::array<int, 2> scores{0, 0};
  bool help_requested = false;
  std::array<int, 2> pickups{0, 0};

  bool terminal() const { return tick >= horizon; }
  friend bool operator==(const GameState&, const GameState&) = default;
};

enum class EventKind : std::uint8_t {
  OnionPickedUp,
  OnionPotted,
  OnionBridged,
  OnionTakenFromBridge,
  SoupStartedCooking,
  SoupReady,
  SoupCollected,
  SoupDelivered,
  HelpCalled,
};

inline constexpr std::array<EventKind, 9> kAllEventKinds = {
    EventKind::OnionPickedUp,   EventKind::OnionPotted,   EventKind::OnionBridged,
    EventKind::OnionTakenFromBridge, EventKind::SoupStartedCooking, EventKind::SoupReady,
    EventKind::SoupCollected,   EventKind::SoupDelivered, EventKind::HelpCalled};

constexpr std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::OnionPickedUp: return "OnionPickedUp";
    case EventKind::OnionPotted: return "OnionPotted";
    case EventKind::OnionBridged: return "OnionBridged";
    case EventKind::OnionTakenFromBridge: return "OnionTakenFromBridge";
    case EventKind::SoupStartedCooking: return "SoupStartedCooking";
    case EventKind::SoupReady: return "SoupReady";
    case EventKind::SoupCollected: return "SoupCollected";
    case EventKind::SoupDelivered: return "SoupDelivered";
    case EventKind::HelpCalled: return "HelpCalled";
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (EventKind k : kAllEventKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

struct GameEvent {
  int tick = 0;
  EventKind kind = EventKind::OnionPickedUp;
  int actor = 0;
  friend bool operator==(const GameEvent&, const GameEvent&) = default;
};

struct StepResult {
  GameState state;
  std::vector<GameEvent> events;
};

inline GameState initial_state(const Layout& layout, int horizon = kHorizon) {
  GameState s;
  s.horizon = horizon;
  for (int p = 0; p < 2; ++p) {
    s.players[p].pos = layout.start(p).cell;
    s.players[p].facing = layout.start(p).facing;
  }
  s.pots.assign(layout.pots().size(), PotState{});
  return s;
}

namespace detail {

inline void interact(const Layout& layout, GameState& s, int p, std::vector<GameEvent>& events) {
  PlayerState& pl = s.players[p];
  const Cell target = facing_cell(pl.pos, pl.facing);
  const TileKind kind = layout.tile(target);
  const Side side = side_of_player(p);
  if (kind != TileKind::Bridge) {
    const auto owner = layout.tile_side(target);
    if (!owner || *owner != side) return;
  }
  switch (kind) {
    case TileKind::OnionStore:
      if (pl.held == Held::None) {
        pl.held = Held::Onion;
        ++s.pickups[p];
        events.push_back({s.tick, EventKind::OnionPickedUp, p});
      }
      break;
    case TileKind::BowlDispenser:
      if (pl.held == Held::None) pl.held = Held::Bowl;
      break;
    case TileKind::Pot: {
      PotState& pot = s.pots[layout.pot_index(target)];
      if (pl.held == Held::Onion && pot.phase == PotPhase::Idle && pot.onions < kOnionsPerSoup) {
        pl.held = Held::None;
        ++pot.onions;
        events.push_back({s.tick, EventKind::OnionPotted, p});
        if (pot.onions == kOnionsPerSoup) {
          pot.phase = PotPhase::Cooking;
          pot.cook_remaining = kCookTime;
          events.push_back({s.tick, EventKind::SoupStartedCooking, p});
        }
      } else if (pl.held == Held::Bowl && pot.phase == PotPhase::Ready) {
        pl.held = Held::Soup;
        pot = PotState{};
        events.push_back({s.tick, EventKind::SoupCollected, p});
      }
      break;
    }
    case TileKind::Serving:
      if (pl.held == Held::Soup) {
        pl.held = Held::None;
        s.scores[p] += kSoupPoints;
        events.push_back({s.tick, EventKind::SoupDelivered, p});
      }
      break;
    case TileKind::Bridge:
      if (pl.held == Held::Onion && !s.bridge_has_onion) {
        pl.held = Held::None;
        s.bridge_has_onion = true;
        s.help_requested = false;
        events.push_back({s.tick, EventKind::OnionBridged, p});
      } else if (pl.held == Held::None && s.bridge_has_onion) {
        pl.held = Held::Onion;
        s.bridge_has_onion = false;
        events.push_back({s.tick, EventKind::OnionTakenFromBridge, p});
      }
      break;
    default:
      break;
  }
}

}  // namespace detail

/// Advances one tick. Cooking timers run first, then player 0 acts, then
/// player 1 (so simultaneous bridge use resolves left first), then the help
/// rule is evaluated for the right-side player.
inline StepResult step(const Layout& layout, const GameState& state, JointAction joint) {
  if (state.terminal())
    fail(ErrorKind::EpisodeOver, "step at tick " + std::to_string(state.tick) +
                                     " with horizon " + std::to_string(state.horizon));
  StepResult out{state, {}};
  GameState& s = out.state;
  auto& events = out.events;

  for (std::size_t i = 0; i < s.pots.size(); ++i) {
    PotState& pot = s.pots[i];
    if (pot.phase != PotPhase::Cooking) continue;
    if (--pot.cook_remaining <= 0) {
      pot.cook_remaining = 0;
      pot.phase = PotPhase::Ready;
      const auto owner = layout.tile_side(layout.pots()[i]);
      events.push_back({s.tick, EventKind::SoupReady, owner ? side_index(*owner) : 0});
    }
  }

  const Cell right_before = s.players[1].pos;
  for (int p = 0; p < 2; ++p) {
    PlayerState& pl = s.players[p];
    const Action a = joint[p];
    if (is_move(a)) {
      pl.facing = orientation_of(a);
      const Cell next = facing_cell(pl.pos, pl.facing);
      if (layout.walkable_on(next, side_of_player(p))) pl.pos = next;
    } else if (a == Action::Interact) {
      detail::interact(layout, s, p, events);
    }
  }

  const PlayerState& right = s.players[1];
  if (right.held == Held::None && right.pos != right_before &&
      layout.is_bridge_adjacent(right_before, Side::Right)) {
    const int before = layout.distance(Side::Right, TileKind::OnionStore, right_before);
    const int after = layout.distance(Side::Right, TileKind::OnionStore, right.pos);
    if (after >= 0 && after < before) {
      s.help_requested = true;
      events.push_back({s.tick, EventKind::HelpCalled, 1});
    }
  }

  ++s.tick;
  return out;
}

}  // namespace cirl
