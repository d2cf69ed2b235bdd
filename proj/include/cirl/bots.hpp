#pragma once

#include <cstdint>
#include <string>

#include "cirl/env/game.hpp"
#include "cirl/env/layout.hpp"
#include "cirl/trajectory.hpp"

namespace cirl {

/// SplitMix64 finaliser; used as a counter-based generator so a stochastic
/// decision can be recomputed from (seed, counter) alone.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) keyed by (seed, counter).
constexpr double keyed_uniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(seed ^ splitmix64(counter + 0x632be59bd9b4e019ULL));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

struct BotKind {
  enum class Type { Altruistic, Selfish, RightWorker, MixtureSharer, Idle };

  Type type = Type::Idle;
  double share_probability = 0.0;
  std::uint64_t seed = 0;

  static BotKind altruistic() { return {Type::Altruistic}; }
  static BotKind selfish() { return {Type::Selfish}; }
  static BotKind right_worker() { return {Type::RightWorker}; }
  static BotKind idle() { return {Type::Idle}; }
  static BotKind mixture(double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0))
      fail(ErrorKind::InvariantViolation, "mixture share probability must lie in [0,1]");
    return {Type::MixtureSharer, p, seed};
  }

  std::string name() const {
    switch (type) {
      case Type::Altruistic: return "altruistic";
      case Type::Selfish: return "selfish";
      case Type::RightWorker: return "right-worker";
      case Type::Idle: return "idle";
      case Type::MixtureSharer: {
        std::string p = std::to_string(share_probability);
        while (p.size() > 1 && p.back() == '0') p.pop_back();
        if (p.back() == '.') p.pop_back();
        return "mixture:" + p + ":" + std::to_string(seed);
      }
    }
    return "idle";
  }

  /// Accepts the forms produced by name(); `mixture:<p>` defaults seed to 0.
  static BotKind parse(const std::string& s) {
    if (s == "altruistic") return altruistic();
    if (s == "selfish") return selfish();
    if (s == "right-worker") return right_worker();
    if (s == "idle") return idle();
    if (s.rfind("mixture:", 0) == 0) {
      const std::string rest = s.substr(8);
      const auto colon = rest.find(':');
      try {
        const double p = std::stod(rest.substr(0, colon));
        const std::uint64_t seed =
            colon == std::string::npos ? 0 : std::stoull(rest.substr(colon + 1));
        return mixture(p, seed);
      } catch (const std::logic_error&) {
      }
    }
    fail(ErrorKind::UsageError, "unknown bot kind '" + s + "'");
  }

  friend bool operator==(const BotKind&, const BotKind&) = default;
};

namespace detail {

/// Walk toward `kind` and face it; returns Interact once facing it, or Stay
/// instead when `may_interact` is false.
inline Action approach(const Layout& layout, const PlayerState& me, Side side, TileKind kind,
                       bool may_interact = true) {
  if (auto move = layout.descent_step(side, kind, me.pos)) return *move;
  const auto target = layout.nearest_tile(side, kind, me.pos);
  if (!target) return Action::Stay;
  if (facing_cell(me.pos, me.facing) == *target) return may_interact ? Action::Interact : Action::Stay;
  for (Action a : kMoveActions)
    if (me.pos + direction_delta(orientation_of(a)) == *target) return a;
  return Action::Stay;
}

inline const PotState* own_pot(const Layout& layout, const GameState& s, const PlayerState& me,
                               Side side) {
  const auto pot = layout.nearest_tile(side, TileKind::Pot, me.pos);
  if (!pot) return nullptr;
  return &s.pots[layout.pot_index(*pot)];
}

inline Action cook_action(const Layout& layout, const GameState& s, const PlayerState& me,
                          Side side) {
  const PotState* pot = own_pot(layout, s, me, side);
  const bool pot_busy = pot && pot->phase != PotPhase::Idle;
  switch (me.held) {
    case Held::Soup: return approach(layout, me, side, TileKind::Serving);
    case Held::Bowl:
      return approach(layout, me, side, TileKind::Pot, pot && pot->phase == PotPhase::Ready);
    case Held::Onion:
      return approach(layout, me, side, TileKind::Pot,
                      pot && pot->phase == PotPhase::Idle && pot->onions < kOnionsPerSoup);
    case Held::None:
      return pot_busy ? approach(layout, me, side, TileKind::BowlDispenser)
                      : approach(layout, me, side, TileKind::OnionStore);
  }
  return Action::Stay;
}

inline Action share_action(const Layout& layout, const GameState& s, const PlayerState& me,
                           Side side) {
  if (me.held == Held::Onion)
    return approach(layout, me, side, TileKind::Bridge, !s.bridge_has_onion);
  if (me.held == Held::None) return approach(layout, me, side, TileKind::OnionStore);
  return cook_action(layout, s, me, side);
}

inline Action right_worker_action(const Layout& layout, const GameState& s, const PlayerState& me,
                                  Side side) {
  if (me.held != Held::None) return cook_action(layout, s, me, side);
  const PotState* pot = own_pot(layout, s, me, side);
  if (pot && pot->phase != PotPhase::Idle) return approach(layout, me, side, TileKind::BowlDispenser);
  if (s.bridge_has_onion) return approach(layout, me, side, TileKind::Bridge);
  // Route store trips through the bridge-adjacent cell so the help call fires.
  const int to_store = layout.distance(side, TileKind::OnionStore, me.pos);
  const auto bridge_cell_via = [&]() -> std::optional<Cell> {
    Cell c = me.pos;
    while (auto step = layout.descent_step(side, TileKind::Bridge, c))
      c = c + direction_delta(orientation_of(*step));
    if (layout.distance(side, TileKind::Bridge, c) != 0) return std::nullopt;
    return c;
  }();
  if (bridge_cell_via) {
    const int bridge_to_store = layout.distance(side, TileKind::OnionStore, *bridge_cell_via);
    if (bridge_to_store >= 0 && to_store > bridge_to_store) {
      if (auto move = layout.descent_step(side, TileKind::Bridge, me.pos)) return *move;
    }
  }
  return approach(layout, me, side, TileKind::OnionStore);
}

}  // namespace detail

/// Scripted policy. Bots replan from the current state every tick, so the
/// result depends on (kind, state, seat) only.
inline Action bot_action(const BotKind& kind, const Layout& layout, const GameState& state,
                         int self_index) {
  const Side side = side_of_player(self_index);
  const PlayerState& me = state.players[self_index];
  switch (kind.type) {
    case BotKind::Type::Idle: return Action::Stay;
    case BotKind::Type::Selfish: return detail::cook_action(layout, state, me, side);
    case BotKind::Type::Altruistic: return detail::share_action(layout, state, me, side);
    case BotKind::Type::RightWorker: return detail::right_worker_action(layout, state, me, side);
    case BotKind::Type::MixtureSharer: {
      if (me.held == Held::Onion) {
        // The onion in hand is pickup number pickups-1 for this seat.
        const auto index = static_cast<std::uint64_t>(std::max(0, state.pickups[self_index] - 1));
        const bool share = keyed_uniform(kind.seed, index) < kind.share_probability;
        return share ? detail::share_action(layout, state, me, side)
                     : detail::cook_action(layout, state, me, side);
      }
      return detail::cook_action(layout, state, me, side);
    }
  }
  return Action::Stay;
}

/// Whether a mixture bot commits pickup `index` to the bridge.
inline bool mixture_shares(const BotKind& kind, int index) {
  return keyed_uniform(kind.seed, static_cast<std::uint64_t>(index)) < kind.share_probability;
}

/// Plays a full episode with both seats driven by bots.
inline Trajectory simulate_episode(const Layout& layout, const BotKind& left, const BotKind& right,
                                   std::uint64_t seed, int horizon = kHorizon) {
  Trajectory t;
  t.layout_id = layout.id();
  t.seed = seed;
  t.roles = {Role{"bot", left.name()}, Role{"bot", right.name()}};
  t.id = layout.id() + "-" + left.name() + "-" + std::to_string(seed);
  GameState s = initial_state(layout, horizon);
  t.steps.reserve(static_cast<std::size_t>(horizon));
  while (!s.terminal()) {
    const JointAction joint{bot_action(left, layout, s, 0), bot_action(right, layout, s, 1)};
    auto result = step(layout, s, joint);
    t.steps.push_back({std::move(s), joint, std::move(result.events)});
    s = std::move(result.state);
  }
  t.final_state = std::move(s);
  return t;
}

enum class CanonicalMode { Share, Cook };

/// Shortest left-agent episode from the layout start: fetch one onion and
/// drop it on the bridge (Share) or into the pot (Cook). The right agent
/// stays put throughout.
inline Trajectory canonical_trajectory(const Layout& layout, CanonicalMode mode) {
  Pose pose = layout.start(0);
  std::vector<Action> plan = approach_actions(layout, pose, TileKind::OnionStore, Side::Left);
  plan.push_back(Action::Interact);
  const TileKind drop = mode == CanonicalMode::Share ? TileKind::Bridge : TileKind::Pot;
  for (Action a : approach_actions(layout, pose, drop, Side::Left)) plan.push_back(a);
  plan.push_back(Action::Interact);

  Trajectory t;
  t.layout_id = layout.id();
  t.id = layout.id() + (mode == CanonicalMode::Share ? "-canonical-share" : "-canonical-cook");
  t.roles = {Role{"bot", "canonical"}, Role{"bot", "idle"}};
  GameState s = initial_state(layout);
  for (Action a : plan) {
    const JointAction joint{a, Action::Stay};
    auto result = step(layout, s, joint);
    t.steps.push_back({std::move(s), joint, std::move(result.events)});
    s = std::move(result.state);
  }
  t.final_state = std::move(s);
  return t;
}

}  // namespace cirl
