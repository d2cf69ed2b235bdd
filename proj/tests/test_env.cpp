#include <gtest/gtest.h>

#include <functional>
#include <queue>
#include <random>
#include <set>

#include "cirl/bots.hpp"
#include "cirl/env/game.hpp"
#include "cirl/pipeline.hpp"
#include "cirl/traces.hpp"

using namespace cirl;

namespace {

const char* kTinyMap =
    "# smallest kitchen that satisfies every layout rule\n"
    "XPXPX\n"
    "O1X2O\n"
    "B.G.B\n"
    "S.X.S\n"
    "XXXXX\n";

int pot_at(const Layout& L, Cell c) {
  for (std::size_t i = 0; i < L.pots().size(); ++i)
    if (L.pots()[i] == c) return static_cast<int>(i);
  return -1;
}

bool has(const std::vector<GameEvent>& evs, EventKind k, int actor) {
  for (const auto& e : evs)
    if (e.kind == k && e.actor == actor) return true;
  return false;
}

int count(const std::vector<GameEvent>& evs, EventKind k) {
  int n = 0;
  for (const auto& e : evs) n += e.kind == k;
  return n;
}

// Independent checks of the state invariants.
void expect_valid(const Layout& L, const GameState& s) {
  for (int p = 0; p < 2; ++p) {
    ASSERT_EQ(L.tile(s.players[p].pos), TileKind::Floor);
    ASSERT_TRUE(L.walkable_on(s.players[p].pos, p == 0 ? Side::Left : Side::Right)) << "player " << p;
    ASSERT_GE(s.scores[p], 0);
    ASSERT_EQ(s.scores[p] % 10, 0);
  }
  ASSERT_EQ(s.pots.size(), L.pots().size());
  for (const auto& pot : s.pots) {
    ASSERT_GE(pot.onions, 0);
    ASSERT_LE(pot.onions, 3);
    if (pot.phase == PotPhase::Idle) ASSERT_LT(pot.onions, 3);
    else ASSERT_EQ(pot.onions, 3);
    if (pot.phase == PotPhase::Cooking) ASSERT_GT(pot.cook_remaining, 0);
  }
  ASSERT_GE(s.tick, 0);
  ASSERT_LE(s.tick, s.horizon);
}

int loose_onions(const GameState& s) {
  return (s.players[0].held == Held::Onion) + (s.players[1].held == Held::Onion) + (s.bridge_has_onion ? 1 : 0);
}

Cell walkable_neighbour(const Layout& L, Cell tile, Side side) {
  for (Cell d : {Cell{0, -1}, Cell{0, 1}, Cell{-1, 0}, Cell{1, 0}})
    if (L.walkable_on(tile + d, side)) return tile + d;
  ADD_FAILURE() << "no walkable neighbour";
  return tile;
}

Cell first_tile(const Layout& L, TileKind k, Side side) {
  for (int y = 0; y < L.height(); ++y)
    for (int x = 0; x < L.width(); ++x) {
      const Cell c{x, y};
      if (L.tile(c) != k) continue;
      for (Cell d : {Cell{0, -1}, Cell{0, 1}, Cell{-1, 0}, Cell{1, 0}})
        if (L.walkable_on(c + d, side)) return c;
    }
  ADD_FAILURE() << "tile not found";
  return {};
}

}  // namespace

TEST(Layout, OriginalLeftStoreIsCloserToItsPot) {
  const Layout L = resolve_layout("original");
  auto store_to_pot = [&](Side side) {
    const Cell from = walkable_neighbour(L, first_tile(L, TileKind::OnionStore, side), side);
    return shortest_path(L, from, TileKind::Pot, side).size();
  };
  EXPECT_LT(store_to_pot(Side::Left), store_to_pot(Side::Right));
}

TEST(Layout, TinyMapDimensions) {
  const Layout L = load_layout(kTinyMap, "tiny");
  // Count without the parser: first non-comment line and number of map lines.
  std::string text = kTinyMap;
  int rows = 0;
  std::size_t width = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = text.substr(pos, nl - pos);
    if (!line.empty() && line[0] != '#') {
      ++rows;
      width = line.size();
    }
    pos = nl + 1;
  }
  EXPECT_EQ(L.width(), static_cast<int>(width));
  EXPECT_EQ(L.height(), rows);
  EXPECT_EQ(L.width(), 5);
  EXPECT_EQ(L.height(), 5);
}

TEST(Layout, RejectsBadMaps) {
  auto kind_of = [](const std::string& text) {
    try {
      load_layout(text, "bad");
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::UsageError;
  };
  EXPECT_EQ(kind_of("XPXPX\nO1X2O\nBGGGB\nS.X.S\nXXXXX\n"), ErrorKind::InvariantViolation);  // two bridges
  EXPECT_EQ(kind_of("XPXPX\nO1X2O\nB.G.B\nS.X.S\nXXXX\n"), ErrorKind::MalformedMap);    // ragged
  EXPECT_EQ(kind_of("XPXPX\nO1X2O\nB.G.B\nS.Z.S\nXXXXX\n"), ErrorKind::MalformedMap);   // unknown glyph
  EXPECT_EQ(kind_of("XPXPX\nO1.2O\nB.G.B\nS.X.S\nXXXXX\n"), ErrorKind::InvariantViolation);  // sides joined
  EXPECT_EQ(kind_of("XXXPX\nO1X2O\nB.G.B\nS.X.S\nXXXXX\n"), ErrorKind::InvariantViolation);  // left pot missing
}

TEST(Layout, BundledLayoutsLoad) {
  for (const auto& name : layout_names()) {
    const Layout L = resolve_layout(name);
    EXPECT_EQ(L.id(), name);
    int bridges = 0;
    for (int y = 0; y < L.height(); ++y)
      for (int x = 0; x < L.width(); ++x) bridges += L.tile({x, y}) == TileKind::Bridge;
    EXPECT_EQ(bridges, 1) << name;
  }
}

TEST(InitialState, Defaults) {
  const Layout L = resolve_layout("original");
  const GameState s = initial_state(L);
  EXPECT_EQ(s.tick, 0);
  EXPECT_EQ(s.horizon, 400);
  EXPECT_EQ(s.scores[0], 0);
  EXPECT_EQ(s.scores[1], 0);
  EXPECT_EQ(s.players[0].pos, L.start(0).cell);
  EXPECT_EQ(s.players[1].pos, L.start(1).cell);
  EXPECT_EQ(s.players[0].held, Held::None);
  EXPECT_FALSE(s.bridge_has_onion);
  EXPECT_FALSE(s.help_requested);
  for (const auto& p : s.pots) {
    EXPECT_EQ(p.onions, 0);
    EXPECT_EQ(p.phase, PotPhase::Idle);
  }
}

TEST(InitialState, ModifiedLayoutMovesTheStart) {
  EXPECT_NE(resolve_layout("layout1").start(0), resolve_layout("original").start(0));
}

TEST(Step, ThirdOnionStartsCooking) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L);
  const Cell pot = first_tile(L, TileKind::Pot, Side::Left);
  s.players[0].pos = pot + Cell{0, 1};
  s.players[0].facing = Orientation::North;
  s.players[0].held = Held::Onion;
  s.pots[pot_at(L, pot)].onions = 2;
  const auto r = step(L, s, {Action::Interact, Action::Stay});
  const auto& p = r.state.pots[pot_at(L, pot)];
  EXPECT_EQ(p.onions, 3);
  EXPECT_EQ(p.phase, PotPhase::Cooking);
  EXPECT_EQ(p.cook_remaining, kCookTime);
  EXPECT_EQ(r.state.players[0].held, Held::None);
  EXPECT_TRUE(has(r.events, EventKind::OnionPotted, 0));
  EXPECT_TRUE(has(r.events, EventKind::SoupStartedCooking, 0));
}

TEST(Step, StayOnlyAdvancesClocks) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L);
  s.pots[0] = {3, PotPhase::Cooking, 5};
  const auto r = step(L, s, {Action::Stay, Action::Stay});
  GameState expected = s;
  expected.tick += 1;
  expected.pots[0].cook_remaining = 4;
  EXPECT_EQ(r.state, expected);
  EXPECT_TRUE(r.events.empty());
}

TEST(Step, CookingFinishesAfterCookTime) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L);
  s.pots[0] = {3, PotPhase::Cooking, kCookTime};
  for (int i = 0; i < kCookTime - 1; ++i) s = step(L, s, {Action::Stay, Action::Stay}).state;
  EXPECT_EQ(s.pots[0].phase, PotPhase::Cooking);
  const auto r = step(L, s, {Action::Stay, Action::Stay});
  EXPECT_EQ(r.state.pots[0].phase, PotPhase::Ready);
  EXPECT_EQ(count(r.events, EventKind::SoupReady), 1);
}

TEST(Step, DeliveryScoresTenForTheDeliverer) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L);
  const Cell serve = first_tile(L, TileKind::Serving, Side::Left);
  s.players[0].pos = walkable_neighbour(L, serve, Side::Left);
  s.players[0].facing = Orientation::West;
  s.players[0].held = Held::Soup;
  const auto r = step(L, s, {Action::Interact, Action::Stay});
  EXPECT_EQ(r.state.scores[0], 10);
  EXPECT_EQ(r.state.scores[1], 0);
  EXPECT_EQ(r.state.players[0].held, Held::None);
  EXPECT_TRUE(has(r.events, EventKind::SoupDelivered, 0));
}

TEST(Step, FullCookCycle) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L);
  const Cell pot = first_tile(L, TileKind::Pot, Side::Left);
  const int pi = pot_at(L, pot);
  s.pots[pi] = {3, PotPhase::Ready, 0};
  s.players[0].pos = pot + Cell{0, 1};
  s.players[0].facing = Orientation::North;
  s.players[0].held = Held::None;
  auto r = step(L, s, {Action::Interact, Action::Stay});
  EXPECT_EQ(r.state.players[0].held, Held::None);  // needs a bowl first
  s.players[0].held = Held::Bowl;
  r = step(L, s, {Action::Interact, Action::Stay});
  EXPECT_EQ(r.state.players[0].held, Held::Soup);
  EXPECT_EQ(r.state.pots[pi].onions, 0);
  EXPECT_EQ(r.state.pots[pi].phase, PotPhase::Idle);
  EXPECT_TRUE(has(r.events, EventKind::SoupCollected, 0));
}

TEST(Step, BlockedMoveOnlyTurns) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L);
  s.players[0].pos = {1, 1};
  s.players[0].facing = Orientation::South;
  const auto r = step(L, s, {Action::Up, Action::Stay});  // (1,0) is a counter
  EXPECT_EQ(r.state.players[0].pos, (Cell{1, 1}));
  EXPECT_EQ(r.state.players[0].facing, Orientation::North);
  const auto m = step(L, s, {Action::Right, Action::Stay});
  EXPECT_EQ(m.state.players[0].pos, (Cell{2, 1}));
  EXPECT_EQ(m.state.players[0].facing, Orientation::East);
}

TEST(Step, BridgeHoldsOneOnionAndLeftResolvesFirst) {
  const Layout L = resolve_layout("original");
  const Cell g = L.bridge();
  GameState s = initial_state(L);
  s.players[0].pos = g + Cell{-1, 0};
  s.players[0].facing = Orientation::East;
  s.players[0].held = Held::Onion;
  s.players[1].pos = g + Cell{1, 0};
  s.players[1].facing = Orientation::West;
  s.players[1].held = Held::Onion;
  s.help_requested = true;
  auto r = step(L, s, {Action::Interact, Action::Interact});
  EXPECT_TRUE(r.state.bridge_has_onion);
  EXPECT_EQ(r.state.players[0].held, Held::None);
  EXPECT_EQ(r.state.players[1].held, Held::Onion);  // occupied bridge: no-op
  EXPECT_FALSE(r.state.help_requested);
  EXPECT_TRUE(has(r.events, EventKind::OnionBridged, 0));
  s = r.state;
  s.players[1].held = Held::None;
  r = step(L, s, {Action::Stay, Action::Interact});
  EXPECT_FALSE(r.state.bridge_has_onion);
  EXPECT_EQ(r.state.players[1].held, Held::Onion);
  EXPECT_TRUE(has(r.events, EventKind::OnionTakenFromBridge, 1));
}

TEST(Step, HelpCallWhenLeavingTheBridgeTowardTheStore) {
  const Layout L = resolve_layout("original");
  const Cell g = L.bridge();
  GameState s = initial_state(L);
  s.players[1].pos = g + Cell{1, 0};
  s.players[1].facing = Orientation::East;
  const auto r = step(L, s, {Action::Stay, Action::Right});
  EXPECT_TRUE(r.state.help_requested);
  EXPECT_TRUE(has(r.events, EventKind::HelpCalled, 1));
  // Holding something: no call.
  s.players[1].held = Held::Bowl;
  const auto q = step(L, s, {Action::Stay, Action::Right});
  EXPECT_FALSE(q.state.help_requested);
}

TEST(Step, EpisodeOverAtHorizon) {
  const Layout L = resolve_layout("original");
  GameState s = initial_state(L, 3);
  for (int i = 0; i < 3; ++i) s = step(L, s, {Action::Stay, Action::Stay}).state;
  EXPECT_TRUE(s.terminal());
  try {
    step(L, s, {Action::Stay, Action::Stay});
    FAIL() << "expected EpisodeOver";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EpisodeOver);
  }
}

TEST(ShortestPath, AlreadyAdjacentIsEmpty) {
  const Layout L = resolve_layout("original");
  const Cell pot = first_tile(L, TileKind::Pot, Side::Left);
  EXPECT_TRUE(shortest_path(L, pot + Cell{0, 1}, TileKind::Pot, Side::Left).empty());
}

TEST(ShortestPath, LeftStartIsCloserToItsStore) {
  const Layout L = resolve_layout("original");
  EXPECT_LT(shortest_path(L, L.start(0).cell, TileKind::OnionStore, Side::Left).size(),
            shortest_path(L, L.start(1).cell, TileKind::OnionStore, Side::Right).size());
}

TEST(ShortestPath, MatchesExhaustiveSearch) {
  for (const std::string name : {"tiny", "original"}) {
    const Layout L = name == "tiny" ? load_layout(kTinyMap, "tiny") : resolve_layout(name);
    for (Side side : {Side::Left, Side::Right}) {
      for (TileKind kind : {TileKind::OnionStore, TileKind::Pot, TileKind::BowlDispenser, TileKind::Serving,
                            TileKind::Bridge}) {
        for (int y = 0; y < L.height(); ++y)
          for (int x = 0; x < L.width(); ++x) {
            const Cell from{x, y};
            if (!L.walkable_on(from, side)) continue;
            auto goal = [&](Cell c) {
              for (Cell d : {Cell{0, -1}, Cell{0, 1}, Cell{-1, 0}, Cell{1, 0}})
                if (L.tile(c + d) == kind) return true;
              return false;
            };
            // Enumerate every simple path; keep the shortest length.
            std::size_t best = SIZE_MAX;
            std::set<std::pair<int, int>> seen{{from.x, from.y}};
            std::function<void(Cell, std::size_t)> dfs = [&](Cell c, std::size_t len) {
              if (len >= best) return;
              if (goal(c)) {
                best = len;
                return;
              }
              for (Cell d : {Cell{0, -1}, Cell{0, 1}, Cell{-1, 0}, Cell{1, 0}}) {
                const Cell n = c + d;
                if (!L.walkable_on(n, side) || seen.count({n.x, n.y})) continue;
                seen.insert({n.x, n.y});
                dfs(n, len + 1);
                seen.erase({n.x, n.y});
              }
            };
            dfs(from, 0);
            const auto path = shortest_path(L, from, kind, side);
            ASSERT_EQ(path.size(), best) << name << " from " << x << "," << y;
            Cell c = from;
            for (Cell n : path) {
              ASSERT_EQ(std::abs(n.x - c.x) + std::abs(n.y - c.y), 1);
              ASSERT_TRUE(L.walkable_on(n, side));
              c = n;
            }
            ASSERT_TRUE(goal(c));
          }
      }
    }
  }
}

TEST(ShortestPath, UnreachableOriginThrows) {
  const Layout L = resolve_layout("original");
  try {
    shortest_path(L, {0, 0}, TileKind::Pot, Side::Left);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unreachable);
  }
}

TEST(EffortProfile, ModifiedLayoutsMatchTheirDesign) {
  for (const char* n : {"layout1", "layout2", "layout3"}) {
    const auto e = effort_profile(resolve_layout(n));
    EXPECT_LT(e.steps_to_share, e.steps_to_cook) << n;
  }
  for (const char* n : {"layout4", "layout6"}) {
    const auto e = effort_profile(resolve_layout(n));
    EXPECT_GT(e.steps_to_share, e.steps_to_cook) << n;
  }
  const auto e5 = effort_profile(resolve_layout("layout5"));
  EXPECT_LE(std::abs(e5.steps_to_share - e5.steps_to_cook), 2);
}

TEST(Fuzz, RandomPlayKeepsInvariants) {
  std::mt19937_64 rng(2024);
  for (const auto& name : layout_names()) {
    const Layout L = resolve_layout(name);
    GameState s = initial_state(L);
    int prev_tick = -1;
    for (int i = 0; i < 1000; ++i) {
      if (s.terminal()) {
        s = initial_state(L);
        prev_tick = -1;
      }
      JointAction a;
      for (int p = 0; p < 2; ++p) {
        // Mix uniform actions with scripted ones so cooking and delivery happen.
        a[p] = rng() % 2 ? kAllActions[rng() % kAllActions.size()]
                         : bot_action(p == 0 ? BotKind::selfish() : BotKind::right_worker(), L, s, p);
      }
      const auto r = step(L, s, a);
      ASSERT_EQ(step(L, s, a).state, r.state);  // determinism
      ASSERT_NO_FATAL_FAILURE(expect_valid(L, r.state));
      ASSERT_EQ(r.state.tick, s.tick + 1);
      for (const auto& e : r.events) {
        ASSERT_EQ(e.tick, s.tick);
        ASSERT_GE(e.tick, prev_tick);
        prev_tick = e.tick;
      }
      for (int p = 0; p < 2; ++p) {
        const int delta = r.state.scores[p] - s.scores[p];
        ASSERT_EQ(delta, 10 * has(r.events, EventKind::SoupDelivered, p));
      }
      ASSERT_EQ(loose_onions(r.state),
                loose_onions(s) + count(r.events, EventKind::OnionPickedUp) - count(r.events, EventKind::OnionPotted));
      s = r.state;
    }
  }
}

TEST(Replay, LoggedActionsReproduceTheFinalState) {
  std::mt19937_64 rng(7);
  for (const auto& name : layout_names()) {
    const Layout L = resolve_layout(name);
    Trajectory t;
    t.layout_id = name;
    GameState s = initial_state(L, 120);
    while (!s.terminal()) {
      const JointAction a{kAllActions[rng() % 6], kAllActions[rng() % 6]};
      auto r = step(L, s, a);
      t.steps.push_back({s, a, r.events});
      s = r.state;
    }
    t.final_state = s;
    GameState replay = initial_state(L, 120);
    for (const auto& st : t.steps) replay = step(L, replay, st.actions).state;
    EXPECT_EQ(replay, t.final_state) << name;
    EXPECT_NO_THROW(verify_replay(L, t));
  }
}
