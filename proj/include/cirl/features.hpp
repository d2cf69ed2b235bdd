#pragma once

#include <array>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cirl/env/game.hpp"
#include "cirl/env/layout.hpp"

namespace cirl {

inline constexpr int kFeatureDim = 18;
using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;

/// Component offsets. The order is part of the reward-model file contract.
namespace feat {
inline constexpr int kRelOnionStore = 0;  // 2
inline constexpr int kRelBridge = 2;      // 2
inline constexpr int kRelStove = 4;       // 2
inline constexpr int kOrientation = 6;    // 4: N, S, E, W
inline constexpr int kPath = 10;          // 4: see PathSlot
inline constexpr int kOnionOnBridge = 14;
inline constexpr int kOnionsInPot = 15;
inline constexpr int kAgentHasOnion = 16;
inline constexpr int kOtherHasOnion = 17;

enum PathSlot : int { HoldingOnPath = 0, HoldingOffPath = 1, EmptyOnPath = 2, EmptyOffPath = 3 };
}  // namespace feat

inline constexpr std::array<std::string_view, kFeatureDim> kFeatureNames = {
    "rel_onion_store_x", "rel_onion_store_y", "rel_bridge_x",       "rel_bridge_y",
    "rel_stove_x",       "rel_stove_y",       "orient_n",           "orient_s",
    "orient_e",          "orient_w",          "path_holding_on",    "path_holding_off",
    "path_empty_on",     "path_empty_off",    "onion_on_bridge",    "onions_in_pot",
    "agent_has_onion",   "other_agent_has_onion"};

/// Comma-joined feature names, embedded in model files.
inline std::string feature_order_contract() {
  std::string out;
  for (std::size_t i = 0; i < kFeatureNames.size(); ++i) {
    if (i) out += ',';
    out += kFeatureNames[i];
  }
  return out;
}

/// Cells of the canonical cook route start -> onion store -> pot for `player`,
/// start cell included.
inline std::vector<Cell> canonical_cook_route(const Layout& layout, int player) {
  const Side side = side_of_player(player);
  std::vector<Cell> cells{layout.start(player).cell};
  for (Cell c : shortest_path(layout, cells.back(), TileKind::OnionStore, side)) cells.push_back(c);
  for (Cell c : shortest_path(layout, cells.back(), TileKind::Pot, side)) cells.push_back(c);
  return cells;
}

/// Feature extractor bound to one layout and focal player. Precomputes the
/// on-path mask so per-state extraction is constant time.
class Featurizer {
 public:
  Featurizer(const Layout& layout, int focal) : layout_(&layout), focal_(focal) {
    on_path_.assign(static_cast<std::size_t>(layout.width() * layout.height()), false);
    for (Cell c : canonical_cook_route(layout, focal)) on_path_[layout.index(c)] = true;
  }

  const Layout& layout() const { return *layout_; }
  int focal() const { return focal_; }

  FeatureVector operator()(const GameState& s) const {
    const Layout& L = *layout_;
    const Side side = side_of_player(focal_);
    const PlayerState& me = s.players[focal_];
    const PlayerState& other = s.players[1 - focal_];
    const double sx = L.width() > 1 ? 1.0 / (L.width() - 1) : 0.0;
    const double sy = L.height() > 1 ? 1.0 / (L.height() - 1) : 0.0;

    FeatureVector f = FeatureVector::Zero();
    auto put_rel = [&](int offset, std::optional<Cell> target) {
      if (!target) return;
      f[offset] = (target->x - me.pos.x) * sx;
      f[offset + 1] = (target->y - me.pos.y) * sy;
    };
    put_rel(feat::kRelOnionStore, L.nearest_tile(side, TileKind::OnionStore, me.pos));
    put_rel(feat::kRelBridge, L.bridge());
    const auto stove = L.nearest_tile(side, TileKind::Pot, me.pos);
    put_rel(feat::kRelStove, stove);

    f[feat::kOrientation + static_cast<int>(me.facing)] = 1.0;

    const bool holding = me.held == Held::Onion;
    const bool on_path = L.in_bounds(me.pos) && on_path_[L.index(me.pos)];
    const int slot = holding ? (on_path ? feat::HoldingOnPath : feat::HoldingOffPath)
                             : (on_path ? feat::EmptyOnPath : feat::EmptyOffPath);
    f[feat::kPath + slot] = 1.0;

    f[feat::kOnionOnBridge] = s.bridge_has_onion ? 1.0 : 0.0;
    if (stove) {
      const int idx = L.pot_index(*stove);
      if (idx >= 0) f[feat::kOnionsInPot] = s.pots[idx].onions / double(kOnionsPerSoup);
    }
    f[feat::kAgentHasOnion] = holding ? 1.0 : 0.0;
    f[feat::kOtherHasOnion] = other.held == Held::Onion ? 1.0 : 0.0;
    return f;
  }

 private:
  const Layout* layout_;
  int focal_;
  std::vector<bool> on_path_;
};

inline FeatureVector featurize(const GameState& state, const Layout& layout, int focal = 0) {
  return Featurizer(layout, focal)(state);
}

}  // namespace cirl
