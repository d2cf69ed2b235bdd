#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cirl/env/game.hpp"

namespace cirl {

/// Who controls a seat. `bot` is empty for human players.
struct Role {
  std::string controller = "bot";  // "bot" | "human"
  std::string bot;                 // bot kind name when controller == "bot"
  friend bool operator==(const Role&, const Role&) = default;
};

struct TrajectoryMeta {
  int round = 1;
  std::string group;
  std::optional<bool> helped_in_round2;
  bool complete = true;
  std::map<std::string, std::string> attributes;
  friend bool operator==(const TrajectoryMeta&, const TrajectoryMeta&) = default;
};

/// One transition: the state the joint action was applied to and the events
/// the transition emitted.
struct TrajectoryStep {
  GameState state;
  JointAction actions{Action::Stay, Action::Stay};
  std::vector<GameEvent> events;
  friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
  std::string id;
  std::string layout_id;
  std::uint64_t seed = 0;
  std::array<Role, 2> roles{};
  TrajectoryMeta meta;
  std::vector<TrajectoryStep> steps;
  GameState final_state;

  /// Every visited state: each step's pre-state followed by the final state.
  std::vector<GameState> states() const {
    std::vector<GameState> out;
    out.reserve(steps.size() + 1);
    for (const auto& s : steps) out.push_back(s.state);
    out.push_back(final_state);
    return out;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

}  // namespace cirl
