#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cirl/bots.hpp"
#include "cirl/env/game.hpp"
#include "cirl/error.hpp"
#include "cirl/traces.hpp"

namespace cirl::service {

enum class Phase { Tutorial, Round1, Round2, Round3, Done };
enum class Condition { Helped, NotHelped };

constexpr std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Tutorial: return "Tutorial";
    case Phase::Round1: return "Round1";
    case Phase::Round2: return "Round2";
    case Phase::Round3: return "Round3";
    case Phase::Done: return "Done";
  }
  return "Done";
}

constexpr std::string_view to_string(Condition c) { return c == Condition::Helped ? "Helped" : "NotHelped"; }

/// Round number carried in client messages: 0 for the tutorial, 1..3 for the
/// rounds and 4 once the session is done.
constexpr int round_number(Phase p) { return static_cast<int>(p); }
constexpr bool is_round(Phase p) { return p == Phase::Round1 || p == Phase::Round2 || p == Phase::Round3; }

/// Human seat per phase: right side in Round 2 only.
constexpr int human_seat(Phase p) { return p == Phase::Round2 ? 1 : 0; }

inline BotKind bot_for(Phase p, Condition c) {
  if (p == Phase::Round2) return c == Condition::Helped ? BotKind::altruistic() : BotKind::selfish();
  if (p == Phase::Tutorial) return BotKind::idle();
  return BotKind::right_worker();
}

using Clock = std::chrono::steady_clock;
using Metadata = std::map<std::string, std::string>;

inline constexpr std::chrono::minutes kSessionTimeout{5};

struct ServiceConfig {
  /// Directory receiving one subdirectory per session; empty disables disk
  /// persistence (logs stay in memory).
  std::string persist_dir;
  /// Seeds the condition draw; unset draws from the OS entropy source.
  std::optional<std::uint64_t> seed;
  std::chrono::milliseconds timeout = kSessionTimeout;
  int horizon = kHorizon;
  int tick_period_ms = kTickPeriodMs;
};

struct Session {
  std::string id;
  Metadata metadata;
  Condition condition = Condition::NotHelped;
  Phase phase = Phase::Tutorial;
  GameState state;
  Trajectory log;
  Action queued = Action::Stay;
  std::array<bool, 3> checkpoints{false, false, false};  // move, pot, deliver
  std::vector<Trajectory> rounds;
  std::vector<std::string> round_files;
  Clock::time_point last_activity{};
  bool running = false;
  bool expired = false;
  bool completed = false;
};

inline ojson layout_json(const Layout& layout) {
  ojson j;
  j["id"] = layout.id();
  j["width"] = layout.width();
  j["height"] = layout.height();
  ojson rows = ojson::array();
  for (int y = 0; y < layout.height(); ++y) {
    std::string row;
    for (int x = 0; x < layout.width(); ++x) {
      switch (layout.tile({x, y})) {
        case TileKind::Floor: row += '.'; break;
        case TileKind::Counter: row += 'X'; break;
        case TileKind::OnionStore: row += 'O'; break;
        case TileKind::Pot: row += 'P'; break;
        case TileKind::BowlDispenser: row += 'B'; break;
        case TileKind::Serving: row += 'S'; break;
        case TileKind::Bridge: row += 'G'; break;
      }
    }
    rows.push_back(row);
  }
  j["rows"] = rows;
  j["bridge"] = {{"x", layout.bridge().x}, {"y", layout.bridge().y}};
  return j;
}

/// Server-to-client state message.
inline ojson state_message(const Session& s, int tick_period_ms) {
  const ojson enc = json_codec::encode(s.state);
  ojson j;
  j["type"] = "state";
  j["phase"] = std::string(to_string(s.phase));
  j["round"] = round_number(s.phase);
  j["tick"] = s.state.tick;
  j["players"] = enc["players"];
  j["pots"] = enc["pots"];
  j["bridge"] = s.state.bridge_has_onion ? "Onion" : "None";
  j["scores"] = s.state.scores;
  j["time_left_ms"] = std::max(0, s.state.horizon - s.state.tick) * tick_period_ms;
  j["help_requested"] = s.state.help_requested;
  j["human_seat"] = human_seat(s.phase);
  return j;
}

/// Session lifecycle and protocol. Thread-safe; every public call takes the
/// manager lock, so a session's ticks and submissions never interleave.
class SessionManager {
 public:
  SessionManager(Layout layout, ServiceConfig cfg, std::function<Clock::time_point()> clock = Clock::now)
      : layout_(std::move(layout)), cfg_(std::move(cfg)), clock_(std::move(clock)) {
    std::random_device rd;
    const std::uint64_t entropy = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    condition_seed_ = cfg_.seed.value_or(entropy);
    id_rng_.seed(cfg_.seed ? splitmix64(*cfg_.seed ^ 0x1d5eULL) : splitmix64(entropy + 1));
  }

  const Layout& layout() const { return layout_; }
  const ServiceConfig& config() const { return cfg_; }

  /// Creates a session; the returned payload omits the condition.
  ojson create_session(const Metadata& metadata) {
    std::lock_guard lock(mu_);
    Session s;
    do {
      s.id = make_id();
    } while (sessions_.count(s.id));
    s.metadata = metadata;
    s.condition = keyed_uniform(condition_seed_, created_++) < 0.5 ? Condition::Helped : Condition::NotHelped;
    s.last_activity = clock_();
    begin_phase(s, Phase::Tutorial);
    if (!cfg_.persist_dir.empty()) {
      const auto dir = session_dir(s.id);
      std::filesystem::create_directories(dir);
      ojson header;
      header["id"] = s.id;
      header["layout"] = layout_.id();
      header["metadata"] = s.metadata;
      std::ofstream(dir / "session.json") << header.dump(2) << '\n';
    }
    ojson out;
    out["id"] = s.id;
    out["phase"] = std::string(to_string(s.phase));
    out["layout"] = layout_json(layout_);
    out["tick_period_ms"] = cfg_.tick_period_ms;
    sessions_.emplace(s.id, std::move(s));
    return out;
  }

  /// Marks the session as connected so its clock starts running.
  std::vector<ojson> attach(const std::string& id) {
    std::lock_guard lock(mu_);
    Session& s = live(id);
    s.running = true;
    s.last_activity = clock_();
    return {phase_message(s, "attach"), state_message(s, cfg_.tick_period_ms)};
  }

  /// Queues the human action for the next tick (last writer wins).
  void submit_action(const std::string& id, int round, long long client_tick, const std::string& action) {
    (void)client_tick;
    std::lock_guard lock(mu_);
    Session& s = live(id);
    if (round != round_number(s.phase) || s.phase == Phase::Done)
      fail(ErrorKind::StaleRound, "action for round " + std::to_string(round) + " but session is in " +
                                      std::string(to_string(s.phase)));
    const auto a = parse_action(action);
    if (!a) fail(ErrorKind::InvalidAction, "unknown action '" + action + "'");
    s.queued = *a;
    s.last_activity = clock_();
  }

  /// Advances one tick; returns the messages to broadcast. Throws
  /// SessionExpired after aborting an idle session.
  std::vector<ojson> tick(const std::string& id) {
    std::lock_guard lock(mu_);
    Session& s = live(id);
    return tick_locked(s);
  }

  /// Ticks every running session. Expired sessions report a single
  /// `expired` phase message.
  std::map<std::string, std::vector<ojson>> tick_all() {
    std::lock_guard lock(mu_);
    std::map<std::string, std::vector<ojson>> out;
    for (auto& [id, s] : sessions_) {
      if (!s.running || s.expired || s.phase == Phase::Done) continue;
      try {
        out[id] = tick_locked(s);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::SessionExpired) throw;
        out[id] = {phase_message(s, "expired")};
      }
    }
    return out;
  }

  ojson summary(const std::string& id) const {
    std::lock_guard lock(mu_);
    const Session& s = find(id);
    ojson j;
    j["id"] = s.id;
    j["phase"] = std::string(to_string(s.phase));
    j["expired"] = s.expired;
    j["completed"] = s.completed;
    j["metadata"] = s.metadata;
    ojson rounds = ojson::array();
    for (std::size_t i = 0; i < s.rounds.size(); ++i) {
      const auto& t = s.rounds[i];
      rounds.push_back({{"round", t.meta.round},
                        {"scores", t.final_state.scores},
                        {"ticks", t.steps.size()},
                        {"complete", t.meta.complete}});
    }
    j["rounds"] = rounds;
    if (s.completed) j["condition"] = std::string(to_string(s.condition));
    return j;
  }

  /// Finalises a finished session and reveals its condition.
  ojson complete(const std::string& id) {
    {
      std::lock_guard lock(mu_);
      Session& s = live(id);
      if (s.phase != Phase::Done)
        fail(ErrorKind::StaleRound, "session is still in " + std::string(to_string(s.phase)));
      s.completed = true;
      s.last_activity = clock_();
    }
    return summary(id);
  }

  /// Read access for tests and tools.
  template <class F>
  auto with_session(const std::string& id, F&& f) const {
    std::lock_guard lock(mu_);
    return f(find(id));
  }

  std::vector<std::string> session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> ids;
    for (const auto& [id, s] : sessions_) ids.push_back(id);
    return ids;
  }

 private:
  std::filesystem::path session_dir(const std::string& id) const {
    return std::filesystem::path(cfg_.persist_dir) / id;
  }

  std::string make_id() {
    static constexpr char hex[] = "0123456789abcdef";
    std::string id;
    for (int w = 0; w < 2; ++w) {
      std::uint64_t v = id_rng_();
      for (int i = 0; i < 16; ++i, v >>= 4) id += hex[v & 0xf];
    }
    return id;
  }

  const Session& find(const std::string& id) const {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorKind::UnknownSession, "no session '" + id + "'");
    return it->second;
  }

  Session& live(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) fail(ErrorKind::UnknownSession, "no session '" + id + "'");
    if (it->second.expired) fail(ErrorKind::SessionExpired, "session '" + id + "' expired");
    return it->second;
  }

  ojson phase_message(const Session& s, const std::string& reason) const {
    ojson j;
    j["type"] = "phase";
    j["phase"] = std::string(to_string(s.phase));
    j["round"] = round_number(s.phase);
    j["reason"] = reason;
    j["human_seat"] = human_seat(s.phase);
    if (s.phase == Phase::Tutorial)
      j["checkpoints"] = {{"move", s.checkpoints[0]}, {"pot", s.checkpoints[1]}, {"deliver", s.checkpoints[2]}};
    return j;
  }

  void begin_phase(Session& s, Phase p) {
    s.phase = p;
    s.queued = Action::Stay;
    if (p == Phase::Done) return;
    s.state = initial_state(layout_, cfg_.horizon);
    s.log = Trajectory{};
    s.log.layout_id = layout_.id();
    s.log.id = s.id + "-round" + std::to_string(round_number(p));
    const int h = human_seat(p);
    s.log.roles[h] = Role{"human", ""};
    s.log.roles[1 - h] = Role{"bot", bot_for(p, s.condition).name()};
    s.log.meta.round = round_number(p);
    const auto g = s.metadata.find("group");
    s.log.meta.group = g == s.metadata.end() ? "" : g->second;
    s.log.meta.helped_in_round2 = s.condition == Condition::Helped;
    s.log.meta.attributes = s.metadata;
  }

  void persist_round(Session& s, bool complete) {
    s.log.final_state = s.state;
    s.log.meta.complete = complete;
    if (!cfg_.persist_dir.empty()) {
      const auto path = session_dir(s.id) / ("round" + std::to_string(round_number(s.phase)) +
                                             (complete ? "" : ".partial") + ".ndjson");
      save_trajectory(path.string(), s.log);
      s.round_files.push_back(path.string());
    }
    s.rounds.push_back(s.log);
  }

  std::vector<ojson> tick_locked(Session& s) {
    if (s.phase == Phase::Done) return {};
    if (clock_() - s.last_activity > cfg_.timeout) {
      if (is_round(s.phase)) persist_round(s, /*complete=*/false);
      s.expired = true;
      fail(ErrorKind::SessionExpired, "session '" + s.id + "' idle for longer than the timeout");
    }
    std::vector<ojson> out;
    const int h = human_seat(s.phase);
    JointAction joint{Action::Stay, Action::Stay};
    joint[h] = s.queued;
    joint[1 - h] = bot_action(bot_for(s.phase, s.condition), layout_, s.state, 1 - h);
    s.queued = Action::Stay;
    auto r = step(layout_, s.state, joint);
    if (s.phase == Phase::Tutorial) {
      if (r.state.players[h].pos != s.state.players[h].pos) s.checkpoints[0] = true;
      for (const auto& e : r.events) {
        if (e.actor != h) continue;
        if (e.kind == EventKind::OnionPotted) s.checkpoints[1] = true;
        if (e.kind == EventKind::SoupDelivered) s.checkpoints[2] = true;
      }
    } else {
      s.log.steps.push_back({s.state, joint, r.events});
    }
    s.state = std::move(r.state);
    out.push_back(state_message(s, cfg_.tick_period_ms));

    if (s.phase == Phase::Tutorial) {
      if (s.checkpoints[0] && s.checkpoints[1] && s.checkpoints[2]) {
        begin_phase(s, Phase::Round1);
        out.push_back(phase_message(s, "tutorial_complete"));
      } else if (s.state.terminal()) {
        begin_phase(s, Phase::Tutorial);
        out.push_back(phase_message(s, "tutorial_restart"));
      }
    } else if (s.state.terminal()) {
      ojson done;
      done["type"] = "phase";
      done["phase"] = std::string(to_string(s.phase));
      done["round"] = round_number(s.phase);
      done["reason"] = "round_complete";
      done["event"] = "RoundComplete";
      done["scores"] = s.state.scores;
      done["tick"] = s.state.tick;
      out.push_back(done);
      persist_round(s, /*complete=*/true);
      begin_phase(s, static_cast<Phase>(static_cast<int>(s.phase) + 1));
      out.push_back(phase_message(s, "next"));
    }
    return out;
  }

  Layout layout_;
  ServiceConfig cfg_;
  std::function<Clock::time_point()> clock_;
  std::uint64_t condition_seed_ = 0;
  std::uint64_t created_ = 0;
  std::mt19937_64 id_rng_;
  mutable std::mutex mu_;
  std::map<std::string, Session> sessions_;
};

}  // namespace cirl::service
