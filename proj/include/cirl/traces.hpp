#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cirl/env/game.hpp"
#include "cirl/env/layout.hpp"
#include "cirl/error.hpp"
#include "cirl/trajectory.hpp"

namespace cirl {

using ojson = nlohmann::ordered_json;

inline constexpr int kTrajectoryFormatVersion = 1;

enum class TraceLabel { Altruistic, NonAltruistic };

constexpr std::string_view to_string(TraceLabel l) {
  return l == TraceLabel::Altruistic ? "Altruistic" : "NonAltruistic";
}

/// Onion-carrying window of one trajectory: from the focal agent's pickup
/// step to the step that drops the onion on the bridge or into its pot.
/// `end_state` is the state right after the drop.
struct Trace {
  std::string parent_id;
  int focal = 0;
  std::vector<TrajectoryStep> steps;
  GameState end_state;
  TraceLabel label = TraceLabel::NonAltruistic;
  std::string group;

  std::vector<GameState> states() const {
    std::vector<GameState> out;
    out.reserve(steps.size() + 1);
    for (const auto& s : steps) out.push_back(s.state);
    out.push_back(end_state);
    return out;
  }
  friend bool operator==(const Trace&, const Trace&) = default;
};

struct Dataset {
  std::string name;
  std::vector<Trace> traces;
  std::map<std::string, int> label_counts;
};

// ---------------------------------------------------------------- JSON codec
//
// Field names and order are fixed; every number is an integer so a parsed
// log replays bit-for-bit.

namespace json_codec {

inline ojson encode(const GameState& s) {
  ojson j;
  j["tick"] = s.tick;
  j["horizon"] = s.horizon;
  ojson players = ojson::array();
  for (const auto& p : s.players) {
    ojson pj;
    pj["x"] = p.pos.x;
    pj["y"] = p.pos.y;
    pj["facing"] = std::string(to_string(p.facing));
    pj["held"] = std::string(to_string(p.held));
    players.push_back(std::move(pj));
  }
  j["players"] = std::move(players);
  ojson pots = ojson::array();
  for (const auto& p : s.pots) {
    ojson pj;
    pj["onions"] = p.onions;
    pj["phase"] = p.phase == PotPhase::Idle ? "Idle" : p.phase == PotPhase::Cooking ? "Cooking" : "Ready";
    pj["cook_remaining"] = p.cook_remaining;
    pots.push_back(std::move(pj));
  }
  j["pots"] = std::move(pots);
  j["bridge"] = s.bridge_has_onion ? "Onion" : "None";
  j["scores"] = s.scores;
  j["help_requested"] = s.help_requested;
  j["pickups"] = s.pickups;
  return j;
}

template <class T>
T parse_enum(const ojson& j, std::optional<T> (*parser)(std::string_view), const char* what) {
  const auto v = parser(j.get<std::string>());
  if (!v) fail(ErrorKind::FormatError, std::string("bad ") + what + " '" + j.get<std::string>() + "'");
  return *v;
}

inline GameState decode_state(const ojson& j) {
  GameState s;
  s.tick = j.at("tick").get<int>();
  s.horizon = j.at("horizon").get<int>();
  const auto& players = j.at("players");
  if (players.size() != 2) fail(ErrorKind::FormatError, "state must list two players");
  for (int p = 0; p < 2; ++p) {
    const auto& pj = players[p];
    s.players[p].pos = {pj.at("x").get<int>(), pj.at("y").get<int>()};
    s.players[p].facing = parse_enum<Orientation>(pj.at("facing"), &parse_orientation, "facing");
    s.players[p].held = parse_enum<Held>(pj.at("held"), &parse_held, "held item");
  }
  for (const auto& pj : j.at("pots")) {
    PotState pot;
    pot.onions = pj.at("onions").get<int>();
    const auto phase = pj.at("phase").get<std::string>();
    if (phase == "Idle") pot.phase = PotPhase::Idle;
    else if (phase == "Cooking") pot.phase = PotPhase::Cooking;
    else if (phase == "Ready") pot.phase = PotPhase::Ready;
    else fail(ErrorKind::FormatError, "bad pot phase '" + phase + "'");
    pot.cook_remaining = pj.at("cook_remaining").get<int>();
    s.pots.push_back(pot);
  }
  const auto bridge = j.at("bridge").get<std::string>();
  if (bridge != "Onion" && bridge != "None") fail(ErrorKind::FormatError, "bad bridge content");
  s.bridge_has_onion = bridge == "Onion";
  s.scores = j.at("scores").get<std::array<int, 2>>();
  s.help_requested = j.at("help_requested").get<bool>();
  s.pickups = j.at("pickups").get<std::array<int, 2>>();
  return s;
}

inline ojson encode(const GameEvent& e) {
  ojson j;
  j["tick"] = e.tick;
  j["kind"] = std::string(to_string(e.kind));
  j["actor"] = e.actor;
  return j;
}

inline GameEvent decode_event(const ojson& j) {
  GameEvent e;
  e.tick = j.at("tick").get<int>();
  e.kind = parse_enum<EventKind>(j.at("kind"), &parse_event_kind, "event kind");
  e.actor = j.at("actor").get<int>();
  return e;
}

inline ojson encode(const TrajectoryStep& st) {
  ojson j;
  j["type"] = "step";
  j["state"] = encode(st.state);
  j["actions"] = {std::string(to_string(st.actions[0])), std::string(to_string(st.actions[1]))};
  ojson ev = ojson::array();
  for (const auto& e : st.events) ev.push_back(encode(e));
  j["events"] = std::move(ev);
  return j;
}

inline TrajectoryStep decode_step(const ojson& j) {
  TrajectoryStep st;
  st.state = decode_state(j.at("state"));
  const auto& acts = j.at("actions");
  if (acts.size() != 2) fail(ErrorKind::FormatError, "step must list two actions");
  for (int p = 0; p < 2; ++p) st.actions[p] = parse_enum<Action>(acts[p], &parse_action, "action");
  for (const auto& e : j.at("events")) st.events.push_back(decode_event(e));
  return st;
}

inline ojson encode_header(const Trajectory& t) {
  ojson j;
  j["type"] = "header";
  j["version"] = kTrajectoryFormatVersion;
  j["id"] = t.id;
  j["layout"] = t.layout_id;
  j["seed"] = t.seed;
  ojson roles = ojson::array();
  for (const auto& r : t.roles) roles.push_back({{"controller", r.controller}, {"bot", r.bot}});
  j["roles"] = std::move(roles);
  ojson meta;
  meta["round"] = t.meta.round;
  meta["group"] = t.meta.group;
  meta["helped_in_round2"] = t.meta.helped_in_round2 ? ojson(*t.meta.helped_in_round2) : ojson("n/a");
  meta["complete"] = t.meta.complete;
  ojson attrs = ojson::object();
  for (const auto& [k, v] : t.meta.attributes) attrs[k] = v;
  meta["attributes"] = std::move(attrs);
  j["meta"] = std::move(meta);
  return j;
}

inline void decode_header(const ojson& j, Trajectory& t) {
  if (j.at("type") != "header") fail(ErrorKind::FormatError, "first line must be a header");
  if (j.at("version").get<int>() != kTrajectoryFormatVersion)
    fail(ErrorKind::FormatError, "unsupported trajectory format version");
  t.id = j.at("id").get<std::string>();
  t.layout_id = j.at("layout").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  const auto& roles = j.at("roles");
  if (roles.size() != 2) fail(ErrorKind::FormatError, "header must list two roles");
  for (int p = 0; p < 2; ++p)
    t.roles[p] = {roles[p].at("controller").get<std::string>(), roles[p].at("bot").get<std::string>()};
  const auto& meta = j.at("meta");
  t.meta.round = meta.at("round").get<int>();
  t.meta.group = meta.at("group").get<std::string>();
  const auto& helped = meta.at("helped_in_round2");
  if (helped.is_boolean()) t.meta.helped_in_round2 = helped.get<bool>();
  else t.meta.helped_in_round2.reset();
  t.meta.complete = meta.at("complete").get<bool>();
  t.meta.attributes.clear();
  for (const auto& [k, v] : meta.at("attributes").items()) t.meta.attributes[k] = v.get<std::string>();
}

inline ojson encode(const Trace& tr) {
  ojson j;
  j["parent"] = tr.parent_id;
  j["focal"] = tr.focal;
  j["label"] = std::string(to_string(tr.label));
  j["group"] = tr.group;
  ojson steps = ojson::array();
  for (const auto& st : tr.steps) steps.push_back(encode(st));
  j["steps"] = std::move(steps);
  j["end_state"] = encode(tr.end_state);
  return j;
}

inline Trace decode_trace(const ojson& j) {
  Trace tr;
  tr.parent_id = j.at("parent").get<std::string>();
  tr.focal = j.at("focal").get<int>();
  const auto label = j.at("label").get<std::string>();
  if (label == "Altruistic") tr.label = TraceLabel::Altruistic;
  else if (label == "NonAltruistic") tr.label = TraceLabel::NonAltruistic;
  else fail(ErrorKind::FormatError, "bad trace label '" + label + "'");
  tr.group = j.at("group").get<std::string>();
  for (const auto& s : j.at("steps")) tr.steps.push_back(decode_step(s));
  tr.end_state = decode_state(j.at("end_state"));
  return tr;
}

}  // namespace json_codec

/// Newline-delimited log: one header line, one line per step, one final line.
inline void write_trajectory(std::ostream& out, const Trajectory& t) {
  out << json_codec::encode_header(t).dump() << '\n';
  for (const auto& st : t.steps) out << json_codec::encode(st).dump() << '\n';
  ojson fin;
  fin["type"] = "final";
  fin["state"] = json_codec::encode(t.final_state);
  out << fin.dump() << '\n';
}

inline Trajectory read_trajectory(std::istream& in) {
  Trajectory t;
  std::string line;
  bool have_header = false;
  bool have_final = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ojson j;
    try {
      j = ojson::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::FormatError, std::string("unparseable trajectory line: ") + e.what());
    }
    try {
      if (!have_header) {
        json_codec::decode_header(j, t);
        have_header = true;
        continue;
      }
      const auto type = j.at("type").get<std::string>();
      if (type == "step") {
        t.steps.push_back(json_codec::decode_step(j));
      } else if (type == "final") {
        t.final_state = json_codec::decode_state(j.at("state"));
        have_final = true;
      } else {
        fail(ErrorKind::FormatError, "unknown record type '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::FormatError, std::string("malformed trajectory record: ") + e.what());
    }
  }
  if (!have_header) fail(ErrorKind::FormatError, "trajectory log has no header");
  if (!have_final) fail(ErrorKind::FormatError, "trajectory log has no final state");
  return t;
}

inline std::string trajectory_to_string(const Trajectory& t) {
  std::ostringstream out;
  write_trajectory(out, t);
  return out.str();
}

inline Trajectory trajectory_from_string(const std::string& s) {
  std::istringstream in(s);
  return read_trajectory(in);
}

inline void save_trajectory(const std::string& path, const Trajectory& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::FormatError, "cannot write " + path);
  write_trajectory(out, t);
}

inline Trajectory load_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  return read_trajectory(in);
}

// ------------------------------------------------------------------ replay

/// Re-applies the logged actions and throws CorruptTrajectory at the first
/// divergence. When `from_initial` is set the first state must also equal
/// the layout's initial state.
inline void verify_replay(const Layout& layout, const Trajectory& t, bool from_initial = true) {
  if (t.steps.empty()) {
    if (from_initial && t.final_state != initial_state(layout, t.final_state.horizon))
      fail(ErrorKind::CorruptTrajectory, "empty trajectory does not sit at the initial state");
    return;
  }
  if (from_initial && t.steps.front().state != initial_state(layout, t.steps.front().state.horizon))
    fail(ErrorKind::CorruptTrajectory, "first logged state is not the initial state");
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& st = t.steps[i];
    StepResult r;
    try {
      r = step(layout, st.state, st.actions);
    } catch (const Error& e) {
      fail(ErrorKind::CorruptTrajectory, "step " + std::to_string(i) + ": " + e.what());
    }
    const GameState& logged_next = i + 1 < t.steps.size() ? t.steps[i + 1].state : t.final_state;
    if (r.state != logged_next)
      fail(ErrorKind::CorruptTrajectory, "replay diverges after step " + std::to_string(i));
    if (r.events != st.events)
      fail(ErrorKind::CorruptTrajectory, "event mismatch at step " + std::to_string(i));
  }
}

/// Same check for a trace, starting from its first stored state.
inline void verify_trace_replay(const Layout& layout, const Trace& tr) {
  Trajectory t;
  t.steps = tr.steps;
  t.final_state = tr.end_state;
  verify_replay(layout, t, /*from_initial=*/false);
}

// ---------------------------------------------------------------- extraction

namespace detail {
inline bool has_event(const TrajectoryStep& st, EventKind kind, int actor) {
  return std::any_of(st.events.begin(), st.events.end(),
                     [&](const GameEvent& e) { return e.kind == kind && e.actor == actor; });
}
}  // namespace detail

/// One trace per focal pickup from the onion store that ends in a bridge or
/// pot drop. Pickups still in hand when the episode ends yield nothing.
inline std::vector<Trace> extract_traces(const Layout& layout, const Trajectory& t, int focal = 0) {
  verify_replay(layout, t, /*from_initial=*/false);
  std::vector<Trace> out;
  std::optional<std::size_t> open;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& st = t.steps[i];
    if (detail::has_event(st, EventKind::OnionPickedUp, focal)) open = i;
    if (!open) continue;
    const bool bridged = detail::has_event(st, EventKind::OnionBridged, focal);
    const bool potted = detail::has_event(st, EventKind::OnionPotted, focal);
    if (!bridged && !potted) continue;
    Trace tr;
    tr.parent_id = t.id;
    tr.focal = focal;
    tr.group = t.meta.group;
    tr.label = bridged ? TraceLabel::Altruistic : TraceLabel::NonAltruistic;
    tr.steps.assign(t.steps.begin() + static_cast<std::ptrdiff_t>(*open),
                    t.steps.begin() + static_cast<std::ptrdiff_t>(i) + 1);
    tr.end_state = i + 1 < t.steps.size() ? t.steps[i + 1].state : t.final_state;
    out.push_back(std::move(tr));
    open.reset();
  }
  return out;
}

/// Drops interior steps in which the focal agent neither moved nor turned.
/// With `turns_are_movement == false` only a change of cell counts as
/// movement.
inline Trace compact_trace(const Trace& trace, bool turns_are_movement = true) {
  Trace out = trace;
  out.steps.clear();
  const int f = trace.focal;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const bool boundary = i == 0 || i + 1 == trace.steps.size();
    if (!boundary) {
      const auto& prev = trace.steps[i].state.players[f];
      const auto& cur = trace.steps[i + 1].state.players[f];
      const bool moved = prev.pos != cur.pos || (turns_are_movement && prev.facing != cur.facing);
      if (!moved) continue;
    }
    out.steps.push_back(trace.steps[i]);
  }
  return out;
}

struct DatasetSelector {
  std::optional<TraceLabel> label;
  std::optional<std::string> group;

  bool matches(const Trace& t) const {
    if (label && t.label != *label) return false;
    if (group && t.group != *group) return false;
    return true;
  }

  std::string dataset_name() const {
    if (group) return "group-labeled:" + *group;
    if (label) return *label == TraceLabel::Altruistic ? "altruistic" : "non-altruistic";
    return "all";
  }
};

inline Dataset build_dataset(const std::vector<Trace>& traces, const DatasetSelector& selector,
                             bool turns_are_movement = true) {
  Dataset d;
  d.name = selector.dataset_name();
  d.label_counts = {{"Altruistic", 0}, {"NonAltruistic", 0}};
  for (const auto& t : traces) {
    if (!selector.matches(t)) continue;
    d.traces.push_back(compact_trace(t, turns_are_movement));
    ++d.label_counts[std::string(to_string(t.label))];
  }
  if (d.traces.empty()) fail(ErrorKind::EmptySelection, "no traces match selector " + d.name);
  return d;
}

/// Writes `<stem>.traces.jsonl` (one trace per line) and `<stem>.json`, a
/// manifest of byte offsets, lengths and labels.
inline void save_dataset(const std::string& stem, const Dataset& d) {
  const std::string traces_path = stem + ".traces.jsonl";
  std::ofstream out(traces_path, std::ios::binary);
  if (!out) fail(ErrorKind::FormatError, "cannot write " + traces_path);
  ojson manifest;
  manifest["name"] = d.name;
  std::string file = traces_path;
  if (const auto slash = file.find_last_of('/'); slash != std::string::npos) file = file.substr(slash + 1);
  manifest["traces_file"] = file;
  ojson counts = ojson::object();
  for (const auto& [k, v] : d.label_counts) counts[k] = v;
  manifest["label_counts"] = std::move(counts);
  ojson entries = ojson::array();
  std::uint64_t offset = 0;
  for (const auto& t : d.traces) {
    const std::string line = json_codec::encode(t).dump();
    entries.push_back({{"offset", offset},
                       {"length", line.size()},
                       {"label", std::string(to_string(t.label))},
                       {"group", t.group},
                       {"parent", t.parent_id},
                       {"steps", t.steps.size()}});
    out << line << '\n';
    offset += line.size() + 1;
  }
  manifest["traces"] = std::move(entries);
  std::ofstream mf(stem + ".json", std::ios::binary);
  if (!mf) fail(ErrorKind::FormatError, "cannot write " + stem + ".json");
  mf << manifest.dump(2) << '\n';
}

/// Loads a dataset from its manifest path (`<stem>.json`).
inline Dataset load_dataset(const std::string& manifest_path) {
  std::ifstream mf(manifest_path, std::ios::binary);
  if (!mf) fail(ErrorKind::FormatError, "cannot open " + manifest_path);
  ojson manifest;
  try {
    manifest = ojson::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::FormatError, std::string("bad dataset manifest: ") + e.what());
  }
  std::string dir;
  if (const auto slash = manifest_path.find_last_of('/'); slash != std::string::npos)
    dir = manifest_path.substr(0, slash + 1);
  const std::string traces_path = dir + manifest.at("traces_file").get<std::string>();
  std::ifstream in(traces_path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + traces_path);
  Dataset d;
  d.name = manifest.at("name").get<std::string>();
  for (const auto& [k, v] : manifest.at("label_counts").items()) d.label_counts[k] = v.get<int>();
  for (const auto& entry : manifest.at("traces")) {
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto length = entry.at("length").get<std::size_t>();
    std::string line(length, '\0');
    in.seekg(static_cast<std::streamoff>(offset));
    in.read(line.data(), static_cast<std::streamsize>(length));
    if (!in) fail(ErrorKind::FormatError, "truncated traces file " + traces_path);
    d.traces.push_back(json_codec::decode_trace(ojson::parse(line)));
  }
  if (d.traces.empty()) fail(ErrorKind::EmptySelection, "dataset " + d.name + " is empty");
  return d;
}

}  // namespace cirl
