#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cirl/bots.hpp"
#include "cirl/irl/maxent.hpp"
#include "cirl/traces.hpp"

#ifndef CIRL_LAYOUT_DIR
#define CIRL_LAYOUT_DIR "layouts"
#endif

namespace cirl {

inline const std::vector<std::string>& layout_names() {
  static const std::vector<std::string> names{"original", "layout1", "layout2", "layout3",
                                              "layout4",  "layout5", "layout6"};
  return names;
}

/// A bundled layout name or a path to a map file.
inline Layout resolve_layout(const std::string& name_or_path, const std::string& layout_dir = CIRL_LAYOUT_DIR) {
  if (std::filesystem::exists(name_or_path) && std::filesystem::is_regular_file(name_or_path))
    return load_layout_file(name_or_path);
  const auto bundled = std::filesystem::path(layout_dir) / (name_or_path + ".map");
  if (std::filesystem::exists(bundled)) return load_layout_file(bundled.string());
  fail(ErrorKind::UsageError, "unknown layout '" + name_or_path + "'");
}

/// "all" expands to every bundled layout; otherwise a comma list.
inline std::vector<Layout> resolve_layouts(const std::string& spec, const std::string& layout_dir = CIRL_LAYOUT_DIR) {
  std::vector<Layout> out;
  if (spec == "all") {
    for (const auto& n : layout_names()) out.push_back(resolve_layout(n, layout_dir));
    return out;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item = spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(resolve_layout(item, layout_dir));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) fail(ErrorKind::UsageError, "no layouts given");
  return out;
}

/// Left-seat bot episodes, by default against the right-side worker.
/// Mixture bots get a fresh decision stream per episode.
inline std::vector<Trajectory> simulate_bot_episodes(const Layout& layout, const BotKind& bot, int episodes,
                                                     std::uint64_t seed, int horizon = kHorizon,
                                                     const BotKind& right = BotKind::right_worker()) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(std::max(0, episodes)));
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(e);
    BotKind b = bot;
    if (b.type == BotKind::Type::MixtureSharer) b.seed = splitmix64(s);
    out.push_back(simulate_episode(layout, b, right, s, horizon));
  }
  return out;
}

/// Every left-seat trace of simulated bot play, compacted.
inline Dataset synthetic_dataset(const Layout& layout, const BotKind& bot, int episodes, std::uint64_t seed) {
  std::vector<Trace> traces;
  for (const auto& t : simulate_bot_episodes(layout, bot, episodes, seed))
    for (auto& tr : extract_traces(layout, t, 0)) traces.push_back(std::move(tr));
  Dataset d = build_dataset(traces, DatasetSelector{}, true);
  if (bot.type == BotKind::Type::MixtureSharer) {
    std::string p = std::to_string(bot.share_probability);
    while (p.size() > 1 && p.back() == '0') p.pop_back();
    if (p.back() == '.') p.pop_back();
    d.name = "mixture-" + p;
  } else {
    d.name = bot.name();
  }
  return d;
}

/// Short names for the synthetic demonstrators: altruistic, selfish,
/// mixture-<p>.
inline BotKind demonstrator(const std::string& name) {
  if (name.rfind("mixture-", 0) == 0) {
    try {
      return BotKind::mixture(std::stod(name.substr(8)), 0);
    } catch (const std::logic_error&) {
      fail(ErrorKind::UsageError, "bad mixture probability in '" + name + "'");
    }
  }
  return BotKind::parse(name);
}

inline constexpr int kSyntheticEpisodes = 10;

/// Desk-scale MaxEnt configuration: two-member population, 50 outer
/// iterations, short policy episodes from the demonstration starts that end
/// at the first onion drop.
inline irl::IRLConfig desk_scale_irl_config(std::uint64_t seed) {
  irl::IRLConfig c;
  c.seed = seed;
  c.iterations = 50;
  c.rl_iterations = 2;
  c.rollout_episodes = 256;
  c.include_open_windows = true;
  c.start_from_traces = true;
  c.early_stop = false;
  c.pbt.population = 2;
  c.pbt.rollout_steps = 4000;
  c.pbt.parallel = false;
  c.pbt.env.episode_length = 40;
  c.pbt.env.stop_on_drop = true;
  return c;
}

}  // namespace cirl
