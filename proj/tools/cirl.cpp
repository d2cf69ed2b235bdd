// cirl: simulation, dataset building, IRL/RL training, evaluation,
// statistics, plotting and the play service behind one binary.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cirl/bots.hpp"
#include "cirl/irl/maxent.hpp"
#include "cirl/metrics.hpp"
#include "cirl/pipeline.hpp"
#include "cirl/plot.hpp"
#include "cirl/reward_model.hpp"
#include "cirl/rl/pbt.hpp"
#include "cirl/service/server.hpp"
#include "cirl/traces.hpp"

namespace fs = std::filesystem;
using namespace cirl;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;

/// Output directory of one invocation plus the files it wrote.
struct Run {
  std::string subcommand;
  std::string out;  // explicit --out; empty means timestamped
  std::uint64_t seed = kDefaultSeed;
  fs::path dir;
  std::vector<std::string> outputs;
  ojson extra = ojson::object();

  void open() {
    if (!out.empty()) {
      dir = out;
    } else {
      const char* root = std::getenv("CIRL_OUTPUT_ROOT");
      const std::time_t now = std::time(nullptr);
      std::tm tm{};
      localtime_r(&now, &tm);
      std::ostringstream stamp;
      stamp << subcommand << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
      dir = fs::path(root && *root ? root : "runs") / stamp.str();
      for (int n = 1; fs::exists(dir); ++n) dir = fs::path(dir.parent_path()) / (stamp.str() + "-" + std::to_string(n));
    }
    fs::create_directories(dir);
  }

  fs::path file(const std::string& rel) {
    outputs.push_back(rel);
    const fs::path p = dir / rel;
    fs::create_directories(p.parent_path());
    return p;
  }

  void write_manifest(const std::string& config) const {
    ojson m;
    m["subcommand"] = subcommand;
    m["seed"] = seed;
    m["config"] = config;
    m["outputs"] = outputs;
    if (!extra.empty()) m["summary"] = extra;
    std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  }
};

void common_flags(CLI::App* sub, Run& run) {
  sub->add_option("--seed", run.seed, "Random seed")->capture_default_str();
  sub->add_option("--out", run.out, "Output directory (default: timestamped under $CIRL_OUTPUT_ROOT or ./runs)");
}

const CLI::Validator kLayoutName(
    [](std::string& s) -> std::string {
      try {
        resolve_layout(s);
      } catch (const Error& e) {
        return e.what();
      }
      return {};
    },
    "LAYOUT", "bundled layout name or map file");

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v;
    if (!plot::parse_number(item, v)) fail(ErrorKind::UsageError, "not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<Trace> read_traces_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  std::vector<Trace> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json_codec::decode_trace(ojson::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::CorruptTrajectory, path + ": " + e.what());
    }
  }
  return out;
}

Layout layout_for(const Trajectory& t, const std::string& override_name) {
  return resolve_layout(override_name.empty() ? t.layout_id : override_name);
}

/// Dataset manifest path, or the name of a synthetic demonstrator.
Dataset dataset_for(const std::string& spec, const Layout& layout, int episodes, std::uint64_t seed) {
  if (fs::is_regular_file(spec)) return load_dataset(spec);
  return synthetic_dataset(layout, demonstrator(spec), episodes, seed);
}

/// Reward files under the given paths, with display names taken from the
/// training config next to them when present.
std::vector<metrics::NamedModel> collect_models(const std::vector<std::string>& paths) {
  std::vector<fs::path> files;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().filename() == "reward.cirlrwd") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(p);
    }
  }
  if (files.empty()) fail(ErrorKind::UsageError, "no reward models found");
  std::vector<metrics::NamedModel> out;
  for (const auto& f : files) {
    std::string name = f.stem().string();
    if (name == "reward") name = f.parent_path().filename().string();
    const fs::path conf = f.parent_path() / "config.json";
    if (fs::exists(conf)) {
      std::ifstream in(conf);
      const ojson j = ojson::parse(in, nullptr, false);
      if (j.is_object() && j.contains("dataset") && j["dataset"].is_string()) name = j["dataset"].get<std::string>();
    }
    out.push_back({name, load_reward_model(f.string())});
  }
  return out;
}

int feature_index(const std::string& s) {
  for (int i = 0; i < kFeatureDim; ++i)
    if (kFeatureNames[i] == s) return i;
  double v;
  if (plot::parse_number(s, v) && v >= 0 && v < kFeatureDim && v == std::floor(v)) return static_cast<int>(v);
  fail(ErrorKind::UsageError, "unknown feature '" + s + "'");
}

void print_table(const metrics::GeneralizationTable& t) {
  std::cout << std::left << std::setw(16) << "model";
  for (const auto& l : t.layouts) std::cout << std::setw(10) << l;
  std::cout << '\n';
  for (std::size_t m = 0; m < t.models.size(); ++m) {
    std::cout << std::setw(16) << t.models[m];
    for (std::size_t l = 0; l < t.layouts.size(); ++l)
      std::cout << std::setw(10) << std::fixed << std::setprecision(4) << t.sr(m, l);
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Altruism-aware IRL toolkit: gridworld simulation, MaxEnt IRL, sharing ratios, play service"};
  app.set_config("--config", "", "TOML config file; any flag may be set, command line wins");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  Run run;

  // simulate
  std::string sim_layout = "original", sim_bot, sim_right = "right-worker";
  int sim_episodes = 1, sim_horizon = kHorizon;
  auto* simulate = app.add_subcommand("simulate", "Play bot-vs-bot episodes and log trajectories");
  simulate->add_option("--layout", sim_layout, "Layout name or map file")->check(kLayoutName)->capture_default_str();
  simulate->add_option("--bot", sim_bot, "Left bot: altruistic, selfish, mixture-<p>, right-worker, idle")->required();
  simulate->add_option("--right", sim_right, "Right bot")->capture_default_str();
  simulate->add_option("--episodes", sim_episodes, "Episode count")->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--horizon", sim_horizon, "Ticks per episode")->check(CLI::PositiveNumber)->capture_default_str();
  common_flags(simulate, run);

  // extract
  std::vector<std::string> ex_trajectories;
  std::string ex_layout;
  int ex_focal = -1;
  auto* extract = app.add_subcommand("extract", "Cut onion-carrying traces out of trajectories");
  extract->add_option("--trajectories", ex_trajectories, "Trajectory files")->required()->check(CLI::ExistingFile);
  extract->add_option("--layout", ex_layout, "Layout override (default: from each trajectory)")->check(kLayoutName);
  extract->add_option("--focal", ex_focal, "Focal seat; -1 picks the human seat")->check(CLI::Range(-1, 1))->capture_default_str();
  common_flags(extract, run);

  // build-dataset
  std::vector<std::string> bd_traces, bd_trajectories;
  std::string bd_label = "all", bd_group, bd_name, bd_bot, bd_layout = "original";
  int bd_episodes = kSyntheticEpisodes;
  bool bd_no_turns = false;
  auto* build = app.add_subcommand("build-dataset", "Select and compact traces into a dataset");
  build->add_option("--traces", bd_traces, "Trace files (.jsonl)")->check(CLI::ExistingFile);
  build->add_option("--trajectories", bd_trajectories, "Trajectory files to extract from")->check(CLI::ExistingFile);
  build->add_option("--bot", bd_bot, "Simulate a demonstrator instead: altruistic, selfish, mixture-<p>");
  build->add_option("--layout", bd_layout, "Layout for --bot")->check(kLayoutName)->capture_default_str();
  build->add_option("--episodes", bd_episodes, "Episodes for --bot")->check(CLI::PositiveNumber)->capture_default_str();
  build->add_option("--label", bd_label, "Label filter")
      ->check(CLI::IsMember({"all", "altruistic", "non-altruistic"}))
      ->capture_default_str();
  build->add_option("--group", bd_group, "Group filter");
  build->add_option("--name", bd_name, "Dataset file stem");
  build->add_flag("--no-turns", bd_no_turns, "Only cell changes count as movement when compacting");
  common_flags(build, run);

  // train-irl
  irl::IRLConfig irl_cfg = desk_scale_irl_config(kDefaultSeed);
  std::string irl_dataset, irl_layout = "original", irl_decay = "l2", irl_visitation = "trace-windows";
  int irl_episodes = kSyntheticEpisodes;
  auto* train_irl = app.add_subcommand("train-irl", "MaxEnt IRL of a reward model from a dataset");
  train_irl->add_option("--dataset", irl_dataset, "Dataset manifest, or synthetic demonstrator name")->required();
  train_irl->add_option("--layout", irl_layout, "Layout")->check(kLayoutName)->capture_default_str();
  train_irl->add_option("--episodes", irl_episodes, "Episodes for a synthetic dataset")->check(CLI::PositiveNumber)->capture_default_str();
  train_irl->add_option("--iterations", irl_cfg.iterations, "Outer iterations")->check(CLI::PositiveNumber)->capture_default_str();
  train_irl->add_option("--learning-rate", irl_cfg.schedule.learning_rate, "Reward learning rate")->capture_default_str();
  train_irl->add_option("--lr-gamma", irl_cfg.schedule.lr_gamma, "Per-iteration learning-rate decay")->capture_default_str();
  train_irl->add_option("--weight-decay", irl_cfg.schedule.weight_decay, "Weight decay")->capture_default_str();
  train_irl->add_option("--decay-mode", irl_decay, "Weight decay form")->check(CLI::IsMember({"l2", "multiplicative"}))->capture_default_str();
  train_irl->add_option("--visitation", irl_visitation, "Policy visitation: pickup-to-drop windows or whole episodes")
      ->check(CLI::IsMember({"trace-windows", "full-episode"}))
      ->capture_default_str();
  train_irl->add_option("--population", irl_cfg.pbt.population, "PBT population")->check(CLI::PositiveNumber)->capture_default_str();
  train_irl->add_option("--rollout-steps", irl_cfg.pbt.rollout_steps, "PPO steps per update")->check(CLI::PositiveNumber)->capture_default_str();
  train_irl->add_option("--rl-iterations", irl_cfg.rl_iterations, "PPO updates per outer iteration")->check(CLI::NonNegativeNumber)->capture_default_str();
  train_irl->add_option("--rollout-episodes", irl_cfg.rollout_episodes, "Policy visitation episodes")->check(CLI::PositiveNumber)->capture_default_str();
  train_irl->add_option("--episode-length", irl_cfg.pbt.env.episode_length, "Policy episode cap")->check(CLI::PositiveNumber)->capture_default_str();
  train_irl->add_option("--checkpoint-every", irl_cfg.checkpoint_every, "Checkpoint period (0 disables)")->capture_default_str();
  train_irl->add_flag("--early-stop,!--no-early-stop", irl_cfg.early_stop, "Stop when trajectory MSE plateaus")->capture_default_str();
  common_flags(train_irl, run);

  // train-rl
  rl::PbtConfig rl_cfg;
  std::string rl_model, rl_layout = "original";
  bool rl_stop_on_drop = false;
  auto* train_rl = app.add_subcommand("train-rl", "PPO with population-based training against a reward model");
  train_rl->add_option("--model", rl_model, "Reward model file")->required()->check(CLI::ExistingFile);
  train_rl->add_option("--layout", rl_layout, "Layout")->check(kLayoutName)->capture_default_str();
  train_rl->add_option("--iterations", rl_cfg.iterations, "PPO updates per member")->check(CLI::PositiveNumber)->capture_default_str();
  train_rl->add_option("--population", rl_cfg.population, "Population size")->check(CLI::PositiveNumber)->capture_default_str();
  train_rl->add_option("--rollout-steps", rl_cfg.rollout_steps, "Steps per update")->check(CLI::PositiveNumber)->capture_default_str();
  train_rl->add_option("--exploit-interval", rl_cfg.exploit_interval, "Updates between exploit steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  train_rl->add_option("--episode-length", rl_cfg.env.episode_length, "Episode cap")->check(CLI::PositiveNumber)->capture_default_str();
  train_rl->add_flag("--stop-on-drop", rl_stop_on_drop, "End episodes at the first onion drop");
  common_flags(train_rl, run);

  // eval-sr
  std::vector<std::string> sr_models, sr_traces;
  std::string sr_layouts = "all", sr_norm = "pooled";
  auto* eval_sr = app.add_subcommand("eval-sr", "Sharing ratio of reward models across layouts");
  eval_sr->add_option("--models", sr_models, "Reward files or training run directories")->required()->check(CLI::ExistingPath);
  eval_sr->add_option("--layouts", sr_layouts, "'all' or a comma list")->capture_default_str();
  eval_sr->add_option("--normalization", sr_norm, "Min-max range: pooled over share and cook states, or per-trajectory")
      ->check(CLI::IsMember({"pooled", "per-trajectory"}))
      ->capture_default_str();
  eval_sr->add_option("--traces", sr_traces,
                      "Dataset manifests to average ART over instead of the canonical trajectories (one layout only)")
      ->check(CLI::ExistingFile);
  common_flags(eval_sr, run);

  // attribute
  std::string at_model, at_layout = "original", at_features;
  auto* attribute = app.add_subcommand("attribute", "Occlusion attribution of reward features");
  attribute->add_option("--model", at_model, "Reward model file")->required()->check(CLI::ExistingFile);
  attribute->add_option("--layout", at_layout, "Layout for the probe states")->check(kLayoutName)->capture_default_str();
  attribute->add_option("--features", at_features, "Comma list of feature names or indices (default: all)");
  common_flags(attribute, run);

  // stats
  std::string st_from = "summary";
  std::vector<std::string> st_groups(4);
  std::vector<std::string> st_trajectories;
  auto* stats = app.add_subcommand("stats", "Effect size and one-way ANOVA");
  stats->add_option("--from", st_from, "Input kind")->check(CLI::IsMember({"summary", "samples", "trajectories"}))->capture_default_str();
  for (int g = 0; g < 4; ++g)
    stats->add_option("--g" + std::to_string(g + 1), st_groups[g],
                      "Group " + std::to_string(g + 1) + ": mean,sd,n (summary) or comma-separated values (samples)");
  stats->add_option("--trajectories", st_trajectories, "Trajectory files (grouped by group label and round)")->check(CLI::ExistingFile);
  common_flags(stats, run);

  // replay
  std::vector<std::string> rp_trajectories;
  std::string rp_layout;
  auto* replay = app.add_subcommand("replay", "Re-simulate logged trajectories and check they match");
  replay->add_option("--trajectories", rp_trajectories, "Trajectory files")->required()->check(CLI::ExistingFile);
  replay->add_option("--layout", rp_layout, "Layout override")->check(kLayoutName);
  common_flags(replay, run);

  // serve
  std::string sv_layout = "original", sv_host = "127.0.0.1", sv_sessions;
  unsigned short sv_port = 8080;
  int sv_tick_ms = kTickPeriodMs;
  std::optional<std::uint64_t> sv_condition_seed;
  double sv_duration = 0.0;
  auto* serve = app.add_subcommand("serve", "Run the play service (HTTP + WebSocket)");
  serve->add_option("--layout", sv_layout, "Layout")->check(kLayoutName)->capture_default_str();
  serve->add_option("--host", sv_host, "Bind address")->capture_default_str();
  serve->add_option("--port", sv_port, "Port (0 picks a free one)")->capture_default_str();
  serve->add_option("--tick-ms", sv_tick_ms, "Tick period")->check(CLI::PositiveNumber)->capture_default_str();
  serve->add_option("--condition-seed", sv_condition_seed, "Seed for the condition draw (default: OS entropy)");
  serve->add_option("--sessions", sv_sessions, "Session log directory (default: <run>/sessions)");
  serve->add_option("--duration", sv_duration, "Stop after this many seconds (0 runs until killed)")->capture_default_str();
  common_flags(serve, run);

  // plot
  std::string pl_csv, pl_x, pl_y, pl_title;
  auto* plot_cmd = app.add_subcommand("plot", "Render a CSV table as SVG");
  plot_cmd->add_option("--csv", pl_csv, "Input CSV")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--x", pl_x, "X column (default: first)");
  plot_cmd->add_option("--y", pl_y, "Comma list of Y columns (default: numeric columns)");
  plot_cmd->add_option("--title", pl_title, "Chart title (default: file name)");
  common_flags(plot_cmd, run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: UsageError: " << msg << '\n';
    return 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    run.subcommand = sub->get_name();
    run.open();

    if (sub == simulate) {
      const Layout layout = resolve_layout(sim_layout);
      const auto episodes = simulate_bot_episodes(layout, demonstrator(sim_bot), sim_episodes, run.seed, sim_horizon,
                                                  BotKind::parse(sim_right));
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        std::ostringstream name;
        name << "trajectories/episode-" << std::setw(4) << std::setfill('0') << i << ".ndjson";
        save_trajectory(run.file(name.str()).string(), episodes[i]);
      }
      run.extra["episodes"] = episodes.size();
      std::cout << "wrote " << episodes.size() << " trajectories to " << (run.dir / "trajectories").string() << '\n';
    } else if (sub == extract) {
      std::ofstream out(run.file("traces.jsonl"));
      std::map<std::string, int> counts;
      for (const auto& path : ex_trajectories) {
        const Trajectory t = load_trajectory(path);
        const Layout layout = layout_for(t, ex_layout);
        const int focal = ex_focal >= 0 ? ex_focal : metrics::focal_seat(t);
        for (const auto& tr : extract_traces(layout, t, focal)) {
          out << json_codec::encode(tr).dump() << '\n';
          ++counts[std::string(to_string(tr.label))];
        }
      }
      for (const auto& [k, v] : counts) run.extra[k] = v;
      std::cout << "traces: Altruistic=" << counts["Altruistic"] << " NonAltruistic=" << counts["NonAltruistic"] << '\n';
    } else if (sub == build) {
      std::vector<Trace> traces;
      for (const auto& p : bd_traces)
        for (auto& t : read_traces_file(p)) traces.push_back(std::move(t));
      for (const auto& p : bd_trajectories) {
        const Trajectory t = load_trajectory(p);
        for (auto& tr : extract_traces(resolve_layout(t.layout_id), t, metrics::focal_seat(t)))
          traces.push_back(std::move(tr));
      }
      if (!bd_bot.empty()) {
        const Layout layout = resolve_layout(bd_layout);
        for (const auto& t : simulate_bot_episodes(layout, demonstrator(bd_bot), bd_episodes, run.seed))
          for (auto& tr : extract_traces(layout, t, 0)) traces.push_back(std::move(tr));
      }
      if (bd_traces.empty() && bd_trajectories.empty() && bd_bot.empty())
        fail(ErrorKind::UsageError, "give --traces, --trajectories or --bot");
      DatasetSelector sel;
      if (bd_label == "altruistic") sel.label = TraceLabel::Altruistic;
      if (bd_label == "non-altruistic") sel.label = TraceLabel::NonAltruistic;
      if (!bd_group.empty()) sel.group = bd_group;
      Dataset d = build_dataset(traces, sel, !bd_no_turns);
      if (!bd_bot.empty() && bd_label == "all" && bd_group.empty()) d.name = bd_bot;
      std::string stem = bd_name.empty() ? d.name : bd_name;
      for (char& c : stem)
        if (c == ':' || c == '/') c = '-';
      run.outputs.push_back(stem + ".json");
      run.outputs.push_back(stem + ".traces.jsonl");
      save_dataset((run.dir / stem).string(), d);
      run.extra["traces"] = d.traces.size();
      std::cout << "dataset " << d.name << ": " << d.traces.size() << " traces -> " << (run.dir / (stem + ".json")).string()
                << '\n';
    } else if (sub == train_irl) {
      const Layout layout = resolve_layout(irl_layout);
      const Dataset d = dataset_for(irl_dataset, layout, irl_episodes, run.seed);
      irl_cfg.seed = run.seed;
      irl_cfg.schedule.decay = irl_decay == "l2" ? irl::DecayMode::L2 : irl::DecayMode::Multiplicative;
      irl_cfg.visitation =
          irl_visitation == "full-episode" ? irl::VisitationMode::FullEpisode : irl::VisitationMode::TraceWindows;
      irl_cfg.run_dir = run.dir.string();
      irl_cfg.validate();
      const auto result = irl::maxent_irl_train(d, layout, irl_cfg, [](const irl::IRLIteration& it) {
        std::cout << "iter " << it.iteration << " grad_norm=" << it.grad_norm << " mse=" << it.mse
                  << " policy_states=" << it.policy_states << '\n';
      });
      for (const char* f : {"config.json", "metrics.csv", "reward.cirlrwd", "policy.cirlpol"}) run.outputs.push_back(f);
      for (int k = irl_cfg.checkpoint_every; irl_cfg.checkpoint_every > 0 && k <= static_cast<int>(result.curve.size());
           k += irl_cfg.checkpoint_every)
        run.outputs.push_back("reward-" + std::to_string(k) + ".cirlrwd");
      run.extra["dataset"] = d.name;
      run.extra["iterations"] = result.curve.size();
      run.extra["stopped_early"] = result.stopped_early;
      run.extra["sr_original"] = metrics::sharing_ratio(result.model, layout).sr;
      std::cout << "reward model -> " << (run.dir / "reward.cirlrwd").string() << '\n';
    } else if (sub == train_rl) {
      const Layout layout = resolve_layout(rl_layout);
      const RewardModel model = load_reward_model(rl_model);
      rl_cfg.seed = run.seed;
      rl_cfg.env.stop_on_drop = rl_stop_on_drop;
      std::vector<rl::PbtRecord> records;
      const auto best = rl::pbt_train(model, layout, rl_cfg, &records);
      rl::save_policy(run.file("policy.cirlpol").string(), best);
      std::ofstream csv(run.file("pbt.csv"));
      rl::write_pbt_csv(csv, records);
      std::vector<std::uint64_t> seeds;
      for (std::uint64_t i = 0; i < 5; ++i) seeds.push_back(splitmix64(run.seed + i));
      const double ret = rl::evaluate_policy(best, layout, model, seeds, rl_cfg.env);
      run.extra["fitness"] = best.fitness;
      run.extra["eval_return"] = ret;
      std::cout << "best fitness " << best.fitness << ", evaluation return " << ret << '\n';
    } else if (sub == eval_sr) {
      const auto models = collect_models(sr_models);
      const auto layouts = resolve_layouts(sr_layouts);
      std::vector<const Layout*> ptrs;
      for (const auto& l : layouts) ptrs.push_back(&l);
      const auto norm = *metrics::parse_normalization(sr_norm);
      metrics::GeneralizationTable table;
      if (sr_traces.empty()) {
        table = metrics::generalization_table(models, ptrs, norm);
      } else {
        if (layouts.size() != 1) fail(ErrorKind::UsageError, "--traces needs exactly one layout in --layouts");
        std::vector<Trace> traces;
        for (const auto& path : sr_traces) {
          auto d = load_dataset(path);
          traces.insert(traces.end(), d.traces.begin(), d.traces.end());
        }
        table = metrics::trace_generalization_table(models, layouts.front(), traces, norm);
      }
      std::ofstream sr(run.file("sr.csv"));
      metrics::write_sr_csv(sr, table);
      std::ofstream art(run.file("art.csv"));
      metrics::write_art_csv(art, table);
      print_table(table);
    } else if (sub == attribute) {
      const Layout layout = resolve_layout(at_layout);
      const RewardModel model = load_reward_model(at_model);
      std::vector<int> features;
      if (at_features.empty()) {
        for (int i = 0; i < kFeatureDim; ++i) features.push_back(i);
      } else {
        std::stringstream ss(at_features);
        std::string item;
        while (std::getline(ss, item, ',')) features.push_back(feature_index(item));
      }
      const auto a = metrics::feature_attribution(model, metrics::default_probes(layout), layout, features);
      std::ofstream out(run.file("attribution.csv"));
      out.precision(17);
      out << "feature,index,raw,scaled\n";
      for (std::size_t k = 0; k < features.size(); ++k) {
        out << kFeatureNames[features[k]] << ',' << features[k] << ',' << a.raw[k] << ',' << a.scaled[k] << '\n';
        std::cout << std::left << std::setw(24) << kFeatureNames[features[k]] << std::fixed << std::setprecision(4)
                  << a.scaled[k] << '\n';
      }
    } else if (sub == stats) {
      ojson out;
      std::cout << std::fixed << std::setprecision(4);
      if (st_from == "trajectories") {
        if (st_trajectories.empty()) fail(ErrorKind::UsageError, "--from trajectories needs --trajectories");
        std::vector<Trajectory> ts;
        for (const auto& p : st_trajectories) ts.push_back(load_trajectory(p));
        const auto g = metrics::behavior_stats(ts);
        std::ofstream csv(run.file("groups.csv"));
        metrics::write_group_csv(csv, g);
        for (const auto& r : g.rows)
          std::cout << metrics::group_key(r) << ": mean=" << r.stats.mean << " sd=" << r.stats.sd << " n=" << r.stats.n
                    << '\n';
        for (const auto& p : g.pairwise) std::cout << "d(" << p.a << ", " << p.b << ") = " << p.d << '\n';
        if (g.has_anova) std::cout << "F = " << g.anova.f << '\n';
      } else {
        std::vector<metrics::Summary> groups;
        for (const auto& s : st_groups) {
          if (s.empty()) continue;
          const auto v = parse_list(s);
          if (st_from == "summary") {
            if (v.size() != 3 || v[2] < 1 || v[2] != std::floor(v[2]))
              fail(ErrorKind::UsageError, "summary groups are mean,sd,n");
            groups.push_back({v[0], v[1], static_cast<std::size_t>(v[2])});
          } else {
            groups.push_back(metrics::summarize(v));
          }
        }
        if (groups.size() < 2) fail(ErrorKind::UsageError, "need at least --g1 and --g2");
        const double d = metrics::cohens_d(groups[0], groups[1]);
        const auto a = metrics::anova(groups);
        out["cohens_d"] = d;
        out["anova"] = {{"f", a.f}, {"df_between", a.df_between}, {"df_within", a.df_within}};
        std::cout << "d = " << d << '\n' << "F = " << a.f << " (df " << a.df_between << ", " << a.df_within << ")\n";
        std::ofstream(run.file("stats.json")) << out.dump(2) << '\n';
      }
    } else if (sub == replay) {
      for (const auto& p : rp_trajectories) {
        const Trajectory t = load_trajectory(p);
        verify_replay(layout_for(t, rp_layout), t);
        std::cout << "ok " << t.id << " steps=" << t.steps.size() << " scores=" << t.final_state.scores[0] << ','
                  << t.final_state.scores[1] << '\n';
      }
      run.extra["verified"] = rp_trajectories.size();
    } else if (sub == serve) {
      service::ServiceConfig cfg;
      cfg.persist_dir = sv_sessions.empty() ? (run.dir / "sessions").string() : sv_sessions;
      cfg.seed = sv_condition_seed;
      cfg.tick_period_ms = sv_tick_ms;
      service::SessionManager manager(resolve_layout(sv_layout), cfg);
      boost::asio::io_context ioc;
      service::Server server(ioc, manager, {boost::asio::ip::make_address(sv_host), sv_port});
      server.start();
      std::cout << "listening on " << sv_host << ':' << server.port() << std::endl;
      boost::asio::signal_set signals(ioc, SIGINT, SIGTERM);
      signals.async_wait([&](const boost::system::error_code&, int) {
        server.stop();
        ioc.stop();
      });
      if (sv_duration > 0) {
        ioc.run_for(std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::duration<double>(sv_duration)));
        server.stop();
      } else {
        ioc.run();
      }
      run.extra["sessions"] = manager.session_ids().size();
    } else if (sub == plot_cmd) {
      const auto table = plot::read_csv(pl_csv);
      std::vector<std::string> ys;
      std::stringstream ss(pl_y);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) ys.push_back(item);
      const std::string stem = fs::path(pl_csv).stem().string();
      std::ofstream(run.file(stem + ".svg")) << plot::chart_from_table(table, pl_title.empty() ? stem : pl_title, pl_x, ys);
      std::cout << "wrote " << (run.dir / (stem + ".svg")).string() << '\n';
    }
    run.write_manifest(sub->config_to_str(true, false));
  } catch (const Error& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << to_string(e.kind()) << ": " << msg << '\n';
    return e.kind() == ErrorKind::UsageError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Unexpected: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
