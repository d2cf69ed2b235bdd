#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cirl/error.hpp"
#include "cirl/features.hpp"
#include "cirl/reward_model.hpp"
#include "cirl/rl/pbt.hpp"
#include "cirl/rl/ppo.hpp"
#include "cirl/traces.hpp"

namespace cirl::irl {

/// Weighted multiset of feature vectors; weights are nonnegative and sum to 1
/// unless the estimate is empty.
template <class Feature>
struct BasicVisitation {
  std::vector<Feature> features;
  std::vector<double> weights;

  bool empty() const { return features.empty(); }
  std::size_t size() const { return features.size(); }

  static BasicVisitation uniform(std::vector<Feature> fs) {
    BasicVisitation v;
    v.features = std::move(fs);
    v.weights.assign(v.features.size(), v.features.empty() ? 0.0 : 1.0 / static_cast<double>(v.features.size()));
    return v;
  }

  Feature mean() const {
    if (features.empty()) fail(ErrorKind::EmptySelection, "mean of an empty visitation estimate");
    Feature m = features.front() * 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) m += weights[i] * features[i];
    return m;
  }
};

using VisitationEstimate = BasicVisitation<FeatureVector>;

inline std::vector<FeatureVector> trace_features(const Layout& layout, const Trace& t) {
  const Featurizer featurize(layout, t.focal);
  std::vector<FeatureVector> out;
  for (const GameState& s : t.states()) out.push_back(featurize(s));
  return out;
}

/// Uniform weight over every state of every trace (each trace contributes its
/// stored states plus the state after the drop).
inline VisitationEstimate expert_visitation(const Dataset& data, const Layout& layout) {
  if (data.traces.empty()) fail(ErrorKind::EmptySelection, "expert visitation over an empty dataset");
  std::vector<FeatureVector> fs;
  for (const Trace& t : data.traces) {
    auto part = trace_features(layout, t);
    fs.insert(fs.end(), part.begin(), part.end());
  }
  return VisitationEstimate::uniform(std::move(fs));
}

/// The trailing pickup still in hand when `t` ends, as an unlabeled trace.
inline std::optional<Trace> open_window(const Trajectory& t, int focal) {
  std::optional<std::size_t> open;
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const auto& st = t.steps[i];
    if (detail::has_event(st, EventKind::OnionPickedUp, focal)) open = i;
    if (detail::has_event(st, EventKind::OnionBridged, focal) || detail::has_event(st, EventKind::OnionPotted, focal))
      open.reset();
  }
  if (!open) return std::nullopt;
  Trace tr;
  tr.parent_id = t.id;
  tr.focal = focal;
  tr.steps.assign(t.steps.begin() + static_cast<std::ptrdiff_t>(*open), t.steps.end());
  tr.end_state = t.final_state;
  return tr;
}

/// Visitation restricted to compacted pickup-to-drop windows of `episodes`,
/// mirroring how demonstration traces are built. With `include_open`, a
/// pickup still in hand at the end of an episode contributes its window too.
inline VisitationEstimate window_visitation(const Layout& layout, const std::vector<Trajectory>& episodes,
                                            int focal = 0, bool include_open = false,
                                            bool turns_are_movement = true) {
  std::vector<FeatureVector> fs;
  auto add = [&](const Trace& tr) {
    auto part = trace_features(layout, compact_trace(tr, turns_are_movement));
    fs.insert(fs.end(), part.begin(), part.end());
  };
  for (const Trajectory& t : episodes) {
    for (const Trace& tr : extract_traces(layout, t, focal)) add(tr);
    if (include_open)
      if (auto tr = open_window(t, focal)) add(*tr);
  }
  return VisitationEstimate::uniform(std::move(fs));
}

/// Visitation over every state of `episodes` (full-episode variant).
inline VisitationEstimate episode_visitation(const Layout& layout, const std::vector<Trajectory>& episodes,
                                             int focal = 0) {
  const Featurizer featurize(layout, focal);
  std::vector<FeatureVector> fs;
  for (const Trajectory& t : episodes)
    for (const GameState& s : t.states()) fs.push_back(featurize(s));
  return VisitationEstimate::uniform(std::move(fs));
}

/// Plays one policy-driven episode and logs it as a trajectory.
inline Trajectory policy_episode(const rl::PolicySnapshot& policy, const Layout& layout, std::uint64_t seed,
                                 const rl::RlEnvConfig& env = {}) {
  const Featurizer featurize(layout, env.focal);
  std::mt19937_64 rng(seed);
  Trajectory t;
  t.layout_id = layout.id();
  t.seed = seed;
  t.id = layout.id() + "-policy-" + std::to_string(seed);
  t.roles[env.focal] = Role{"bot", "policy"};
  t.roles[1 - env.focal] = Role{"bot", env.opponent.name()};
  const GameState start = rl::episode_start(layout, env, rng);
  t.final_state = rl::run_policy(
      policy, layout, featurize, start, env.episode_length, rng, env,
      [&](const GameState& s, Action a, const GameState&, const std::vector<GameEvent>& ev) {
        JointAction joint{Action::Stay, Action::Stay};
        joint[env.focal] = a;
        joint[1 - env.focal] = bot_action(env.opponent, layout, s, 1 - env.focal);
        t.steps.push_back({s, joint, ev});
      });
  return t;
}

enum class VisitationMode { TraceWindows, FullEpisode };

/// Monte-Carlo estimate of the policy's visitation over `budget` episodes.
/// An estimate with no completed window is empty.
inline VisitationEstimate policy_visitation(const rl::PolicySnapshot& policy, const Layout& layout, int budget,
                                            std::uint64_t seed, const rl::RlEnvConfig& env = {},
                                            VisitationMode mode = VisitationMode::TraceWindows,
                                            bool include_open = false) {
  std::vector<Trajectory> episodes;
  for (int e = 0; e < std::max(1, budget); ++e)
    episodes.push_back(policy_episode(policy, layout, splitmix64(seed + static_cast<std::uint64_t>(e)), env));
  return mode == VisitationMode::TraceWindows ? window_visitation(layout, episodes, env.focal, include_open)
                                              : episode_visitation(layout, episodes, env.focal);
}

// ---------------------------------------------------------------- ascent

enum class DecayMode { L2, Multiplicative };

struct AscentSchedule {
  double learning_rate = 0.001;
  double lr_gamma = 0.999;
  double weight_decay = 0.9;
  DecayMode decay = DecayMode::L2;

  double lr_at(int k) const { return learning_rate * std::pow(lr_gamma, static_cast<double>(k)); }
};

/// MaxEnt log-likelihood gradient: expert minus policy expectation of the
/// reward's parameter gradient. An empty policy estimate contributes nothing.
template <class Model, class Feature>
Eigen::VectorXd maxent_gradient(const Model& model, const BasicVisitation<Feature>& expert,
                                const BasicVisitation<Feature>& policy) {
  Eigen::VectorXd g = model.weighted_gradient(expert.features, expert.weights);
  if (policy.empty()) return Eigen::VectorXd::Zero(g.size());
  g -= model.weighted_gradient(policy.features, policy.weights);
  return g;
}

/// Surrogate objective whose gradient is maxent_gradient.
template <class Model, class Feature>
double maxent_objective(const Model& model, const BasicVisitation<Feature>& expert,
                        const BasicVisitation<Feature>& policy) {
  double j = 0.0;
  for (std::size_t i = 0; i < expert.size(); ++i) j += expert.weights[i] * model.forward(expert.features[i]);
  for (std::size_t i = 0; i < policy.size(); ++i) j -= policy.weights[i] * model.forward(policy.features[i]);
  return j;
}

/// One SGD ascent step at outer iteration k.
template <class Model>
void ascent_step(Model& model, const Eigen::VectorXd& gradient, const AscentSchedule& s, int k) {
  Eigen::VectorXd theta = model.parameters();
  const double lr = s.lr_at(k);
  if (s.decay == DecayMode::L2) {
    theta += lr * (gradient - s.weight_decay * theta);
  } else {
    theta = s.weight_decay * theta + lr * gradient;
  }
  if (!theta.allFinite()) fail(ErrorKind::NonFiniteLoss, "reward parameters became non-finite at iteration " + std::to_string(k));
  model.set_parameters(theta);
}

/// Tracks consecutive over-threshold gradient norms.
struct DivergenceGuard {
  double threshold = 1e6;
  int patience = 10;
  int streak = 0;

  void observe(double grad_norm, int k) {
    streak = grad_norm > threshold ? streak + 1 : 0;
    if (streak >= patience)
      fail(ErrorKind::Diverged, "gradient norm above " + std::to_string(threshold) + " for " +
                                    std::to_string(patience) + " iterations (iteration " + std::to_string(k) + ")");
  }
};

// ------------------------------------------------------- trajectory MSE

/// Focal action for a rollout step.
using FocalPolicy = std::function<Action(const GameState&, std::size_t step, std::mt19937_64&)>;

inline FocalPolicy sampling_policy(const rl::PolicySnapshot& policy, const Layout& layout, int focal) {
  auto featurize = std::make_shared<Featurizer>(layout, focal);
  return [&policy, featurize](const GameState& s, std::size_t, std::mt19937_64& rng) {
    const auto probs = rl::action_probabilities(policy, (*featurize)(s));
    return static_cast<Action>(rl::sample_index(probs, rl::unit_uniform(rng)));
  };
}

/// Rolls `policy` from each demo's first state for the demo's length, with
/// the other seat replaying the demo's recorded actions, and averages the
/// per-step squared error between normalized focal positions.
inline double trajectory_mse(const FocalPolicy& policy, const std::vector<Trace>& demos, const Layout& layout,
                             std::uint64_t seed) {
  if (demos.empty()) fail(ErrorKind::EmptySelection, "trajectory_mse needs demonstrations");
  const double sx = layout.width() > 1 ? 1.0 / (layout.width() - 1) : 0.0;
  const double sy = layout.height() > 1 ? 1.0 / (layout.height() - 1) : 0.0;
  double total = 0.0;
  for (std::size_t d = 0; d < demos.size(); ++d) {
    const Trace& demo = demos[d];
    const auto states = demo.states();
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(d)));
    GameState s = states.front();
    const int f = demo.focal;
    double err = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < demo.steps.size() && !s.terminal(); ++i) {
      JointAction joint = demo.steps[i].actions;
      joint[f] = policy(s, i, rng);
      s = step(layout, s, joint).state;
      const Cell a = s.players[f].pos, b = states[i + 1].players[f].pos;
      const double dx = (a.x - b.x) * sx, dy = (a.y - b.y) * sy;
      err += 0.5 * (dx * dx + dy * dy);
      ++n;
    }
    total += n ? err / static_cast<double>(n) : 0.0;
  }
  return total / static_cast<double>(demos.size());
}

inline double trajectory_mse(const rl::PolicySnapshot& policy, const Dataset& demos, const Layout& layout,
                             std::uint64_t seed, int focal = 0) {
  return trajectory_mse(sampling_policy(policy, layout, focal), demos.traces, layout, seed);
}

// ------------------------------------------------------------ deep MaxEnt

enum class GradientScale { PerTrace, Sum, Mean };

inline double gradient_scale_factor(GradientScale s, std::size_t expert_states, std::size_t traces) {
  switch (s) {
    case GradientScale::Sum: return static_cast<double>(expert_states);
    case GradientScale::PerTrace: return static_cast<double>(expert_states) / static_cast<double>(std::max<std::size_t>(1, traces));
    case GradientScale::Mean: return 1.0;
  }
  return 1.0;
}

struct IRLConfig {
  AscentSchedule schedule;
  int iterations = 50;
  /// Policy-visitation episodes per outer iteration.
  int rollout_episodes = 8;
  /// PPO iterations of the persistent population per outer iteration.
  int rl_iterations = 1;
  rl::PbtConfig pbt;
  VisitationMode visitation = VisitationMode::TraceWindows;
  /// Scale of the expert-minus-policy gradient. PerTrace differentiates the
  /// mean per-demonstration log-likelihood (expectation difference times the
  /// mean trace length); Sum uses the total over all expert states; Mean
  /// uses expectations only.
  GradientScale gradient_scale = GradientScale::PerTrace;
  /// Count windows still open when a policy episode ends.
  bool include_open_windows = false;
  /// Start policy episodes from the demonstrations' first states rather
  /// than the layout's initial state.
  bool start_from_traces = true;
  double divergence_threshold = 1e6;
  int divergence_patience = 10;
  bool early_stop = true;
  int plateau_window = 5;
  double plateau_tolerance = 0.01;
  int checkpoint_every = 10;
  std::uint64_t seed = 0;
  /// Init seed for the reward network; defaults to `seed` when unset.
  std::optional<std::uint64_t> init_seed;
  std::string run_dir;

  void validate() const {
    if (!(schedule.learning_rate > 0.0)) fail(ErrorKind::UsageError, "IRL learning rate must be > 0");
    if (!(schedule.lr_gamma > 0.0 && schedule.lr_gamma <= 1.0))
      fail(ErrorKind::UsageError, "IRL lr gamma must lie in (0, 1]");
    if (iterations < 1) fail(ErrorKind::UsageError, "IRL needs at least one outer iteration");
  }
};

struct IRLIteration {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double mse = 0.0;
  double learning_rate = 0.0;
  std::size_t policy_states = 0;
  double policy_fitness = 0.0;
};

struct IRLResult {
  RewardModel model;
  std::vector<IRLIteration> curve;
  rl::PolicySnapshot policy;
  bool stopped_early = false;
};

inline void write_irl_csv(std::ostream& out, const std::vector<IRLIteration>& curve) {
  out << "iteration,objective,grad_norm,mse,learning_rate,policy_states,policy_fitness\n";
  out.precision(17);
  for (const auto& r : curve)
    out << r.iteration << ',' << r.objective << ',' << r.grad_norm << ',' << r.mse << ',' << r.learning_rate << ','
        << r.policy_states << ',' << r.policy_fitness << '\n';
}

inline void write_irl_config(std::ostream& out, const IRLConfig& c, const Dataset& d, const Layout& layout) {
  ojson j;
  j["dataset"] = d.name;
  j["traces"] = d.traces.size();
  j["layout"] = layout.id();
  j["learning_rate"] = c.schedule.learning_rate;
  j["lr_gamma"] = c.schedule.lr_gamma;
  j["weight_decay"] = c.schedule.weight_decay;
  j["weight_decay_mode"] = c.schedule.decay == DecayMode::L2 ? "l2" : "multiplicative";
  j["iterations"] = c.iterations;
  j["rollout_episodes"] = c.rollout_episodes;
  j["rl_iterations"] = c.rl_iterations;
  j["visitation"] = c.visitation == VisitationMode::TraceWindows ? "trace-windows" : "full-episode";
  j["population"] = c.pbt.population;
  j["exploit_interval"] = c.pbt.exploit_interval;
  j["rollout_steps"] = c.pbt.rollout_steps;
  j["episode_length"] = c.pbt.env.episode_length;
  j["early_stop"] = c.early_stop;
  j["seed"] = c.seed;
  j["init_seed"] = c.init_seed.value_or(c.seed);
  out << j.dump(2) << '\n';
}

/// One reward update: scaled expert-minus-policy gradient, divergence check
/// and ascent step. Shared by the deep and tabular trainers.
template <class Model, class Feature>
IRLIteration reward_update(Model& model, const BasicVisitation<Feature>& expert,
                           const BasicVisitation<Feature>& policy, double scale, const AscentSchedule& schedule,
                           DivergenceGuard& guard, int k) {
  IRLIteration it;
  it.iteration = k;
  it.learning_rate = schedule.lr_at(k);
  it.policy_states = policy.size();
  const Eigen::VectorXd g = maxent_gradient(model, expert, policy) * scale;
  it.grad_norm = g.norm();
  it.objective = policy.empty() ? 0.0 : maxent_objective(model, expert, policy);
  if (!std::isfinite(it.grad_norm) || !std::isfinite(it.objective))
    fail(ErrorKind::NonFiniteLoss, "MaxEnt gradient is not finite at iteration " + std::to_string(k));
  guard.observe(it.grad_norm, k);
  ascent_step(model, g, schedule, k);
  return it;
}

/// True when the last `window` iterations improved MSE by less than
/// `tolerance` relative to the value `window` iterations ago.
inline bool mse_plateaued(const std::vector<IRLIteration>& curve, int window, double tolerance) {
  if (window < 1 || curve.size() <= static_cast<std::size_t>(window)) return false;
  const double before = curve[curve.size() - 1 - static_cast<std::size_t>(window)].mse;
  const double now = curve.back().mse;
  if (before <= 0.0) return true;
  return (before - now) / before < tolerance;
}

/// Maximum-entropy deep IRL: alternate policy refresh under the current
/// reward with an SGD step on expert-minus-policy reward gradients.
inline IRLResult maxent_irl_train(const Dataset& dataset, const Layout& layout, const IRLConfig& cfg,
                                  const std::function<void(const IRLIteration&)>& on_iteration = {}) {
  cfg.validate();
  const VisitationEstimate expert = expert_visitation(dataset, layout);
  IRLResult result;
  result.model = init_model(cfg.init_seed.value_or(cfg.seed));
  rl::PbtConfig pbt = cfg.pbt;
  pbt.seed = splitmix64(cfg.seed ^ 0x1b873593ULL);
  if (cfg.start_from_traces && pbt.env.starts.empty())
    for (const Trace& t : dataset.traces) pbt.env.starts.push_back(t.steps.front().state);
  rl::Population population(pbt);
  DivergenceGuard guard{cfg.divergence_threshold, cfg.divergence_patience};

  std::ofstream metrics;
  if (!cfg.run_dir.empty()) {
    std::filesystem::create_directories(cfg.run_dir);
    std::ofstream conf(cfg.run_dir + "/config.json");
    write_irl_config(conf, cfg, dataset, layout);
    metrics.open(cfg.run_dir + "/metrics.csv");
    metrics << "iteration,objective,grad_norm,mse,learning_rate,policy_states,policy_fitness\n";
    metrics.precision(17);
  }

  for (int k = 0; k < cfg.iterations; ++k) {
    for (int r = 0; r < cfg.rl_iterations; ++r) population.train_iteration(result.model, layout);
    const rl::PolicySnapshot& policy = population.best();
    const auto visit_seed = splitmix64(cfg.seed ^ splitmix64(0xabcdefULL + static_cast<std::uint64_t>(k)));
    const VisitationEstimate pv =
        policy_visitation(policy, layout, cfg.rollout_episodes, visit_seed, pbt.env, cfg.visitation,
                          cfg.include_open_windows);

    IRLIteration it = reward_update(result.model, expert, pv,
                                    gradient_scale_factor(cfg.gradient_scale, expert.size(), dataset.traces.size()),
                                    cfg.schedule, guard, k);
    it.policy_fitness = policy.fitness;
    it.mse = trajectory_mse(policy, dataset, layout, visit_seed, pbt.env.focal);
    result.curve.push_back(it);
    if (metrics.is_open())
      metrics << it.iteration << ',' << it.objective << ',' << it.grad_norm << ',' << it.mse << ','
              << it.learning_rate << ',' << it.policy_states << ',' << it.policy_fitness << '\n';
    if (!cfg.run_dir.empty() && cfg.checkpoint_every > 0 && (k + 1) % cfg.checkpoint_every == 0)
      save_reward_model(cfg.run_dir + "/reward-" + std::to_string(k + 1) + ".cirlrwd", result.model);
    if (on_iteration) on_iteration(it);
    if (cfg.early_stop && mse_plateaued(result.curve, cfg.plateau_window, cfg.plateau_tolerance)) {
      result.stopped_early = true;
      break;
    }
  }
  result.policy = population.best();
  if (!cfg.run_dir.empty()) {
    save_reward_model(cfg.run_dir + "/reward.cirlrwd", result.model);
    rl::save_policy(cfg.run_dir + "/policy.cirlpol", result.policy);
  }
  return result;
}

}  // namespace cirl::irl
