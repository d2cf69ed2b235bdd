#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cirl/bots.hpp"
#include "cirl/env/game.hpp"
#include "cirl/error.hpp"
#include "cirl/features.hpp"
#include "cirl/reward_model.hpp"
#include "cirl/rl/mlp.hpp"

namespace cirl::rl {

/// Hyperparameters that population-based training perturbs.
struct PpoHyper {
  double learning_rate = 3e-4;
  double entropy_coef = 0.01;
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  friend bool operator==(const PpoHyper&, const PpoHyper&) = default;
};

/// Fixed optimisation settings.
struct PpoSettings {
  int epochs = 4;
  int minibatch = 256;
  int hidden = 64;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
};

/// Game episodes the focal agent is trained on.
struct RlEnvConfig {
  int episode_length = kHorizon;
  int focal = 0;
  BotKind opponent = BotKind::right_worker();
  /// End the episode when the focal agent drops an onion on the bridge or in
  /// its pot (one share-or-cook decision per episode).
  bool stop_on_drop = false;
  /// Episode start states; empty means the layout's initial state. Each
  /// episode draws one uniformly.
  std::vector<GameState> starts;
};

inline GameState episode_start(const Layout& layout, const RlEnvConfig& env, std::mt19937_64& rng) {
  if (env.starts.empty()) return initial_state(layout);
  const auto n = env.starts.size();
  return env.starts[std::min(n - 1, static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)))];
}

inline bool focal_dropped(const std::vector<GameEvent>& events, int focal) {
  for (const auto& e : events)
    if (e.actor == focal && (e.kind == EventKind::OnionBridged || e.kind == EventKind::OnionPotted)) return true;
  return false;
}

struct PolicySnapshot {
  Mlp actor;
  Mlp critic;
  Adam actor_opt;
  Adam critic_opt;
  PpoHyper hyper;
  PpoSettings settings;
  double fitness = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t updates = 0;
};

inline PolicySnapshot make_policy(std::uint64_t seed, int inputs = kFeatureDim,
                                  int actions = kNumActions, PpoHyper hyper = {},
                                  PpoSettings settings = {}) {
  std::mt19937_64 rng(seed);
  PolicySnapshot p;
  p.actor = Mlp::initialised(inputs, settings.hidden, actions, rng, 0.01);
  // Zero critic head: V is identically 0 until the first update.
  p.critic = Mlp::initialised(inputs, settings.hidden, 1, rng, 0.0);
  p.actor_opt.reset(p.actor.parameter_count());
  p.critic_opt.reset(p.critic.parameter_count());
  p.hyper = hyper;
  p.settings = settings;
  p.seed = seed;
  return p;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

inline Eigen::VectorXd action_probabilities(const PolicySnapshot& p, const Eigen::VectorXd& x) {
  return softmax(p.actor.forward(x));
}

inline int sample_index(const Eigen::VectorXd& probs, double u) {
  double acc = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return static_cast<int>(probs.size()) - 1;
}

struct RolloutBatch {
  Eigen::MatrixXd obs;  // feature dim x steps
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<int> episode_starts;
  std::vector<double> episode_returns;

  std::size_t size() const { return actions.size(); }
};

/// GAE over complete episodes; the step after an episode's last has value 0.
inline void compute_gae(RolloutBatch& b, double gamma, double lambda) {
  const std::size_t n = b.size();
  b.advantages.assign(n, 0.0);
  b.returns.assign(n, 0.0);
  for (std::size_t e = 0; e < b.episode_starts.size(); ++e) {
    const std::size_t begin = static_cast<std::size_t>(b.episode_starts[e]);
    const std::size_t end =
        e + 1 < b.episode_starts.size() ? static_cast<std::size_t>(b.episode_starts[e + 1]) : n;
    double gae = 0.0;
    for (std::size_t i = end; i-- > begin;) {
      const double next_value = i + 1 < end ? b.values[i + 1] : 0.0;
      const double delta = b.rewards[i] + gamma * next_value - b.values[i];
      gae = delta + gamma * lambda * gae;
      b.advantages[i] = gae;
      b.returns[i] = gae + b.values[i];
    }
  }
}

/// Per-step observer for policy-driven episodes: (state before, focal
/// action, successor state, events).
using StepObserver =
    std::function<void(const GameState&, Action, const GameState&, const std::vector<GameEvent>&)>;

/// Runs the policy for the focal seat from `start` for at most `steps` ticks
/// (or until the horizon), opponent scripted. Actions are sampled unless
/// `greedy` is set.
inline GameState run_policy(const PolicySnapshot& policy, const Layout& layout,
                            const Featurizer& featurize, const GameState& start, int steps,
                            std::mt19937_64& rng, const RlEnvConfig& env,
                            const StepObserver& observe, bool greedy = false) {
  GameState s = start;
  for (int t = 0; t < steps && !s.terminal(); ++t) {
    const FeatureVector phi = featurize(s);
    const Eigen::VectorXd probs = action_probabilities(policy, phi);
    int a_idx = 0;
    if (greedy) probs.maxCoeff(&a_idx);
    else a_idx = sample_index(probs, unit_uniform(rng));
    const Action a = static_cast<Action>(a_idx);
    JointAction joint{Action::Stay, Action::Stay};
    joint[env.focal] = a;
    joint[1 - env.focal] = bot_action(env.opponent, layout, s, 1 - env.focal);
    auto r = step(layout, s, joint);
    if (observe) observe(s, a, r.state, r.events);
    const bool done = env.stop_on_drop && focal_dropped(r.events, env.focal);
    s = std::move(r.state);
    if (done) break;
  }
  return s;
}

/// On-policy collection: whole episodes of at most `env.episode_length` ticks
/// until at least `n_steps` transitions are stored. Rewards come from the reward
/// model evaluated on the post-action state.
inline RolloutBatch collect_rollouts(const PolicySnapshot& policy, const Layout& layout,
                                     const RewardModel& reward, int n_steps, std::uint64_t seed,
                                     const RlEnvConfig& env = {}) {
  const Featurizer featurize(layout, env.focal);
  std::mt19937_64 rng(seed);
  RolloutBatch b;
  std::vector<FeatureVector> obs;
  const int episode_length = std::max(1, env.episode_length);
  while (static_cast<int>(b.size()) < std::max(1, n_steps)) {
    b.episode_starts.push_back(static_cast<int>(b.size()));
    GameState s = episode_start(layout, env, rng);
    double ret = 0.0;
    bool done = false;
    for (int t = 0; t < episode_length && !s.terminal() && !done; ++t) {
      const FeatureVector phi = featurize(s);
      const Eigen::VectorXd logits = policy.actor.forward(phi);
      const Eigen::VectorXd probs = softmax(logits);
      const int a_idx = sample_index(probs, unit_uniform(rng));
      JointAction joint{Action::Stay, Action::Stay};
      joint[env.focal] = static_cast<Action>(a_idx);
      joint[1 - env.focal] = bot_action(env.opponent, layout, s, 1 - env.focal);
      auto r = step(layout, s, joint);
      const double rew = reward.forward(featurize(r.state));
      obs.push_back(phi);
      b.actions.push_back(a_idx);
      b.log_probs.push_back(std::log(std::max(probs[a_idx], 1e-300)));
      b.values.push_back(policy.critic.forward(phi)[0]);
      b.rewards.push_back(rew);
      ret += rew;
      done = env.stop_on_drop && focal_dropped(r.events, env.focal);
      s = std::move(r.state);
    }
    b.episode_returns.push_back(ret);
  }
  b.obs.resize(kFeatureDim, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) b.obs.col(static_cast<Eigen::Index>(i)) = obs[i];
  compute_gae(b, policy.hyper.gamma, policy.hyper.gae_lambda);
  return b;
}

/// d(clipped surrogate)/d(log pi) for one sample, before averaging: the
/// objective min(r A, clip(r, 1-eps, 1+eps) A) is flat where the clipped
/// branch is active.
inline double surrogate_logprob_gradient(double ratio, double advantage, double epsilon) {
  if (advantage >= 0.0 && ratio > 1.0 + epsilon) return 0.0;
  if (advantage < 0.0 && ratio < 1.0 - epsilon) return 0.0;
  return ratio * advantage;
}

inline double mean_or_zero(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline void clip_norm(Eigen::VectorXd& g, double max_norm) {
  const double n = g.norm();
  if (max_norm > 0.0 && n > max_norm) g *= max_norm / n;
}

/// Clipped-surrogate PPO: `settings.epochs` passes over shuffled minibatches.
/// Fitness is refreshed to the mean return of the batch's episodes.
inline PolicySnapshot ppo_update(const PolicySnapshot& policy, const RolloutBatch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) fail(ErrorKind::NonFiniteLoss, "ppo_update called with an empty batch");
  PolicySnapshot out = policy;
  const PpoHyper& h = policy.hyper;
  const PpoSettings& cfg = policy.settings;
  std::mt19937_64 rng(splitmix64(policy.seed ^ splitmix64(policy.updates + 1)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t mb = static_cast<std::size_t>(std::max(1, cfg.minibatch));
  const int n_actions = out.actor.outputs();
  const Eigen::Index dim = batch.obs.rows();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t end = std::min(n, start + mb);
      const auto B = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd x(dim, B);
      Eigen::VectorXd adv(B), old_logp(B), ret(B);
      std::vector<int> acts(static_cast<std::size_t>(B));
      for (Eigen::Index k = 0; k < B; ++k) {
        const std::size_t idx = order[start + static_cast<std::size_t>(k)];
        x.col(k) = batch.obs.col(static_cast<Eigen::Index>(idx));
        adv[k] = batch.advantages[idx];
        old_logp[k] = batch.log_probs[idx];
        ret[k] = batch.returns[idx];
        acts[static_cast<std::size_t>(k)] = batch.actions[idx];
      }
      if (cfg.normalize_advantages && B > 1) {
        const double mean = adv.mean();
        const double sd = std::sqrt((adv.array() - mean).square().sum() / static_cast<double>(B));
        if (sd > 1e-8) adv = ((adv.array() - mean) / sd).matrix();
        else adv.setZero();
      }

      Eigen::MatrixXd hidden;
      const Eigen::MatrixXd logits = out.actor.forward_batch(x, hidden);
      Eigen::MatrixXd d_logits(n_actions, B);
      double loss = 0.0;
      for (Eigen::Index k = 0; k < B; ++k) {
        const Eigen::VectorXd p = softmax(logits.col(k));
        const Eigen::VectorXd logp = p.array().max(1e-300).log().matrix();
        const int a = acts[static_cast<std::size_t>(k)];
        const double ratio = std::exp(logp[a] - old_logp[k]);
        const double clipped = std::clamp(ratio, 1.0 - h.clip_epsilon, 1.0 + h.clip_epsilon);
        const double entropy = -(p.array() * logp.array()).sum();
        loss += -std::min(ratio * adv[k], clipped * adv[k]) - h.entropy_coef * entropy;
        const double dlogp = surrogate_logprob_gradient(ratio, adv[k], h.clip_epsilon);
        // Loss gradient w.r.t. logits: -dlogp * (onehot - p) + c * p * (log p + H).
        Eigen::VectorXd g = dlogp * p;
        g[a] -= dlogp;
        g += h.entropy_coef * (p.array() * (logp.array() + entropy)).matrix();
        d_logits.col(k) = g / static_cast<double>(B);
      }
      Eigen::MatrixXd v_hidden;
      const Eigen::MatrixXd values = out.critic.forward_batch(x, v_hidden);
      const Eigen::RowVectorXd v_err = values.row(0) - ret.transpose();
      loss += cfg.value_coef * v_err.squaredNorm() / static_cast<double>(B);
      if (!std::isfinite(loss))
        fail(ErrorKind::NonFiniteLoss, "PPO loss is not finite at epoch " + std::to_string(epoch) +
                                           ", minibatch offset " + std::to_string(start));
      const Eigen::MatrixXd d_values = (2.0 * cfg.value_coef / static_cast<double>(B)) * v_err;

      Eigen::VectorXd g_actor = out.actor.backward_batch(x, hidden, d_logits);
      Eigen::VectorXd g_critic = out.critic.backward_batch(x, v_hidden, d_values);
      if (!g_actor.allFinite() || !g_critic.allFinite())
        fail(ErrorKind::NonFiniteLoss, "PPO gradient is not finite");
      clip_norm(g_actor, cfg.max_grad_norm);
      clip_norm(g_critic, cfg.max_grad_norm);
      out.actor_opt.step(out.actor.parameters(), g_actor, h.learning_rate);
      out.critic_opt.step(out.critic.parameters(), g_critic, h.learning_rate);
    }
  }
  ++out.updates;
  out.fitness = mean_or_zero(batch.episode_returns);
  return out;
}

/// Mean undiscounted return over one episode per seed.
inline double evaluate_policy(const PolicySnapshot& policy, const Layout& layout,
                              const RewardModel& reward, const std::vector<std::uint64_t>& seeds,
                              const RlEnvConfig& env = {}) {
  const Featurizer featurize(layout, env.focal);
  double total = 0.0;
  for (std::uint64_t seed : seeds) {
    std::mt19937_64 rng(seed);
    double ret = 0.0;
    const GameState start = episode_start(layout, env, rng);
    run_policy(policy, layout, featurize, start, env.episode_length, rng, env,
               [&](const GameState&, Action, const GameState& next, const std::vector<GameEvent>&) {
                 ret += reward.forward(featurize(next));
               });
    total += ret;
  }
  return seeds.empty() ? 0.0 : total / static_cast<double>(seeds.size());
}

}  // namespace cirl::rl
