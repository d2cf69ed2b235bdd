#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "cirl/irl/maxent.hpp"

namespace cirl::irl {

/// Small deterministic MDP with per-state rewards and a fixed horizon.
/// Episodes visit horizon+1 states s_0..s_T.
struct TabularMdp {
  int states = 0;
  int actions = 0;
  std::vector<std::vector<int>> next;  // next[s][a]
  Eigen::VectorXd start;               // initial distribution
  int horizon = 0;
};

/// Chain of n states; actions move left, stay or move right and clamp at the
/// ends. Uniform start.
inline TabularMdp chain_mdp(int n, int horizon) {
  TabularMdp m;
  m.states = n;
  m.actions = 3;
  m.horizon = horizon;
  m.next.resize(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) m.next[s] = {std::max(0, s - 1), s, std::min(n - 1, s + 1)};
  m.start = Eigen::VectorXd::Constant(n, 1.0 / n);
  return m;
}

/// Time-indexed stochastic policy: probs[t](s, a) for t in [0, horizon).
struct TabularPolicy {
  std::vector<Eigen::MatrixXd> probs;
};

/// Finite-horizon soft value iteration: V_T = r, Q_t(s,a) = r(s) +
/// V_{t+1}(next(s,a)), V_t = logsumexp_a Q_t, pi_t = exp(Q_t - V_t).
inline TabularPolicy soft_value_iteration(const TabularMdp& m, const Eigen::VectorXd& reward) {
  TabularPolicy pi;
  pi.probs.assign(static_cast<std::size_t>(m.horizon), Eigen::MatrixXd(m.states, m.actions));
  Eigen::VectorXd v = reward;
  for (int t = m.horizon - 1; t >= 0; --t) {
    Eigen::VectorXd vt(m.states);
    for (int s = 0; s < m.states; ++s) {
      Eigen::VectorXd q(m.actions);
      for (int a = 0; a < m.actions; ++a) q[a] = reward[s] + v[m.next[s][a]];
      const double mx = q.maxCoeff();
      const double lse = mx + std::log((q.array() - mx).exp().sum());
      vt[s] = lse;
      for (int a = 0; a < m.actions; ++a) pi.probs[t](s, a) = std::exp(q[a] - lse);
    }
    v = vt;
  }
  return pi;
}

/// Exact state visitation of `pi`, averaged over the horizon+1 visited
/// states (sums to 1).
inline Eigen::VectorXd exact_visitation(const TabularMdp& m, const TabularPolicy& pi) {
  Eigen::VectorXd d = m.start;
  Eigen::VectorXd total = d;
  for (int t = 0; t < m.horizon; ++t) {
    Eigen::VectorXd nd = Eigen::VectorXd::Zero(m.states);
    for (int s = 0; s < m.states; ++s)
      for (int a = 0; a < m.actions; ++a) nd[m.next[s][a]] += d[s] * pi.probs[t](s, a);
    d = nd;
    total += d;
  }
  return total / static_cast<double>(m.horizon + 1);
}

inline int sample_from(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

/// Samples state sequences s_0..s_T under `pi`.
inline std::vector<std::vector<int>> sample_episodes(const TabularMdp& m, const TabularPolicy& pi, int episodes,
                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    std::vector<int> ep{sample_from(m.start, rng)};
    for (int t = 0; t < m.horizon; ++t) {
      const int s = ep.back();
      ep.push_back(m.next[s][sample_from(pi.probs[t].row(s).transpose(), rng)]);
    }
    out.push_back(std::move(ep));
  }
  return out;
}

inline Eigen::VectorXd one_hot(int n, int i) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  v[i] = 1.0;
  return v;
}

using TabularVisitation = BasicVisitation<Eigen::VectorXd>;

/// Uniform weight over every visited state of every episode.
inline TabularVisitation tabular_visitation(int states, const std::vector<std::vector<int>>& episodes) {
  std::vector<Eigen::VectorXd> fs;
  for (const auto& ep : episodes)
    for (int s : ep) fs.push_back(one_hot(states, s));
  return TabularVisitation::uniform(std::move(fs));
}

/// Visitation given directly as a distribution over states.
inline TabularVisitation distribution_visitation(const Eigen::VectorXd& d) {
  TabularVisitation v;
  for (Eigen::Index s = 0; s < d.size(); ++s) {
    v.features.push_back(one_hot(static_cast<int>(d.size()), static_cast<int>(s)));
    v.weights.push_back(d[s]);
  }
  return v;
}

/// Linear reward on one-hot state features: one parameter per state.
class TabularReward {
 public:
  explicit TabularReward(int states = 0) : theta_(Eigen::VectorXd::Zero(states)) {}

  double forward(const Eigen::VectorXd& f) const { return theta_.dot(f); }
  Eigen::VectorXd weighted_gradient(const std::vector<Eigen::VectorXd>& fs, const std::vector<double>& ws) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(theta_.size());
    for (std::size_t i = 0; i < fs.size(); ++i) g += ws[i] * fs[i];
    return g;
  }
  const Eigen::VectorXd& parameters() const { return theta_; }
  void set_parameters(const Eigen::VectorXd& p) { theta_ = p; }
  /// Reward of every state.
  const Eigen::VectorXd& rewards() const { return theta_; }

 private:
  Eigen::VectorXd theta_;
};

struct TabularIRLConfig {
  AscentSchedule schedule{0.1, 1.0, 0.01, DecayMode::L2};
  int iterations = 200;
  int rollout_episodes = 200;
  std::uint64_t seed = 0;
};

struct TabularIRLResult {
  TabularReward model;
  std::vector<IRLIteration> curve;
};

/// Exact MaxEnt gradient per demonstration under reward `theta`:
/// (T+1) * (expert state frequency - soft-optimal visitation).
inline Eigen::VectorXd exact_maxent_gradient(const TabularMdp& m, const std::vector<std::vector<int>>& demos,
                                             const Eigen::VectorXd& theta) {
  const Eigen::VectorXd expert = tabular_visitation(m.states, demos).mean();
  const Eigen::VectorXd policy = exact_visitation(m, soft_value_iteration(m, theta));
  return static_cast<double>(m.horizon + 1) * (expert - policy);
}

/// MaxEnt IRL on a tabular MDP: exact soft planning stands in for the RL
/// step; the policy term is a Monte-Carlo visitation estimate, as in the
/// deep trainer.
inline TabularIRLResult maxent_irl_train(const TabularMdp& m, const std::vector<std::vector<int>>& demos,
                                         const TabularIRLConfig& cfg) {
  if (demos.empty()) fail(ErrorKind::EmptySelection, "no demonstrations");
  const TabularVisitation expert = tabular_visitation(m.states, demos);
  TabularIRLResult result;
  result.model = TabularReward(m.states);
  DivergenceGuard guard;
  for (int k = 0; k < cfg.iterations; ++k) {
    const TabularPolicy pi = soft_value_iteration(m, result.model.rewards());
    const auto episodes = sample_episodes(m, pi, cfg.rollout_episodes, splitmix64(cfg.seed + static_cast<std::uint64_t>(k)));
    const TabularVisitation pv = tabular_visitation(m.states, episodes);
    result.curve.push_back(reward_update(result.model, expert, pv,
                                         gradient_scale_factor(GradientScale::PerTrace, expert.size(), demos.size()),
                                         cfg.schedule, guard, k));
  }
  return result;
}

}  // namespace cirl::irl
