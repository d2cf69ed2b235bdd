#pragma once

#include <algorithm>
#include <cstdint>
#include <future>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "cirl/rl/ppo.hpp"

namespace cirl::rl {

struct PbtConfig {
  int population = 4;
  int exploit_interval = 10;
  int iterations = 200;
  int rollout_steps = 2048;
  bool exploit = true;
  bool parallel = true;
  std::uint64_t seed = 0;
  PpoHyper hyper;
  PpoSettings settings;
  RlEnvConfig env;
  /// Optional per-member starting hyperparameters (overrides `hyper`).
  std::vector<PpoHyper> member_hyper;
};

struct PbtRecord {
  int iteration = 0;
  int member = 0;
  double fitness = 0.0;
  PpoHyper hyper;
};

inline std::uint64_t member_seed(std::uint64_t base, int member) {
  return splitmix64(base ^ splitmix64(0x5eedULL + static_cast<std::uint64_t>(member)));
}

inline std::uint64_t rollout_seed(std::uint64_t member_seed_value, std::uint64_t iteration) {
  return splitmix64(member_seed_value + 0x9e3779b97f4a7c15ULL * (iteration + 1));
}

inline double perturb_factor(std::mt19937_64& rng) { return unit_uniform(rng) < 0.5 ? 0.8 : 1.25; }

inline PpoHyper perturb(PpoHyper h, std::mt19937_64& rng) {
  h.learning_rate *= perturb_factor(rng);
  h.entropy_coef *= perturb_factor(rng);
  h.clip_epsilon = std::min(h.clip_epsilon * perturb_factor(rng), 0.9);
  h.gamma = std::min(h.gamma * perturb_factor(rng), 0.999);
  h.gae_lambda = std::min(h.gae_lambda * perturb_factor(rng), 0.999);
  return h;
}

/// A set of PPO learners with truncation-selection exploit and multiplicative
/// explore. Members keep their own rollout seed streams.
class Population {
 public:
  explicit Population(PbtConfig cfg) : cfg_(std::move(cfg)), rng_(splitmix64(cfg_.seed ^ 0xb7e151628aed2a6bULL)) {
    const int p = std::max(1, cfg_.population);
    members_.reserve(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) {
      const PpoHyper h =
          static_cast<std::size_t>(i) < cfg_.member_hyper.size() ? cfg_.member_hyper[i] : cfg_.hyper;
      members_.push_back(make_policy(member_seed(cfg_.seed, i), kFeatureDim, kNumActions, h, cfg_.settings));
    }
  }

  const std::vector<PolicySnapshot>& members() const { return members_; }
  std::vector<PolicySnapshot>& members() { return members_; }
  const std::vector<PbtRecord>& records() const { return records_; }
  int iteration() const { return iteration_; }
  const PbtConfig& config() const { return cfg_; }

  /// One PPO update for every member, followed by exploit/explore when due.
  void train_iteration(const RewardModel& reward, const Layout& layout) {
    auto update = [&](std::size_t i) {
      PolicySnapshot& m = members_[i];
      const auto batch = collect_rollouts(m, layout, reward, cfg_.rollout_steps,
                                          rollout_seed(m.seed, m.updates), cfg_.env);
      m = ppo_update(m, batch);
    };
    if (cfg_.parallel && members_.size() > 1) {
      std::vector<std::future<void>> jobs;
      for (std::size_t i = 0; i < members_.size(); ++i) jobs.push_back(std::async(std::launch::async, update, i));
      for (auto& j : jobs) j.get();
    } else {
      for (std::size_t i = 0; i < members_.size(); ++i) update(i);
    }
    for (std::size_t i = 0; i < members_.size(); ++i)
      records_.push_back({iteration_, static_cast<int>(i), members_[i].fitness, members_[i].hyper});
    ++iteration_;
    if (cfg_.exploit && cfg_.exploit_interval > 0 && members_.size() > 1 &&
        iteration_ % cfg_.exploit_interval == 0)
      exploit_explore();
  }

  /// Bottom quarter (at least one) copies a uniformly chosen top-quarter
  /// member, then perturbs its hyperparameters. Adam moments restart.
  void exploit_explore() {
    const std::size_t n = members_.size();
    const std::size_t q = std::max<std::size_t>(1, n / 4);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return members_[a].fitness > members_[b].fitness;
    });
    for (std::size_t k = 0; k < q; ++k) {
      const std::size_t loser = order[n - 1 - k];
      const std::size_t pick = std::min(q - 1, static_cast<std::size_t>(unit_uniform(rng_) * static_cast<double>(q)));
      const std::size_t winner = order[pick];
      if (loser == winner) continue;
      PolicySnapshot& dst = members_[loser];
      const PolicySnapshot& src = members_[winner];
      dst.actor = src.actor;
      dst.critic = src.critic;
      dst.actor_opt.reset(dst.actor.parameter_count());
      dst.critic_opt.reset(dst.critic.parameter_count());
      dst.hyper = perturb(src.hyper, rng_);
      dst.fitness = src.fitness;
    }
  }

  std::size_t best_index() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < members_.size(); ++i)
      if (members_[i].fitness > members_[best].fitness) best = i;
    return best;
  }
  const PolicySnapshot& best() const { return members_[best_index()]; }

 private:
  PbtConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<PolicySnapshot> members_;
  std::vector<PbtRecord> records_;
  int iteration_ = 0;
};

/// Trains a population for `cfg.iterations` and returns the fittest member.
inline PolicySnapshot pbt_train(const RewardModel& reward, const Layout& layout, const PbtConfig& cfg,
                                std::vector<PbtRecord>* log = nullptr) {
  Population pop(cfg);
  for (int i = 0; i < cfg.iterations; ++i) pop.train_iteration(reward, layout);
  if (log) *log = pop.records();
  return pop.best();
}

inline void write_pbt_csv(std::ostream& out, const std::vector<PbtRecord>& records) {
  out << "iteration,member,fitness,learning_rate,entropy_coef,clip_epsilon,gamma,gae_lambda\n";
  out.precision(17);
  for (const auto& r : records)
    out << r.iteration << ',' << r.member << ',' << r.fitness << ',' << r.hyper.learning_rate << ','
        << r.hyper.entropy_coef << ',' << r.hyper.clip_epsilon << ',' << r.hyper.gamma << ','
        << r.hyper.gae_lambda << '\n';
}

// ------------------------------------------------------------ policy file
//
// Same numeric conventions as the reward model file:
//   8 bytes  magic "CIRLPOL1"
//   u32      format version (1)
//   u32      contract length, contract bytes
//   u32 x3   actor shape (in, hidden, out); u32 x3 critic shape
//   f64 x5   learning rate, entropy coef, clip epsilon, gamma, lambda
//   f64      fitness
//   f64 x N  actor parameters, then critic parameters

inline constexpr char kPolicyMagic[9] = "CIRLPOL1";
inline constexpr std::uint32_t kPolicyFormatVersion = 1;

inline void write_policy(std::ostream& out, const PolicySnapshot& p) {
  out.write(kPolicyMagic, 8);
  binio::put_u32(out, kPolicyFormatVersion);
  const std::string contract = feature_order_contract();
  binio::put_u32(out, static_cast<std::uint32_t>(contract.size()));
  out.write(contract.data(), static_cast<std::streamsize>(contract.size()));
  for (const Mlp* m : {&p.actor, &p.critic}) {
    binio::put_u32(out, static_cast<std::uint32_t>(m->inputs()));
    binio::put_u32(out, static_cast<std::uint32_t>(m->hidden()));
    binio::put_u32(out, static_cast<std::uint32_t>(m->outputs()));
  }
  for (double v : {p.hyper.learning_rate, p.hyper.entropy_coef, p.hyper.clip_epsilon, p.hyper.gamma,
                   p.hyper.gae_lambda, p.fitness})
    binio::put_f64(out, v);
  for (const Mlp* m : {&p.actor, &p.critic})
    for (Eigen::Index i = 0; i < m->parameters().size(); ++i) binio::put_f64(out, m->parameters()[i]);
}

inline PolicySnapshot read_policy(std::istream& in) {
  binio::expect_magic(in, kPolicyMagic);
  if (binio::get_u32(in) != kPolicyFormatVersion) fail(ErrorKind::FormatError, "unsupported policy version");
  const std::uint32_t len = binio::get_u32(in);
  if (len > 4096) fail(ErrorKind::FormatError, "feature contract too long");
  std::string contract(len, '\0');
  if (!in.read(contract.data(), len)) fail(ErrorKind::FormatError, "truncated file");
  if (contract != feature_order_contract())
    fail(ErrorKind::FormatError, "policy feature order does not match this featurizer");
  int shape[6];
  for (int& s : shape) {
    s = static_cast<int>(binio::get_u32(in));
    if (s <= 0 || s > 4096) fail(ErrorKind::FormatError, "bad policy shape");
  }
  if (shape[0] != kFeatureDim || shape[2] != kNumActions || shape[3] != kFeatureDim || shape[5] != 1)
    fail(ErrorKind::FormatError, "policy shape mismatch");
  PolicySnapshot p;
  p.hyper.learning_rate = binio::get_f64(in);
  p.hyper.entropy_coef = binio::get_f64(in);
  p.hyper.clip_epsilon = binio::get_f64(in);
  p.hyper.gamma = binio::get_f64(in);
  p.hyper.gae_lambda = binio::get_f64(in);
  p.fitness = binio::get_f64(in);
  p.actor = Mlp(shape[0], shape[1], shape[2]);
  p.critic = Mlp(shape[3], shape[4], shape[5]);
  for (Mlp* m : {&p.actor, &p.critic})
    for (Eigen::Index i = 0; i < m->parameters().size(); ++i) m->parameters()[i] = binio::get_f64(in);
  if (!p.actor.parameters().allFinite() || !p.critic.parameters().allFinite())
    fail(ErrorKind::NonFiniteParameters, "policy file holds non-finite parameters");
  p.settings.hidden = shape[1];
  p.actor_opt.reset(p.actor.parameter_count());
  p.critic_opt.reset(p.critic.parameter_count());
  return p;
}

inline void save_policy(const std::string& path, const PolicySnapshot& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::FormatError, "cannot write " + path);
  write_policy(out, p);
}

inline PolicySnapshot load_policy(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  return read_policy(in);
}

}  // namespace cirl::rl
