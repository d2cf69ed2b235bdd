#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "cirl/pipeline.hpp"
#include "cirl/rl/pbt.hpp"
#include "cirl/rl/ppo.hpp"

using namespace cirl;
using namespace cirl::rl;

namespace {

// Reward 1 while the focal agent faces north, else 0.
RewardModel north_reward() {
  RewardModel m;
  RewardModel::W1Type w1 = RewardModel::W1Type::Zero();
  w1(0, feat::kOrientation + 0) = 1.0;
  RewardModel::HiddenVec w2 = RewardModel::HiddenVec::Zero();
  w2[0] = 1.0;
  m.set_w1(w1);
  m.set_w2(w2);
  return m;
}

// One-state bandit batch: action 0 pays 1, action 1 pays 0.
RolloutBatch bandit_batch(const PolicySnapshot& p, int n, std::mt19937_64& rng) {
  RolloutBatch b;
  b.obs = Eigen::MatrixXd::Ones(1, n);
  const Eigen::VectorXd probs = action_probabilities(p, Eigen::VectorXd::Ones(1));
  for (int i = 0; i < n; ++i) {
    const int a = sample_index(probs, unit_uniform(rng));
    b.actions.push_back(a);
    b.log_probs.push_back(std::log(probs[a]));
    b.rewards.push_back(a == 0 ? 1.0 : 0.0);
    b.values.push_back(p.critic.forward(Eigen::VectorXd::Ones(1))[0]);
    b.episode_starts.push_back(i);
    b.episode_returns.push_back(b.rewards.back());
  }
  compute_gae(b, p.hyper.gamma, p.hyper.gae_lambda);
  return b;
}

}  // namespace

TEST(Rollouts, SupportCoverage) {
  const Layout L = resolve_layout("original");
  const auto p = make_policy(1);
  const auto b = collect_rollouts(p, L, init_model(2), 10000, 3);
  ASSERT_GE(b.size(), 10000u);
  std::array<int, kNumActions> counts{};
  for (int a : b.actions) ++counts[static_cast<std::size_t>(a)];
  for (int c : counts) EXPECT_GT(c, 0);
}

TEST(Rollouts, DeterministicPerSeed) {
  const Layout L = resolve_layout("original");
  const auto p = make_policy(1);
  const auto a = collect_rollouts(p, L, init_model(2), 500, 9);
  const auto b = collect_rollouts(p, L, init_model(2), 500, 9);
  EXPECT_EQ(a.actions, b.actions);
  EXPECT_EQ(a.rewards, b.rewards);
  EXPECT_EQ(a.advantages, b.advantages);
  EXPECT_EQ(a.obs, b.obs);
  const auto c = collect_rollouts(p, L, init_model(2), 500, 10);
  EXPECT_NE(a.actions, c.actions);
}

TEST(Rollouts, ZeroRewardZeroAdvantage) {
  const Layout L = resolve_layout("original");
  const auto b = collect_rollouts(make_policy(4), L, RewardModel{}, 2000, 1);
  for (double a : b.advantages) ASSERT_LT(std::abs(a), 1e-9);
}

TEST(Rollouts, EpisodesRespectLengthAndDrop) {
  const Layout L = resolve_layout("original");
  RlEnvConfig env;
  env.episode_length = 30;
  const auto b = collect_rollouts(make_policy(4), L, RewardModel{}, 300, 1, env);
  for (std::size_t e = 0; e < b.episode_starts.size(); ++e) {
    const int end = e + 1 < b.episode_starts.size() ? b.episode_starts[e + 1] : static_cast<int>(b.size());
    EXPECT_LE(end - b.episode_starts[e], 30);
  }
}

TEST(Gae, HandComputed) {
  RolloutBatch b;
  b.actions = {0, 0, 0};
  b.rewards = {1.0, 0.0, 2.0};
  b.values = {0.5, 0.25, 1.0};
  b.episode_starts = {0, 2};
  compute_gae(b, 0.9, 0.5);
  // Episode 1: d1 = 0 - 0.25 = -0.25; d0 = 1 + 0.9*0.25 - 0.5 = 0.725.
  EXPECT_DOUBLE_EQ(b.advantages[1], -0.25);
  EXPECT_DOUBLE_EQ(b.advantages[0], 0.725 + 0.45 * -0.25);
  // Episode 2 is a single step.
  EXPECT_DOUBLE_EQ(b.advantages[2], 1.0);
  EXPECT_DOUBLE_EQ(b.returns[2], 2.0);
}

TEST(PpoUpdate, ZeroAdvantagesLeaveActorUnchanged) {
  const Layout L = resolve_layout("original");
  PpoHyper h;
  h.entropy_coef = 0.0;
  const auto p = make_policy(5, kFeatureDim, kNumActions, h);
  const auto b = collect_rollouts(p, L, RewardModel{}, 600, 2);
  const auto q = ppo_update(p, b);
  EXPECT_EQ(q.actor, p.actor);

  PpoHyper he;
  he.entropy_coef = 0.05;
  const auto pe = make_policy(5, kFeatureDim, kNumActions, he);
  EXPECT_FALSE(ppo_update(pe, b).actor == pe.actor);
}

TEST(PpoUpdate, BanditProbabilityRisesMonotonically) {
  // No entropy bonus: an all-A batch has zero normalised advantage and the
  // bonus alone would pull back toward uniform.
  PpoHyper h;
  h.learning_rate = 0.002;
  h.entropy_coef = 0.0;
  h.gamma = 1.0;
  h.gae_lambda = 1.0;
  PpoSettings s;
  s.minibatch = 64;
  auto p = make_policy(7, 1, 2, h, s);
  std::mt19937_64 rng(1);
  const Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
  double prev = action_probabilities(p, x)[0];
  const double first = prev;
  for (int k = 0; k < 50; ++k) {
    p = ppo_update(p, bandit_batch(p, 128, rng));
    const double now = action_probabilities(p, x)[0];
    ASSERT_GT(now, prev) << "update " << k << " p=" << now;
    prev = now;
  }
  EXPECT_GT(prev, 0.8);
  EXPECT_GT(prev, first);
}

TEST(PpoUpdate, SurrogateClipping) {
  const double eps = 0.2;
  EXPECT_EQ(surrogate_logprob_gradient(1.3, 1.0, eps), 0.0);
  EXPECT_EQ(surrogate_logprob_gradient(1.21, 0.5, eps), 0.0);
  EXPECT_EQ(surrogate_logprob_gradient(0.7, -1.0, eps), 0.0);
  EXPECT_DOUBLE_EQ(surrogate_logprob_gradient(1.1, 2.0, eps), 2.2);
  EXPECT_DOUBLE_EQ(surrogate_logprob_gradient(0.7, 1.0, eps), 0.7);
  EXPECT_DOUBLE_EQ(surrogate_logprob_gradient(1.3, -1.0, eps), -1.3);

  // A batch whose every sample is already past the clip boundary leaves the
  // actor untouched.
  PpoHyper h;
  h.entropy_coef = 0.0;
  PpoSettings s;
  s.normalize_advantages = false;
  s.epochs = 1;
  const auto p = make_policy(3, 1, 2, h, s);
  std::mt19937_64 rng(0);
  auto b = bandit_batch(p, 32, rng);
  for (std::size_t i = 0; i < b.size(); ++i) {
    b.advantages[i] = 1.0;
    b.log_probs[i] -= 0.5;  // ratio = e^0.5 > 1.2
  }
  EXPECT_EQ(ppo_update(p, b).actor, p.actor);
}

TEST(PpoUpdate, DistributionStaysValid) {
  const Layout L = resolve_layout("original");
  PpoHyper h;
  h.learning_rate = 0.05;
  auto p = make_policy(2, kFeatureDim, kNumActions, h);
  for (int k = 0; k < 5; ++k) p = ppo_update(p, collect_rollouts(p, L, north_reward(), 400, k));
  const auto b = collect_rollouts(p, L, north_reward(), 200, 99);
  for (Eigen::Index i = 0; i < b.obs.cols(); ++i) {
    const Eigen::VectorXd pr = action_probabilities(p, b.obs.col(i));
    ASSERT_TRUE(pr.allFinite());
    ASSERT_NEAR(pr.sum(), 1.0, 1e-12);
  }
}

TEST(Pbt, ZeroLearningRateMemberIsReplaced) {
  const Layout L = resolve_layout("original");
  PbtConfig cfg;
  cfg.population = 2;
  cfg.exploit_interval = 6;
  cfg.iterations = 6;
  cfg.rollout_steps = 512;
  cfg.parallel = false;
  cfg.env.episode_length = 64;
  PpoHyper live;
  live.learning_rate = 0.01;
  PpoHyper frozen = live;
  frozen.learning_rate = 0.0;
  cfg.member_hyper = {frozen, live};
  Population pop(cfg);
  const auto frozen_actor = pop.members()[0].actor;
  for (int i = 0; i < cfg.iterations; ++i) {
    pop.train_iteration(north_reward(), L);
    if (i + 1 < cfg.iterations) EXPECT_EQ(pop.members()[0].actor, frozen_actor);
  }
  for (const auto& m : pop.members()) EXPECT_GT(m.hyper.learning_rate, 0.0);
  const double lr0 = pop.members()[0].hyper.learning_rate / live.learning_rate;
  EXPECT_TRUE(std::abs(lr0 - 0.8) < 1e-12 || std::abs(lr0 - 1.25) < 1e-12);
  EXPECT_EQ(pop.members()[0].actor, pop.members()[1].actor);
}

TEST(Pbt, BestAtLeastMedian) {
  const Layout L = resolve_layout("original");
  PbtConfig cfg;
  cfg.population = 4;
  cfg.exploit_interval = 2;
  cfg.iterations = 3;
  cfg.rollout_steps = 256;
  cfg.parallel = false;
  cfg.env.episode_length = 32;
  Population pop(cfg);
  for (int i = 0; i < cfg.iterations; ++i) pop.train_iteration(north_reward(), L);
  std::vector<double> f;
  for (const auto& m : pop.members()) f.push_back(m.fitness);
  std::sort(f.begin(), f.end());
  const double median = 0.5 * (f[1] + f[2]);
  EXPECT_GE(pop.best().fitness, median);
  EXPECT_EQ(pop.best().fitness, f.back());
  EXPECT_EQ(pop.records().size(), 12u);
}

TEST(Pbt, SingleMemberIsPlainPpo) {
  const Layout L = resolve_layout("original");
  PbtConfig cfg;
  cfg.population = 1;
  cfg.exploit = false;
  cfg.iterations = 3;
  cfg.rollout_steps = 256;
  cfg.seed = 17;
  cfg.env.episode_length = 40;
  const auto trained = pbt_train(north_reward(), L, cfg);

  auto p = make_policy(member_seed(17, 0));
  for (int i = 0; i < 3; ++i)
    p = ppo_update(p, collect_rollouts(p, L, north_reward(), 256, rollout_seed(p.seed, p.updates), cfg.env));
  EXPECT_EQ(trained.actor, p.actor);
  EXPECT_EQ(trained.critic, p.critic);
  EXPECT_EQ(trained.fitness, p.fitness);
}

TEST(Pbt, CsvHasOneRowPerMemberIteration) {
  std::vector<PbtRecord> recs{{0, 0, 1.5, {}}, {0, 1, 2.5, {}}};
  std::ostringstream out;
  write_pbt_csv(out, recs);
  const std::string s = out.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
  EXPECT_EQ(s.rfind("iteration,member,fitness,learning_rate", 0), 0u);
}

TEST(Fitness, Reproducible) {
  const Layout L = resolve_layout("original");
  const auto p = make_policy(8);
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  RlEnvConfig env;
  env.episode_length = 100;
  const double a = evaluate_policy(p, L, init_model(3), seeds, env);
  const double b = evaluate_policy(p, L, init_model(3), seeds, env);
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(PolicyFile, RoundTrip) {
  auto p = make_policy(12);
  p.fitness = 3.25;
  p.hyper.learning_rate = 1e-3;
  std::stringstream buf;
  write_policy(buf, p);
  const auto q = read_policy(buf);
  EXPECT_EQ(q.actor, p.actor);
  EXPECT_EQ(q.critic, p.critic);
  EXPECT_EQ(q.hyper, p.hyper);
  EXPECT_EQ(q.fitness, p.fitness);
  std::stringstream bad("CIRLRWD1garbage");
  EXPECT_THROW(read_policy(bad), Error);
}
