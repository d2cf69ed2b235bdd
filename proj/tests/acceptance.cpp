// Acceptance run: one PASS/FAIL line per primary criterion, exit status 1 if
// any criterion fails. Tolerances are fixed here and never relaxed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cirl/bots.hpp"
#include "cirl/irl/maxent.hpp"
#include "cirl/irl/tabular.hpp"
#include "cirl/metrics.hpp"
#include "cirl/pipeline.hpp"
#include "cirl/reward_model.hpp"
#include "cirl/traces.hpp"

using namespace cirl;

namespace {

using Seconds = std::chrono::duration<double>;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(const std::string& name, Outcome& o) {
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ":" << o.detail.str() << std::endl;
  failures += !o.pass;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return Seconds(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------ IRL ordering

const std::vector<std::string> kDemonstrators{"altruistic", "mixture-0.3", "mixture-0.1", "selfish"};
constexpr int kSeeds = 3;

struct Trained {
  std::string name;
  std::uint64_t seed;
  RewardModel model;
};

std::vector<Trained> train_all(double& elapsed) {
  const Layout L = resolve_layout("original");
  std::vector<Trained> out;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed)
    for (const auto& name : kDemonstrators) {
      const Dataset d = synthetic_dataset(L, demonstrator(name), kSyntheticEpisodes, seed);
      auto r = irl::maxent_irl_train(d, L, desk_scale_irl_config(seed));
      out.push_back({name, seed, r.model});
    }
  elapsed = seconds_since(t0);
  return out;
}

const RewardModel& model_of(const std::vector<Trained>& all, const std::string& name, std::uint64_t seed) {
  for (const auto& t : all)
    if (t.name == name && t.seed == seed) return t.model;
  throw std::logic_error("missing model " + name);
}

void sr_ordering(const std::vector<Trained>& all, double train_seconds) {
  Outcome o;
  const Layout L = resolve_layout("original");
  int ordered = 0;
  bool gaps = true;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    std::vector<double> sr;
    for (const auto& n : kDemonstrators) sr.push_back(metrics::sharing_ratio(model_of(all, n, seed), L).sr);
    const bool chain = sr[0] > sr[1] && sr[1] > sr[2] && sr[2] > sr[3];
    ordered += chain;
    gaps = gaps && sr[0] - sr[3] >= 0.05;
    o.detail << " seed" << seed << "{alt=" << sr[0] << " m0.3=" << sr[1] << " m0.1=" << sr[2] << " self=" << sr[3]
             << (chain ? " ordered" : " unordered") << "}";
  }
  o.detail << " ordered_seeds=" << ordered << "/3 train_time=" << train_seconds << "s";
  o.require(ordered >= 2, "strict ordering in >=2 of 3 seeds");
  o.require(gaps, "SR(alt)-SR(selfish) >= 0.05 in every seed");
  o.require(train_seconds <= 1800.0, "runtime <= 30 min");
  report("sr-ordering", o);

  // Not a criterion: the same models scored with per-trajectory ranges.
  std::cout << "info sr-ordering per-trajectory normalisation:";
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    std::cout << " seed" << seed << "{";
    for (const auto& n : kDemonstrators)
      std::cout << (n == kDemonstrators.front() ? "" : " ") << n << "="
                << metrics::sharing_ratio(model_of(all, n, seed), L, metrics::Normalization::PerTrajectory).sr;
    std::cout << "}";
  }
  std::cout << std::endl;
}

void generalization(const std::vector<Trained>& all) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Layout> layouts;
  for (const auto& n : layout_names()) layouts.push_back(resolve_layout(n));
  std::vector<const Layout*> ptrs;
  for (const auto& l : layouts) ptrs.push_back(&l);
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    std::vector<metrics::NamedModel> models;
    for (const auto& n : kDemonstrators) models.push_back({n, model_of(all, n, seed)});
    const auto table = metrics::generalization_table(models, ptrs);
    // Rows follow kDemonstrators; columns follow layout_names().
    int wins = 0;
    for (std::size_t l = 0; l < layouts.size(); ++l) wins += table.sr(1, l) >= table.sr(2, l);
    const double high = (table.sr(0, 0) + table.sr(0, 1) + table.sr(0, 2) + table.sr(0, 3)) / 4.0;
    const double low = (table.sr(0, 4) + table.sr(0, 6)) / 2.0;
    o.detail << " seed" << seed << "{m0.3>=m0.1 in " << wins << "/7, alt mean(orig,1-3)=" << high
             << " mean(4,6)=" << low << "}";
    o.require(wins >= 6, "seed " + std::to_string(seed) + ": mixture 0.3 >= mixture 0.1 in >=6 of 7 layouts");
    o.require(high >= low, "seed " + std::to_string(seed) + ": altruistic mean over original,1-3 >= mean over 4,6");
  }
  const double secs = seconds_since(t0);
  o.detail << " time=" << secs << "s";
  o.require(secs <= 60.0, "runtime <= 1 min");
  report("generalization", o);
}

// ------------------------------------------------------------------ tabular

void tabular_oracle() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const irl::TabularMdp m = irl::chain_mdp(5, 8);
  Eigen::VectorXd truth(5);
  truth << 0.0, 0.25, 0.5, 0.75, 1.0;
  const auto demos = irl::sample_episodes(m, irl::soft_value_iteration(m, truth), 500, 3);
  irl::TabularIRLConfig cfg;
  cfg.seed = 5;
  const auto result = irl::maxent_irl_train(m, demos, cfg);
  const Eigen::VectorXd r = result.model.rewards();
  const double rho = metrics::spearman(std::vector<double>(r.data(), r.data() + 5),
                                       std::vector<double>(truth.data(), truth.data() + 5));
  o.detail << " spearman=" << rho;
  o.require(rho >= 0.9, "Spearman >= 0.9");

  // The trainer's Monte-Carlo gradient against the exact soft-value-iteration
  // gradient, at the learned reward and at a fixed off-optimum point.
  Eigen::VectorXd off(5);
  off << 0.2, -0.1, 0.0, 0.3, 0.1;
  double worst = 0.0;
  for (const Eigen::VectorXd& theta : {Eigen::VectorXd(r), off}) {
    const Eigen::VectorXd exact = irl::exact_maxent_gradient(m, demos, theta);
    irl::TabularReward model(5);
    model.set_parameters(theta);
    const auto rollouts = irl::sample_episodes(m, irl::soft_value_iteration(m, theta), 200000, 9);
    const Eigen::VectorXd mc =
        irl::maxent_gradient(model, irl::tabular_visitation(5, demos), irl::tabular_visitation(5, rollouts)) *
        (m.horizon + 1);
    worst = std::max(worst, (mc - exact).cwiseAbs().maxCoeff());
  }
  o.detail << " max|mc-exact|=" << worst;
  o.require(worst < 0.05, "Monte-Carlo gradient within 0.05 of the exact oracle");
  const double secs = seconds_since(t0);
  o.detail << " time=" << secs << "s";
  o.require(secs <= 60.0, "runtime <= 1 min");
  report("tabular-irl-oracle", o);
}

// ---------------------------------------------------------------- numerical

FeatureVector random_feature(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  FeatureVector f;
  for (int i = 0; i < kFeatureDim; ++i) f[i] = u(rng);
  return f;
}

RewardModel random_model(std::uint64_t seed) {
  RewardModel m = init_model(seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> n(0.0, 0.3);
  RewardModel::HiddenVec b1;
  for (int i = 0; i < RewardModel::kHidden; ++i) b1[i] = n(rng);
  m.set_b1(b1);
  m.set_b2(n(rng));
  return m;
}

// Loop evaluation of the network from its flat parameter vector.
double loop_forward(const Eigen::VectorXd& p, const FeatureVector& f) {
  const int H = RewardModel::kHidden, D = kFeatureDim;
  double out = p[H * D + 2 * H];
  for (int j = 0; j < H; ++j) {
    double z = p[H * D + j];
    for (int i = 0; i < D; ++i) z += p[j * D + i] * f[i];
    out += p[H * D + H + j] * (z > 0 ? z : std::exp(z) - 1.0);
  }
  return out;
}

void numerical_checks() {
  Outcome o;
  std::mt19937_64 rng(2025);
  const double h = 1e-5;
  double worst = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const RewardModel m = random_model(static_cast<std::uint64_t>(pair));
    const FeatureVector f = random_feature(rng);
    const Eigen::VectorXd g = RewardModel::flatten(reward_gradient(m, f));
    Eigen::VectorXd p = m.parameters();
    for (int i = 0; i < p.size(); ++i) {
      const double keep = p[i];
      p[i] = keep + h;
      const double up = loop_forward(p, f);
      p[i] = keep - h;
      const double down = loop_forward(p, f);
      p[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
    }
  }
  o.detail << " fd_max_rel_err=" << worst;
  o.require(worst < 1e-4, "gradient vs central differences rel err < 1e-4 on 100 pairs");

  const irl::AscentSchedule sched{};
  bool lr_exact = sched.learning_rate == 0.001 && sched.lr_gamma == 0.999;
  long double product = 0.001L;
  double lr_drift = 0.0;
  for (int k = 0; k < 5000; ++k) {
    lr_exact = lr_exact && sched.lr_at(k) == 0.001 * std::pow(0.999, static_cast<double>(k));
    lr_drift = std::max(lr_drift, static_cast<double>(std::abs(sched.lr_at(k) - product) / product));
    product *= 0.999L;
  }
  o.detail << " lr_exact=" << (lr_exact ? "yes" : "no") << " lr_vs_product_rel=" << lr_drift;
  o.require(lr_exact, "LR(k) == 0.001*0.999^k");
  o.require(lr_drift < 1e-12, "LR agrees with a running product");

  const Layout L = resolve_layout("original");
  std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
  double affine = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const RewardModel m = random_model(1000 + s);
    const double a = scale(rng), b = shift(rng);
    const auto base = metrics::sharing_ratio(m, L);
    const auto moved = metrics::sharing_ratio([&](const FeatureVector& f) { return a * m(f) + b; }, L);
    affine = std::max({affine, std::abs(base.sr - moved.sr), std::abs(base.art_share - moved.art_share),
                       std::abs(base.art_cook - moved.art_cook)});
  }
  o.detail << " affine_max_dev=" << affine;
  o.require(affine <= 1e-12, "affine invariance of SR to 1e-12 on 20 models");
  report("numerical-checks", o);
}

// ---------------------------------------------------------------- unit ART

void art_unit_values() {
  Outcome o;
  const double a = metrics::art_of_rewards({0.0, 0.0, 10.0});
  o.detail << " art{0,0,10}=" << a;
  o.require(a == 1.0 / 3.0, "art({0,0,10}) == 1/3");

  RewardModel flat;
  flat.set_b2(4.2);
  bool constant_ok = true, degenerate_ok = true;
  for (const auto& n : layout_names()) {
    const Layout L = resolve_layout(n);
    const auto e = metrics::sharing_ratio(flat, L);
    constant_ok = constant_ok && e.art_share == 0.5 && e.art_cook == 0.5;
    degenerate_ok = degenerate_ok && e.sr == 1.0;
  }
  const Layout L = resolve_layout("original");
  const auto share = canonical_trajectory(L, CanonicalMode::Share).states();
  const double same = metrics::sharing_ratio_from_traces(random_model(3), L, {share}, {share}).sr;
  degenerate_ok = degenerate_ok && same == 1.0;
  o.detail << " constant_art=0.5:" << (constant_ok ? "yes" : "no") << " degenerate_sr=1:" << (degenerate_ok ? "yes" : "no");
  o.require(constant_ok, "constant reward gives ART 0.5");
  o.require(degenerate_ok, "degenerate SR == 1");
  report("art-unit-values", o);
}

// --------------------------------------------------------------- statistics

void statistics() {
  Outcome o;
  const double d = metrics::cohens_d(metrics::Summary{0.24, 0.28, 110}, metrics::Summary{0.14, 0.21, 190});
  o.detail << " d=" << d;
  o.require(std::abs(d - 0.40) <= 0.05, "Cohen's d = 0.40 +- 0.05");

  const std::vector<std::vector<std::vector<double>>> fixtures{
      {{1, 2, 3}, {2, 3, 4}, {3, 4, 5}},
      {{0.5, 1.5}, {2.0, 2.5, 4.0, 1.0}, {7.0, 6.5, 6.0}},
      {{0.0, 0.2, 0.1, 0.4}, {0.3, 0.1}, {0.9, 0.5, 0.6}, {0.2, 0.2, 0.25}},
  };
  double worst = 0.0;
  for (const auto& groups : fixtures) {
    // Brute-force sums of squares over the raw observations.
    double total = 0.0;
    int n = 0;
    for (const auto& g : groups)
      for (double x : g) total += x, ++n;
    const double grand = total / n;
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
      double mean = 0.0;
      for (double x : g) mean += x;
      mean /= static_cast<double>(g.size());
      for (double x : g) {
        ssb += (mean - grand) * (mean - grand);
        ssw += (x - mean) * (x - mean);
      }
    }
    const double k = static_cast<double>(groups.size());
    const double f = (ssb / (k - 1)) / (ssw / (n - k));
    worst = std::max(worst, std::abs(metrics::anova(groups).f - f));
  }
  o.detail << " anova_max_dev=" << worst << " F{123,234,345}=" << metrics::anova(fixtures[0]).f;
  o.require(worst <= 1e-9, "ANOVA F matches brute force to 1e-9");
  report("statistics", o);
}

// ------------------------------------------------------ env and pipeline

bool state_valid(const Layout& L, const GameState& s) {
  for (int p = 0; p < 2; ++p) {
    if (L.tile(s.players[p].pos) != TileKind::Floor) return false;
    if (!L.walkable_on(s.players[p].pos, p == 0 ? Side::Left : Side::Right)) return false;
    if (s.scores[p] < 0 || s.scores[p] % kSoupPoints != 0) return false;
  }
  if (s.pots.size() != L.pots().size()) return false;
  for (const auto& pot : s.pots) {
    if (pot.onions < 0 || pot.onions > kOnionsPerSoup) return false;
    if ((pot.phase == PotPhase::Idle) != (pot.onions < kOnionsPerSoup)) return false;
    if (pot.phase == PotPhase::Cooking && pot.cook_remaining <= 0) return false;
  }
  return s.tick >= 0 && s.tick <= s.horizon;
}

Trajectory scripted(const Layout& L, const std::vector<Action>& left, int horizon = 40) {
  Trajectory t;
  t.layout_id = L.id();
  GameState s = initial_state(L, horizon);
  for (std::size_t i = 0; !s.terminal(); ++i) {
    const JointAction a{i < left.size() ? left[i] : Action::Stay, Action::Stay};
    auto r = step(L, s, a);
    t.steps.push_back({s, a, r.events});
    s = r.state;
  }
  t.final_state = s;
  return t;
}

void env_pipeline() {
  Outcome o;
  std::mt19937_64 rng(99);
  int fuzz_steps = 0, fuzz_bad = 0;
  for (const auto& name : layout_names()) {
    const Layout L = resolve_layout(name);
    GameState s = initial_state(L);
    for (int i = 0; i < 1000; ++i, ++fuzz_steps) {
      if (s.terminal()) s = initial_state(L);
      const JointAction a{kAllActions[rng() % kNumActions], kAllActions[rng() % kNumActions]};
      const auto r = step(L, s, a);
      if (!state_valid(L, r.state) || r.state.tick != s.tick + 1 || !(step(L, s, a).state == r.state)) ++fuzz_bad;
      s = r.state;
    }
  }
  o.detail << " fuzz=" << fuzz_steps - fuzz_bad << "/" << fuzz_steps;
  o.require(fuzz_bad == 0, "random-action fuzz keeps every invariant");

  // Every logged trajectory replays after a write/read round trip.
  const auto dir = std::filesystem::temp_directory_path() / "cirl-acceptance-logs";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  int logged = 0, replayed = 0;
  for (const auto& name : layout_names()) {
    const Layout L = resolve_layout(name);
    for (const auto& bot : {BotKind::altruistic(), BotKind::selfish(), BotKind::mixture(0.3, 4)}) {
      const Trajectory t = simulate_episode(L, bot, BotKind::right_worker(), 17);
      const auto path = (dir / (name + "-" + bot.name() + ".ndjson")).string();
      save_trajectory(path, t);
      ++logged;
      try {
        verify_replay(L, load_trajectory(path));
        ++replayed;
      } catch (const Error&) {
      }
    }
  }
  std::filesystem::remove_all(dir);
  o.detail << " replay=" << replayed << "/" << logged;
  o.require(replayed == logged, "replay determinism on every logged trajectory");

  // Extraction and compaction against hand-worked fixtures.
  const Layout tiny = load_layout("XPXPX\nO1X2O\nB.G.B\nS.X.S\nXXXXX\n", "tiny");
  const auto tr = extract_traces(
      tiny, scripted(tiny, {Action::Left, Action::Interact, Action::Down, Action::Right, Action::Stay, Action::Interact}),
      0);
  const bool tiny_ok = tr.size() == 1 && tr[0].steps.size() == 5 && tr[0].label == TraceLabel::Altruistic &&
                       compact_trace(tr[0], true).steps.size() == 4 && compact_trace(tr[0], false).steps.size() == 3;

  const Layout L = resolve_layout("original");
  const auto canonical = canonical_trajectory(L, CanonicalMode::Share);
  std::vector<Action> plain;
  for (const auto& st : canonical.steps) plain.push_back(st.actions[0]);
  std::vector<Action> padded = plain;
  std::size_t pickup = 0;
  while (padded[pickup] != Action::Interact) ++pickup;
  padded.insert(padded.begin() + static_cast<std::ptrdiff_t>(pickup) + 2, 5, Action::Stay);
  const auto raw = extract_traces(L, scripted(L, padded), 0);
  const auto ref = extract_traces(L, scripted(L, plain), 0);
  const bool stays_ok = raw.size() == 1 && ref.size() == 1 &&
                        raw[0].steps.size() == ref[0].steps.size() + 5 &&
                        compact_trace(raw[0]).steps.size() == ref[0].steps.size() &&
                        compact_trace(ref[0]) == ref[0];

  // No pickup, no trace; a carry cut off by the horizon is dropped.
  const bool empty_ok = extract_traces(L, scripted(L, {}), 0).empty();
  std::vector<Action> truncated(plain.begin(), plain.begin() + static_cast<std::ptrdiff_t>(pickup) + 1);
  const bool trunc_ok = extract_traces(L, scripted(L, truncated, static_cast<int>(pickup) + 3), 0).empty();

  o.detail << " fixtures{tiny:" << tiny_ok << " stays:" << stays_ok << " empty:" << empty_ok << " truncated:" << trunc_ok
           << "}";
  o.require(tiny_ok && stays_ok && empty_ok && trunc_ok, "extract/compact fixtures");
  o.detail << " web-ui: not required";
  report("env-pipeline-properties", o);
}

}  // namespace

int main() {
  std::cout.precision(6);
  try {
    art_unit_values();
    statistics();
    numerical_checks();
    tabular_oracle();
    env_pipeline();
    double train_seconds = 0.0;
    const auto models = train_all(train_seconds);
    sr_ordering(models, train_seconds);
    generalization(models);
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
