#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cirl/bots.hpp"
#include "cirl/error.hpp"
#include "cirl/features.hpp"
#include "cirl/reward_model.hpp"
#include "cirl/traces.hpp"
#include "cirl/trajectory.hpp"

namespace cirl::metrics {

inline constexpr double kSrEpsilon = 1e-6;

/// Min-max normalisation over [lo, hi]; a flat range maps to 0.5.
inline std::vector<double> min_max(const std::vector<double>& v, double lo, double hi) {
  const double range = hi - lo;
  std::vector<double> out(v.size(), 0.5);
  if (range > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / range;
  return out;
}

/// Min-max normalisation over the sequence's own range.
inline std::vector<double> min_max(const std::vector<double>& v) {
  if (v.empty()) return {};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return min_max(v, *lo, *hi);
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Average of per-step min-max normalised rewards.
inline double art_of_rewards(const std::vector<double>& rewards) {
  if (rewards.empty()) fail(ErrorKind::InvariantViolation, "ART needs at least one state");
  return mean_of(min_max(rewards));
}

template <class RewardFn>
std::vector<double> rewards_along(const std::vector<GameState>& states, const Layout& layout, const RewardFn& rf,
                                  int focal = 0) {
  const Featurizer featurize(layout, focal);
  std::vector<double> r;
  r.reserve(states.size());
  for (const GameState& s : states) r.push_back(rf(featurize(s)));
  return r;
}

template <class RewardFn>
double art(const std::vector<GameState>& states, const Layout& layout, const RewardFn& rf, int focal = 0) {
  return art_of_rewards(rewards_along(states, layout, rf, focal));
}

/// Range used to normalise the two sides of a sharing ratio. Pooled takes
/// min and max over the share and cook states together, so the ratio compares
/// reward levels; PerTrajectory normalises each trajectory by its own range,
/// which keeps only the shape of each reward curve.
enum class Normalization { Pooled, PerTrajectory };

inline std::optional<Normalization> parse_normalization(std::string_view s) {
  if (s == "pooled") return Normalization::Pooled;
  if (s == "per-trajectory") return Normalization::PerTrajectory;
  return std::nullopt;
}

struct SharingEntry {
  double art_share = 0.5;
  double art_cook = 0.5;
  double sr = 1.0;
};

inline double sharing_ratio_value(double art_share, double art_cook) {
  return art_share / std::max(art_cook, kSrEpsilon);
}

/// Mean ART over each side's reward sequences.
inline SharingEntry sharing_entry(const std::vector<std::vector<double>>& share,
                                  const std::vector<std::vector<double>>& cook, Normalization norm) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto* side : {&share, &cook})
    for (const auto& r : *side) {
      if (r.empty()) fail(ErrorKind::InvariantViolation, "ART needs at least one state");
      const auto [a, b] = std::minmax_element(r.begin(), r.end());
      lo = std::min(lo, *a);
      hi = std::max(hi, *b);
    }
  auto side_art = [&](const std::vector<std::vector<double>>& rs) {
    double sum = 0.0;
    for (const auto& r : rs) sum += norm == Normalization::Pooled ? mean_of(min_max(r, lo, hi)) : art_of_rewards(r);
    return sum / static_cast<double>(rs.size());
  };
  SharingEntry e;
  e.art_share = side_art(share);
  e.art_cook = side_art(cook);
  e.sr = sharing_ratio_value(e.art_share, e.art_cook);
  return e;
}

template <class RewardFn>
SharingEntry sharing_ratio(const RewardFn& rf, const Layout& layout, Normalization norm = Normalization::Pooled) {
  return sharing_entry({rewards_along(canonical_trajectory(layout, CanonicalMode::Share).states(), layout, rf)},
                       {rewards_along(canonical_trajectory(layout, CanonicalMode::Cook).states(), layout, rf)}, norm);
}

/// Variant averaging ART over supplied share and cook traces instead of the
/// canonical trajectories. Pooled normalisation spans every supplied state.
template <class RewardFn>
SharingEntry sharing_ratio_from_traces(const RewardFn& rf, const Layout& layout,
                                       const std::vector<std::vector<GameState>>& share,
                                       const std::vector<std::vector<GameState>>& cook, int focal = 0,
                                       Normalization norm = Normalization::Pooled) {
  if (share.empty() || cook.empty())
    fail(ErrorKind::EmptySelection, "trace-averaged sharing ratio needs share and cook traces");
  std::vector<std::vector<double>> rs, rc;
  for (const auto& t : share) rs.push_back(rewards_along(t, layout, rf, focal));
  for (const auto& t : cook) rc.push_back(rewards_along(t, layout, rf, focal));
  return sharing_entry(rs, rc, norm);
}

struct NamedModel {
  std::string name;
  RewardModel model;
};

struct GeneralizationTable {
  std::vector<std::string> models;
  std::vector<std::string> layouts;
  std::vector<std::vector<SharingEntry>> cells;  // [model][layout]

  double sr(std::size_t m, std::size_t l) const { return cells[m][l].sr; }
};

inline GeneralizationTable generalization_table(const std::vector<NamedModel>& models,
                                                const std::vector<const Layout*>& layouts,
                                                Normalization norm = Normalization::Pooled) {
  GeneralizationTable t;
  for (const auto* l : layouts) t.layouts.push_back(l->id());
  for (const auto& m : models) {
    t.models.push_back(m.name);
    auto& row = t.cells.emplace_back();
    for (const auto* l : layouts) row.push_back(sharing_ratio(m.model, *l, norm));
  }
  return t;
}

/// One-layout table from dataset traces: Altruistic traces form the share
/// side and NonAltruistic traces the cook side, each featurised for its own
/// focal seat.
inline GeneralizationTable trace_generalization_table(const std::vector<NamedModel>& models, const Layout& layout,
                                                      const std::vector<Trace>& traces,
                                                      Normalization norm = Normalization::Pooled) {
  GeneralizationTable t;
  t.layouts.push_back(layout.id());
  for (const auto& m : models) {
    std::vector<std::vector<double>> rs, rc;
    for (const Trace& tr : traces)
      (tr.label == TraceLabel::Altruistic ? rs : rc).push_back(rewards_along(tr.states(), layout, m.model, tr.focal));
    if (rs.empty() || rc.empty())
      fail(ErrorKind::EmptySelection, "trace-averaged sharing ratio needs Altruistic and NonAltruistic traces");
    t.models.push_back(m.name);
    t.cells.push_back({sharing_entry(rs, rc, norm)});
  }
  return t;
}

inline void write_sr_csv(std::ostream& out, const GeneralizationTable& t) {
  out.precision(17);
  out << "model";
  for (const auto& l : t.layouts) out << ',' << l;
  out << '\n';
  for (std::size_t m = 0; m < t.models.size(); ++m) {
    out << t.models[m];
    for (std::size_t l = 0; l < t.layouts.size(); ++l) out << ',' << t.cells[m][l].sr;
    out << '\n';
  }
}

inline void write_art_csv(std::ostream& out, const GeneralizationTable& t) {
  out.precision(17);
  out << "model,layout,art_share,art_cook,sr\n";
  for (std::size_t m = 0; m < t.models.size(); ++m)
    for (std::size_t l = 0; l < t.layouts.size(); ++l) {
      const auto& c = t.cells[m][l];
      out << t.models[m] << ',' << t.layouts[l] << ',' << c.art_share << ',' << c.art_cook << ',' << c.sr << '\n';
    }
}

// ------------------------------------------------------------ attribution

/// States of the canonical Share and Cook trajectories.
inline std::vector<GameState> default_probes(const Layout& layout) {
  auto probes = canonical_trajectory(layout, CanonicalMode::Share).states();
  const auto cook = canonical_trajectory(layout, CanonicalMode::Cook).states();
  probes.insert(probes.end(), cook.begin(), cook.end());
  return probes;
}

struct Attribution {
  std::vector<int> features;
  std::vector<double> raw;
  std::vector<double> scaled;
};

/// Occlusion attribution: mean reward drop when a feature is set to zero,
/// min-max scaled across the selected features.
template <class RewardFn>
Attribution feature_attribution(const RewardFn& rf, const std::vector<GameState>& probes, const Layout& layout,
                                const std::vector<int>& features, int focal = 0) {
  if (probes.empty()) fail(ErrorKind::EmptySelection, "attribution needs probe states");
  if (features.empty()) fail(ErrorKind::EmptySelection, "attribution needs at least one feature");
  const Featurizer featurize(layout, focal);
  Attribution a;
  a.features = features;
  a.raw.assign(features.size(), 0.0);
  for (const GameState& s : probes) {
    const FeatureVector phi = featurize(s);
    const double base = rf(phi);
    for (std::size_t k = 0; k < features.size(); ++k) {
      const int f = features[k];
      if (f < 0 || f >= kFeatureDim) fail(ErrorKind::UsageError, "feature index out of range");
      FeatureVector occluded = phi;
      occluded[f] = 0.0;
      a.raw[k] += base - rf(occluded);
    }
  }
  for (double& v : a.raw) v /= static_cast<double>(probes.size());
  a.scaled = min_max(a.raw);
  return a;
}

// ------------------------------------------------------------- statistics

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline Summary summarize(const std::vector<double>& xs) {
  if (xs.empty()) fail(ErrorKind::EmptyGroup, "empty group");
  Summary s;
  s.n = xs.size();
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

/// Cohen's d with the pooled standard deviation.
inline double cohens_d(const Summary& a, const Summary& b) {
  if (a.n == 0 || b.n == 0) fail(ErrorKind::EmptyGroup, "Cohen's d needs two nonempty groups");
  const double df = static_cast<double>(a.n + b.n) - 2.0;
  const double pooled_var =
      df > 0.0 ? ((static_cast<double>(a.n) - 1.0) * a.sd * a.sd + (static_cast<double>(b.n) - 1.0) * b.sd * b.sd) / df
               : 0.0;
  const double diff = a.mean - b.mean;
  if (diff == 0.0) return 0.0;
  return diff / std::sqrt(pooled_var);
}

inline double cohens_d(const std::vector<double>& a, const std::vector<double>& b) {
  return cohens_d(summarize(a), summarize(b));
}

struct Anova {
  double f = 0.0;
  int df_between = 0;
  int df_within = 0;
  double ss_between = 0.0;
  double ss_within = 0.0;
};

/// One-way ANOVA from per-group summaries.
inline Anova anova(const std::vector<Summary>& groups) {
  if (groups.size() < 2) fail(ErrorKind::EmptyGroup, "ANOVA needs at least two groups");
  double n_total = 0.0, sum = 0.0;
  for (const auto& g : groups) {
    if (g.n == 0) fail(ErrorKind::EmptyGroup, "ANOVA group is empty");
    n_total += static_cast<double>(g.n);
    sum += g.mean * static_cast<double>(g.n);
  }
  const double grand = sum / n_total;
  // Equal means must give exactly zero, which the rounded grand mean does not.
  const bool flat = std::all_of(groups.begin(), groups.end(), [&](const Summary& g) { return g.mean == groups[0].mean; });
  Anova a;
  for (const auto& g : groups) {
    if (!flat) a.ss_between += static_cast<double>(g.n) * (g.mean - grand) * (g.mean - grand);
    a.ss_within += (static_cast<double>(g.n) - 1.0) * g.sd * g.sd;
  }
  a.df_between = static_cast<int>(groups.size()) - 1;
  a.df_within = static_cast<int>(n_total) - static_cast<int>(groups.size());
  if (a.ss_between == 0.0) {
    a.f = 0.0;
  } else if (a.df_within <= 0 || a.ss_within == 0.0) {
    a.f = std::numeric_limits<double>::infinity();
  } else {
    a.f = (a.ss_between / a.df_between) / (a.ss_within / a.df_within);
  }
  return a;
}

inline Anova anova(const std::vector<std::vector<double>>& samples) {
  std::vector<Summary> s;
  for (const auto& x : samples) s.push_back(summarize(x));
  return anova(s);
}

/// Onions shared per delivered soup for one seat of one episode; episodes
/// without a delivery use denominator 1.
inline double share_per_soup(const Trajectory& t, int focal) {
  int bridged = 0, delivered = 0;
  for (const auto& st : t.steps)
    for (const auto& e : st.events) {
      if (e.actor != focal) continue;
      if (e.kind == EventKind::OnionBridged) ++bridged;
      if (e.kind == EventKind::SoupDelivered) ++delivered;
    }
  return static_cast<double>(bridged) / static_cast<double>(std::max(1, delivered));
}

/// Human seat of a trajectory: the first controller role, else seat 0.
inline int focal_seat(const Trajectory& t) {
  for (int i = 0; i < 2; ++i)
    if (t.roles[i].controller != "bot") return i;
  return 0;
}

struct GroupRow {
  std::string group;
  int round = 0;
  Summary stats;
  std::vector<double> values;
};

struct PairwiseD {
  std::string a;
  std::string b;
  double d = 0.0;
};

struct GroupStats {
  std::vector<GroupRow> rows;
  std::vector<PairwiseD> pairwise;
  Anova anova;
  bool has_anova = false;
};

inline std::string group_key(const GroupRow& r) { return r.group + "/r" + std::to_string(r.round); }

/// Groups trajectories by (group label, round) and compares the groups.
inline GroupStats behavior_stats(const std::vector<Trajectory>& trajectories) {
  std::map<std::pair<std::string, int>, std::vector<double>> buckets;
  for (const auto& t : trajectories)
    buckets[{t.meta.group, t.meta.round}].push_back(share_per_soup(t, focal_seat(t)));
  if (buckets.empty()) fail(ErrorKind::EmptyGroup, "no trajectories to group");
  GroupStats out;
  for (auto& [key, values] : buckets) {
    GroupRow r;
    r.group = key.first;
    r.round = key.second;
    r.stats = summarize(values);
    r.values = std::move(values);
    out.rows.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < out.rows.size(); ++i)
    for (std::size_t j = i + 1; j < out.rows.size(); ++j)
      out.pairwise.push_back({group_key(out.rows[i]), group_key(out.rows[j]),
                              cohens_d(out.rows[i].stats, out.rows[j].stats)});
  if (out.rows.size() >= 2) {
    std::vector<Summary> s;
    for (const auto& r : out.rows) s.push_back(r.stats);
    out.anova = anova(s);
    out.has_anova = true;
  }
  return out;
}

inline void write_group_csv(std::ostream& out, const GroupStats& g) {
  out.precision(17);
  out << "group,round,n,mean,sd\n";
  for (const auto& r : g.rows)
    out << r.group << ',' << r.round << ',' << r.stats.n << ',' << r.stats.mean << ',' << r.stats.sd << '\n';
  out << "\ngroup_a,group_b,cohens_d\n";
  for (const auto& p : g.pairwise) out << p.a << ',' << p.b << ',' << p.d << '\n';
  if (g.has_anova)
    out << "\nF,df_between,df_within\n" << g.anova.f << ',' << g.anova.df_between << ',' << g.anova.df_within << '\n';
}

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

/// Spearman rank correlation (Pearson correlation of the ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) fail(ErrorKind::EmptyGroup, "spearman needs two equal-length samples");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace cirl::metrics
