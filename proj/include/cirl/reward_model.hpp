#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cirl/error.hpp"
#include "cirl/features.hpp"

namespace cirl {

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

/// Two-layer reward network r(phi) = W2 * ELU(W1 phi + b1) + b2 with an
/// 18 -> 200 -> 1 shape.
class RewardModel {
 public:
  static constexpr int kInput = kFeatureDim;
  static constexpr int kHidden = 200;
  static constexpr int kParameterCount = kHidden * kInput + kHidden + kHidden + 1;

  using W1Type = Eigen::Matrix<double, kHidden, kInput>;
  using HiddenVec = Eigen::Matrix<double, kHidden, 1>;
  using ParamVec = Eigen::VectorXd;
  using Feature = FeatureVector;

  /// Gradient of the scalar reward with respect to every parameter, shaped
  /// like the parameters themselves.
  struct Gradient {
    W1Type w1 = W1Type::Zero();
    HiddenVec b1 = HiddenVec::Zero();
    HiddenVec w2 = HiddenVec::Zero();
    double b2 = 0.0;
  };

  RewardModel() { zero(); }

  void zero() {
    w1_.setZero();
    b1_.setZero();
    w2_.setZero();
    b2_ = 0.0;
    finite_ = true;
  }

  const W1Type& w1() const { return w1_; }
  const HiddenVec& b1() const { return b1_; }
  const HiddenVec& w2() const { return w2_; }
  double b2() const { return b2_; }

  void set_w1(const W1Type& v) { w1_ = v; refresh_finite(); }
  void set_b1(const HiddenVec& v) { b1_ = v; refresh_finite(); }
  void set_w2(const HiddenVec& v) { w2_ = v; refresh_finite(); }
  void set_b2(double v) { b2_ = v; refresh_finite(); }

  bool finite() const { return finite_; }

  double forward(const Feature& phi) const {
    if (!finite_) fail(ErrorKind::NonFiniteParameters, "reward model has non-finite parameters");
    const HiddenVec z = w1_ * phi + b1_;
    return w2_.dot(z.unaryExpr([](double x) { return elu(x); })) + b2_;
  }

  double operator()(const Feature& phi) const { return forward(phi); }

  Gradient gradient(const Feature& phi) const {
    Gradient g;
    accumulate_gradient(phi, 1.0, g);
    return g;
  }

  /// g += weight * d r(phi) / d theta
  void accumulate_gradient(const Feature& phi, double weight, Gradient& g) const {
    const HiddenVec z = w1_ * phi + b1_;
    const HiddenVec h = z.unaryExpr([](double x) { return elu(x); });
    const HiddenVec delta =
        weight * w2_.cwiseProduct(z.unaryExpr([](double x) { return elu_derivative(x); }));
    g.b2 += weight;
    g.w2 += weight * h;
    g.b1 += delta;
    g.w1.noalias() += delta * phi.transpose();
  }

  // Flat parameter order: W1 row-major, b1, W2, b2. Shared by the generic
  // IRL ascent and the model file.
  static constexpr int parameter_count() { return kParameterCount; }

  ParamVec parameters() const {
    ParamVec p(kParameterCount);
    int k = 0;
    for (int r = 0; r < kHidden; ++r)
      for (int c = 0; c < kInput; ++c) p[k++] = w1_(r, c);
    for (int r = 0; r < kHidden; ++r) p[k++] = b1_[r];
    for (int r = 0; r < kHidden; ++r) p[k++] = w2_[r];
    p[k] = b2_;
    return p;
  }

  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& p) {
    if (p.size() != kParameterCount)
      fail(ErrorKind::FormatError, "reward parameter vector has wrong length");
    int k = 0;
    for (int r = 0; r < kHidden; ++r)
      for (int c = 0; c < kInput; ++c) w1_(r, c) = p[k++];
    for (int r = 0; r < kHidden; ++r) b1_[r] = p[k++];
    for (int r = 0; r < kHidden; ++r) w2_[r] = p[k++];
    b2_ = p[k];
    refresh_finite();
  }

  static ParamVec flatten(const Gradient& g) {
    ParamVec p(kParameterCount);
    int k = 0;
    for (int r = 0; r < kHidden; ++r)
      for (int c = 0; c < kInput; ++c) p[k++] = g.w1(r, c);
    for (int r = 0; r < kHidden; ++r) p[k++] = g.b1[r];
    for (int r = 0; r < kHidden; ++r) p[k++] = g.w2[r];
    p[k] = g.b2;
    return p;
  }

  /// Weighted sum of per-feature gradients, flattened.
  Eigen::VectorXd weighted_gradient(const std::vector<Feature>& features,
                                    const std::vector<double>& weights) const {
    Gradient g;
    for (std::size_t i = 0; i < features.size(); ++i) accumulate_gradient(features[i], weights[i], g);
    return flatten(g);
  }

  friend bool operator==(const RewardModel& a, const RewardModel& b) {
    return a.w1_ == b.w1_ && a.b1_ == b.b1_ && a.w2_ == b.w2_ && a.b2_ == b.b2_;
  }

 private:
  void refresh_finite() {
    finite_ = w1_.allFinite() && b1_.allFinite() && w2_.allFinite() && std::isfinite(b2_);
  }

  W1Type w1_;
  HiddenVec b1_;
  HiddenVec w2_;
  double b2_ = 0.0;
  bool finite_ = true;
};

inline double reward_forward(const RewardModel& m, const FeatureVector& phi) { return m.forward(phi); }
inline RewardModel::Gradient reward_gradient(const RewardModel& m, const FeatureVector& phi) {
  return m.gradient(phi);
}

/// Uniform fan-based initialisation: weights in [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
inline RewardModel init_model(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double a1 = std::sqrt(6.0 / (RewardModel::kInput + RewardModel::kHidden));
  const double a2 = std::sqrt(6.0 / (RewardModel::kHidden + 1));
  std::uniform_real_distribution<double> u1(-a1, a1), u2(-a2, a2);
  RewardModel::W1Type w1;
  for (int r = 0; r < RewardModel::kHidden; ++r)
    for (int c = 0; c < RewardModel::kInput; ++c) w1(r, c) = u1(rng);
  RewardModel::HiddenVec w2;
  for (int r = 0; r < RewardModel::kHidden; ++r) w2[r] = u2(rng);
  RewardModel m;
  m.set_w1(w1);
  m.set_w2(w2);
  return m;
}

// --------------------------------------------------------------- model file
//
// Binary layout, all integers and floats little-endian:
//   8 bytes  magic "CIRLRWD1"
//   u32      format version (1)
//   u32      byte length L of the feature-order contract, then L bytes
//   u32 x3   shapes: input (18), hidden (200), output (1)
//   f64 x N  parameters in flat order (W1 row-major, b1, W2, b2)

namespace binio {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::FormatError, "truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::FormatError, "truncated file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline void expect_magic(std::istream& in, const char (&magic)[9]) {
  char got[8];
  if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0)
    fail(ErrorKind::FormatError, std::string("bad magic, expected ") + magic);
}

}  // namespace binio

inline constexpr char kRewardMagic[9] = "CIRLRWD1";
inline constexpr std::uint32_t kRewardFormatVersion = 1;

inline void write_reward_model(std::ostream& out, const RewardModel& m) {
  out.write(kRewardMagic, 8);
  binio::put_u32(out, kRewardFormatVersion);
  const std::string contract = feature_order_contract();
  binio::put_u32(out, static_cast<std::uint32_t>(contract.size()));
  out.write(contract.data(), static_cast<std::streamsize>(contract.size()));
  binio::put_u32(out, RewardModel::kInput);
  binio::put_u32(out, RewardModel::kHidden);
  binio::put_u32(out, 1);
  const auto p = m.parameters();
  for (int i = 0; i < p.size(); ++i) binio::put_f64(out, p[i]);
}

inline RewardModel read_reward_model(std::istream& in) {
  binio::expect_magic(in, kRewardMagic);
  if (binio::get_u32(in) != kRewardFormatVersion)
    fail(ErrorKind::FormatError, "unsupported reward model version");
  const std::uint32_t len = binio::get_u32(in);
  if (len > 4096) fail(ErrorKind::FormatError, "feature contract too long");
  std::string contract(len, '\0');
  if (!in.read(contract.data(), len)) fail(ErrorKind::FormatError, "truncated file");
  if (contract != feature_order_contract())
    fail(ErrorKind::FormatError, "model feature order does not match this featurizer");
  const auto in_dim = binio::get_u32(in), hidden = binio::get_u32(in), out_dim = binio::get_u32(in);
  if (in_dim != RewardModel::kInput || hidden != RewardModel::kHidden || out_dim != 1)
    fail(ErrorKind::FormatError, "reward model shape mismatch");
  Eigen::VectorXd p(RewardModel::kParameterCount);
  for (int i = 0; i < p.size(); ++i) p[i] = binio::get_f64(in);
  RewardModel m;
  m.set_parameters(p);
  return m;
}

inline void save_reward_model(const std::string& path, const RewardModel& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::FormatError, "cannot write " + path);
  write_reward_model(out, m);
}

inline RewardModel load_reward_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::FormatError, "cannot open " + path);
  return read_reward_model(in);
}

}  // namespace cirl
