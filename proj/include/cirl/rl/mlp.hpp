#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace cirl::rl {

/// Deterministic uniform double in [0,1) from a 64-bit engine.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// input -> hidden (tanh) -> output (linear). Parameters live in one flat
/// vector so optimisers and population copies treat them uniformly.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int inputs, int hidden, int outputs) : in_(inputs), hid_(hidden), out_(outputs) {
    theta_ = Eigen::VectorXd::Zero(parameter_count());
  }

  /// Uniform fan-based hidden layer; output layer uniform in
  /// [-output_scale, output_scale] (zero when output_scale is 0).
  static Mlp initialised(int inputs, int hidden, int outputs, std::mt19937_64& rng,
                         double output_scale) {
    Mlp m(inputs, hidden, outputs);
    const double a = std::sqrt(6.0 / (inputs + hidden));
    auto w1 = m.w1();
    for (int r = 0; r < hidden; ++r)
      for (int c = 0; c < inputs; ++c) w1(r, c) = (2.0 * unit_uniform(rng) - 1.0) * a;
    auto w2 = m.w2();
    for (int r = 0; r < outputs; ++r)
      for (int c = 0; c < hidden; ++c) w2(r, c) = (2.0 * unit_uniform(rng) - 1.0) * output_scale;
    return m;
  }

  int inputs() const { return in_; }
  int hidden() const { return hid_; }
  int outputs() const { return out_; }
  int parameter_count() const { return hid_ * in_ + hid_ + out_ * hid_ + out_; }

  Eigen::VectorXd& parameters() { return theta_; }
  const Eigen::VectorXd& parameters() const { return theta_; }

  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using CMatMap = Eigen::Map<const Eigen::MatrixXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;
  using CVecMap = Eigen::Map<const Eigen::VectorXd>;

  MatMap w1() { return {theta_.data(), hid_, in_}; }
  VecMap b1() { return {theta_.data() + hid_ * in_, hid_}; }
  MatMap w2() { return {theta_.data() + hid_ * in_ + hid_, out_, hid_}; }
  VecMap b2() { return {theta_.data() + hid_ * in_ + hid_ + out_ * hid_, out_}; }
  CMatMap w1() const { return {theta_.data(), hid_, in_}; }
  CVecMap b1() const { return {theta_.data() + hid_ * in_, hid_}; }
  CMatMap w2() const { return {theta_.data() + hid_ * in_ + hid_, out_, hid_}; }
  CVecMap b2() const { return {theta_.data() + hid_ * in_ + hid_ + out_ * hid_, out_}; }

  template <class Derived>
  Eigen::VectorXd forward(const Eigen::MatrixBase<Derived>& x) const {
    const Eigen::VectorXd h = (w1() * x + b1()).array().tanh().matrix();
    return w2() * h + b2();
  }

  /// Column-batched forward; fills `hidden` with the tanh activations.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x, Eigen::MatrixXd& hidden) const {
    hidden = ((w1() * x).colwise() + b1()).array().tanh().matrix();
    return (w2() * hidden).colwise() + b2();
  }

  /// Gradient of sum_j <d_out[:, j], f(x_j)> with respect to the flat parameters.
  Eigen::VectorXd backward_batch(const Eigen::MatrixXd& x, const Eigen::MatrixXd& hidden,
                                 const Eigen::MatrixXd& d_out) const {
    Eigen::VectorXd g(parameter_count());
    MatMap gw1(g.data(), hid_, in_);
    VecMap gb1(g.data() + hid_ * in_, hid_);
    MatMap gw2(g.data() + hid_ * in_ + hid_, out_, hid_);
    VecMap gb2(g.data() + hid_ * in_ + hid_ + out_ * hid_, out_);
    gw2.noalias() = d_out * hidden.transpose();
    gb2 = d_out.rowwise().sum();
    const Eigen::MatrixXd d_hidden =
        ((w2().transpose() * d_out).array() * (1.0 - hidden.array().square())).matrix();
    gw1.noalias() = d_hidden * x.transpose();
    gb1 = d_hidden.rowwise().sum();
    return g;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.in_ == b.in_ && a.hid_ == b.hid_ && a.out_ == b.out_ && a.theta_ == b.theta_;
  }

 private:
  int in_ = 0;
  int hid_ = 0;
  int out_ = 0;
  Eigen::VectorXd theta_;
};

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long long t = 0;

  void reset(Eigen::Index n) {
    m = Eigen::VectorXd::Zero(n);
    v = Eigen::VectorXd::Zero(n);
    t = 0;
  }

  /// Descent step on `theta` along `grad`.
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
    if (m.size() != theta.size()) reset(theta.size());
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  }

};

}  // namespace cirl::rl
