#pragma once

// Minimal dense actor-critic stack: 13 -> 64 -> 64 -> {3 means, 1 value},
// tanh hidden layers, linear output heads, tanh-squashed action means, and a
// state-independent learnable log-std vector. Reverse-mode gradients are
// computed analytically against a per-forward activation tape.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "satrl/errors.hpp"
#include "satrl/math.hpp"

namespace satrl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr int kObsDim = 13;
constexpr int kActDim = 3;
constexpr int kHidden = 64;
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 1.0;

struct GaussianPolicyOutput {
  Eigen::Vector3d mean;  // tanh-squashed, in (-1, 1)^3
  Eigen::Vector3d std;   // exp(log_std) > 0
};

// Diagonal Gaussian log density.
inline double log_prob(const GaussianPolicyOutput& out,
                       const Eigen::Vector3d& action) {
  double lp = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double z = (action[i] - out.mean[i]) / out.std[i];
    lp += -0.5 * z * z - std::log(out.std[i]) - 0.5 * std::log(2.0 * kPi);
  }
  return lp;
}

struct DenseLayer {
  MatrixXd W;
  VectorXd b;
};

// Orthogonal init via QR of a Gaussian matrix, scaled by `gain`.
inline MatrixXd orthogonal_init(int rows, int cols, double gain,
                                std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = std::max(rows, cols);
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = gauss(rng);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  MatrixXd q = qr.householderQ();
  // Fix signs so the decomposition is unique.
  MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return gain * q.topLeftCorner(rows, cols);
}

// Orthogonal init gain for tanh hidden layers.
#ifndef SATRL_HIDDEN_GAIN
#define SATRL_HIDDEN_GAIN 1.4142135623730951
#endif
inline constexpr double kHiddenGain = SATRL_HIDDEN_GAIN;

// Fixed-topology MLP with tanh hidden activations and a linear output layer.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int in_dim, int hidden, int out_dim, double out_gain,
      std::mt19937_64& rng) {
    layers_.resize(3);
    layers_[0].W = orthogonal_init(hidden, in_dim, kHiddenGain, rng);
    layers_[0].b = VectorXd::Zero(hidden);
    layers_[1].W = orthogonal_init(hidden, hidden, kHiddenGain, rng);
    layers_[1].b = VectorXd::Zero(hidden);
    layers_[2].W = orthogonal_init(out_dim, hidden, out_gain, rng);
    layers_[2].b = VectorXd::Zero(out_dim);
  }

  struct Tape {
    VectorXd input;
    VectorXd h1;  // tanh outputs, layer 1
    VectorXd h2;  // tanh outputs, layer 2
    VectorXd out;
  };

  VectorXd forward(const VectorXd& input, Tape* tape = nullptr) const {
    VectorXd h1 = (layers_[0].W * input + layers_[0].b).array().tanh();
    VectorXd h2 = (layers_[1].W * h1 + layers_[1].b).array().tanh();
    VectorXd out = layers_[2].W * h2 + layers_[2].b;
    if (tape) {
      tape->input = input;
      tape->h1 = h1;
      tape->h2 = h2;
      tape->out = out;
    }
    return out;
  }

  // Accumulates dL/dparams into `grads` (same layer layout as the net) given
  // dL/d(output). Returns dL/d(input).
  VectorXd backward(const Tape& tape, const VectorXd& out_adjoint,
                    std::vector<DenseLayer>& grads) const {
    if (tape.input.size() == 0) {
      throw UsageError("mlp backward: no recorded forward tape");
    }
    grads[2].W += out_adjoint * tape.h2.transpose();
    grads[2].b += out_adjoint;
    VectorXd d2 = layers_[2].W.transpose() * out_adjoint;
    d2.array() *= (1.0 - tape.h2.array().square());
    grads[1].W += d2 * tape.h1.transpose();
    grads[1].b += d2;
    VectorXd d1 = layers_[1].W.transpose() * d2;
    d1.array() *= (1.0 - tape.h1.array().square());
    grads[0].W += d1 * tape.input.transpose();
    grads[0].b += d1;
    return layers_[0].W.transpose() * d1;
  }

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::vector<DenseLayer> zero_like() const {
    std::vector<DenseLayer> g(layers_.size());
    for (size_t i = 0; i < layers_.size(); ++i) {
      g[i].W = MatrixXd::Zero(layers_[i].W.rows(), layers_[i].W.cols());
      g[i].b = VectorXd::Zero(layers_[i].b.size());
    }
    return g;
  }

  int param_count() const {
    int n = 0;
    for (const auto& l : layers_) {
      n += static_cast<int>(l.W.size() + l.b.size());
    }
    return n;
  }

 private:
  std::vector<DenseLayer> layers_;
};

class MlpActorCritic {
 public:
  MlpActorCritic() = default;

  explicit MlpActorCritic(uint64_t seed) {
    std::mt19937_64 rng(seed);
    actor_ = Mlp(kObsDim, kHidden, kActDim, 0.01, rng);
    critic_ = Mlp(kObsDim, kHidden, 1, 0.01, rng);
    log_std_ = Eigen::Vector3d::Constant(std::log(0.5));
  }

  GaussianPolicyOutput policy_forward(const VectorXd& obs,
                                      Mlp::Tape* tape = nullptr) const {
    check_obs(obs);
    VectorXd raw = actor_.forward(obs, tape);
    GaussianPolicyOutput out;
    out.mean = raw.head<3>().array().tanh().matrix();
    out.std = log_std_.array().exp().matrix();
    return out;
  }

  double value_forward(const VectorXd& obs, Mlp::Tape* tape = nullptr) const {
    check_obs(obs);
    return critic_.forward(obs, tape)[0];
  }

  Mlp& actor() { return actor_; }
  const Mlp& actor() const { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& critic() const { return critic_; }
  Eigen::Vector3d& log_std() { return log_std_; }
  const Eigen::Vector3d& log_std() const { return log_std_; }

  void clamp_log_std() {
    for (int i = 0; i < 3; ++i) {
      log_std_[i] = std::clamp(log_std_[i], kLogStdMin, kLogStdMax);
    }
  }

  int param_count() const {
    return actor_.param_count() + 3 + critic_.param_count();
  }

  // Flat parameter vector: actor layers (W row-major, then b), log_std,
  // critic layers. This order is the checkpoint order.
  VectorXd flatten() const {
    VectorXd v(param_count());
    int k = 0;
    auto put = [&](const Mlp& net) {
      for (const auto& l : net.layers()) {
        for (int i = 0; i < l.W.rows(); ++i)
          for (int j = 0; j < l.W.cols(); ++j) v[k++] = l.W(i, j);
        for (int i = 0; i < l.b.size(); ++i) v[k++] = l.b[i];
      }
    };
    put(actor_);
    for (int i = 0; i < 3; ++i) v[k++] = log_std_[i];
    put(critic_);
    return v;
  }

  void unflatten(const VectorXd& v) {
    if (v.size() != param_count()) {
      throw FormatError("actor-critic: parameter vector length mismatch");
    }
    int k = 0;
    auto take = [&](Mlp& net) {
      for (auto& l : net.layers()) {
        for (int i = 0; i < l.W.rows(); ++i)
          for (int j = 0; j < l.W.cols(); ++j) l.W(i, j) = v[k++];
        for (int i = 0; i < l.b.size(); ++i) l.b[i] = v[k++];
      }
    };
    take(actor_);
    for (int i = 0; i < 3; ++i) log_std_[i] = v[k++];
    take(critic_);
  }

  bool finite() const { return flatten().allFinite(); }

 private:
  static void check_obs(const VectorXd& obs) {
    if (obs.size() != kObsDim) {
      throw std::invalid_argument("actor-critic: observation must have 13 entries");
    }
    if (!obs.allFinite()) {
      throw std::invalid_argument("actor-critic: non-finite observation");
    }
  }

  Mlp actor_;
  Mlp critic_;
  Eigen::Vector3d log_std_ = Eigen::Vector3d::Constant(std::log(0.5));
};

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
struct AdamState {
  VectorXd m;
  VectorXd v;
  long t = 0;
};

inline void adam_update(VectorXd& params, const VectorXd& grads,
                        AdamState& state, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adam: parameter/gradient length mismatch");
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (state.t == 0) {
    state.m = VectorXd::Zero(params.size());
    state.v = VectorXd::Zero(params.size());
  }
  ++state.t;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v.array().matrix() +
            (1.0 - beta2) * grads.array().square().matrix();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.array() -= lr * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + eps);
}

}  // namespace satrl
