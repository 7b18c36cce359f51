#pragma once

// Small set of differentiable layers over channels-last volumes. Every layer
// keeps its parameters as Eigen matrices; forward passes write what the
// backward pass needs into an explicit cache so a layer can be shared
// read-only between threads.

#include "speakloc/volume.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace speakloc::nn {

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// Binary cross entropy computed from a logit, numerically stable.
template <typename Scalar>
Scalar bce_with_logit(Scalar logit, Scalar target) {
  return std::max(logit, Scalar(0)) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

/// Binary cross entropy on a probability, clamped away from {0, 1}.
template <typename Scalar>
Scalar bce(Scalar p, Scalar target) {
  const Scalar eps = Scalar(1e-7);
  const Scalar q = std::clamp(p, eps, Scalar(1) - eps);
  return -(target * std::log(q) + (Scalar(1) - target) * std::log(Scalar(1) - q));
}

/// d bce / d p, with the same clamping as bce().
template <typename Scalar>
Scalar bce_grad(Scalar p, Scalar target) {
  const Scalar eps = Scalar(1e-7);
  const Scalar q = std::clamp(p, eps, Scalar(1) - eps);
  return (q - target) / (q * (Scalar(1) - q));
}

template <typename Derived>
void relu_inplace(Eigen::MatrixBase<Derived>& m) {
  m = m.cwiseMax(typename Derived::Scalar(0));
}

/// Masks `grad` where the ReLU output `y` was clamped.
template <typename Scalar>
void relu_backward(const Mat<Scalar>& y, Mat<Scalar>& grad) {
  grad = (y.array() > Scalar(0)).select(grad, Scalar(0));
}

template <typename Scalar>
class Conv3d {
 public:
  using scalar_type = Scalar;
  Conv3d() = default;
  Conv3d(Index in_channels, Index out_channels, Triple kernel, Triple stride);

  struct Cache {
    Mat<Scalar> patches;
    Extent in_extent;
  };

  void init(std::mt19937_64& rng);
  Index in_channels() const { return weight.rows() / (kernel[0] * kernel[1] * kernel[2]); }
  Index out_channels() const { return weight.cols(); }
  Extent output_extent(const Extent& in) const { return conv_output_extent(in, kernel, stride); }

  Volume<Scalar> forward(const Volume<Scalar>& x, Cache* cache) const;
  /// Accumulates parameter gradients into `grad`; returns d loss / d x when
  /// `input_grad` is set (empty volume otherwise).
  Volume<Scalar> backward(const Cache& cache, const Volume<Scalar>& dy, Conv3d* grad,
                          bool input_grad = true) const;

  Conv3d zeros_like() const;
  template <typename F>
  void visit(F&& f) { f(weight); f(bias); }
  template <typename F>
  void visit(F&& f) const { f(weight); f(bias); }

  Triple kernel{3, 3, 3};
  Triple stride{1, 1, 1};
  Mat<Scalar> weight;  // (taps * in) x out
  Mat<Scalar> bias;    // 1 x out
};

/// Convolutional LSTM over the frame axis; gates ordered input, forget,
/// output, candidate.
template <typename Scalar>
class ConvLstm {
 public:
  using scalar_type = Scalar;
  ConvLstm() = default;
  ConvLstm(Index in_channels, Index hidden, Index kernel_hw);

  struct Cache {
    Extent extent;
    Index in_channels = 0;
    bool reverse = false;
    std::vector<Mat<Scalar>> patches;  // per step
    std::vector<Mat<Scalar>> gates;    // activated, per step
    std::vector<Mat<Scalar>> cells;
    std::vector<Mat<Scalar>> tanh_cells;
  };

  void init(std::mt19937_64& rng);
  Index hidden() const { return weight.cols() / 4; }
  Index in_channels() const { return weight.rows() / (kernel_hw * kernel_hw) - hidden(); }

  /// Runs the recurrence forwards in time, or backwards when `reverse` is set.
  Volume<Scalar> forward(const Volume<Scalar>& x, bool reverse, Cache* cache) const;
  Volume<Scalar> backward(const Cache& cache, const Volume<Scalar>& dh, ConvLstm* grad) const;

  ConvLstm zeros_like() const;
  template <typename F>
  void visit(F&& f) { f(weight); f(bias); }
  template <typename F>
  void visit(F&& f) const { f(weight); f(bias); }

  Index kernel_hw = 3;
  Mat<Scalar> weight;  // (k*k*(in+hidden)) x 4*hidden
  Mat<Scalar> bias;    // 1 x 4*hidden
};

/// Bidirectional wrapper; output channels are [forward | backward].
template <typename Scalar>
class BiConvLstm {
 public:
  using scalar_type = Scalar;
  BiConvLstm() = default;
  BiConvLstm(Index in_channels, Index hidden, Index kernel_hw)
      : forward_cell(in_channels, hidden, kernel_hw), backward_cell(in_channels, hidden, kernel_hw) {}

  struct Cache {
    typename ConvLstm<Scalar>::Cache fwd;
    typename ConvLstm<Scalar>::Cache bwd;
  };

  void init(std::mt19937_64& rng) {
    forward_cell.init(rng);
    backward_cell.init(rng);
  }
  Index out_channels() const { return 2 * forward_cell.hidden(); }

  Volume<Scalar> forward(const Volume<Scalar>& x, Cache* cache) const;
  Volume<Scalar> backward(const Cache& cache, const Volume<Scalar>& dy, BiConvLstm* grad) const;

  BiConvLstm zeros_like() const {
    BiConvLstm z;
    z.forward_cell = forward_cell.zeros_like();
    z.backward_cell = backward_cell.zeros_like();
    return z;
  }
  template <typename F>
  void visit(F&& f) { forward_cell.visit(f); backward_cell.visit(f); }
  template <typename F>
  void visit(F&& f) const { forward_cell.visit(f); backward_cell.visit(f); }

  ConvLstm<Scalar> forward_cell;
  ConvLstm<Scalar> backward_cell;
};

/// Fully connected layer over row-vector samples.
template <typename Scalar>
class Dense {
 public:
  using scalar_type = Scalar;
  Dense() = default;
  Dense(Index in, Index out);

  void init(std::mt19937_64& rng);
  Mat<Scalar> forward(const Mat<Scalar>& x) const;
  Mat<Scalar> backward(const Mat<Scalar>& x, const Mat<Scalar>& dy, Dense* grad) const;

  Dense zeros_like() const;
  template <typename F>
  void visit(F&& f) { f(weight); f(bias); }
  template <typename F>
  void visit(F&& f) const { f(weight); f(bias); }

  Mat<Scalar> weight;  // in x out
  Mat<Scalar> bias;    // 1 x out
};

template <typename Model>
Index parameter_count(const Model& model) {
  Index n = 0;
  model.visit([&](const auto& m) { n += m.size(); });
  return n;
}

template <typename Model>
double squared_norm(const Model& model) {
  double s = 0.0;
  model.visit([&](const auto& m) { s += static_cast<double>(m.squaredNorm()); });
  return s;
}

/// Adds `other` into `target`, parameter by parameter (same structure).
template <typename Model>
void accumulate(Model& target, const Model& other, double scale = 1.0) {
  using Scalar = typename Model::scalar_type;
  std::vector<const Mat<Scalar>*> src;
  other.visit([&](const Mat<Scalar>& m) { src.push_back(&m); });
  std::size_t i = 0;
  target.visit([&](Mat<Scalar>& m) { m += static_cast<Scalar>(scale) * *src[i++]; });
}

enum class OptimizerKind { kAdam, kNesterov };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 0.003;
  double momentum = 0.9;  // first-moment decay for Adam
  double beta2 = 0.999;   // Adam only
  double epsilon = 1e-8;  // Adam only
  double clip_norm = 5.0;  // <= 0 disables clipping
};

/// Momentum-accelerated gradient descent with global-norm clipping: either
/// Nesterov momentum or adaptive moment estimation (Adam).
template <typename Model>
class Optimizer {
 public:
  using Scalar = typename Model::scalar_type;

  Optimizer(const Model& model, OptimizerConfig config)
      : config_(config), first_(model.zeros_like()), second_(model.zeros_like()) {}

  /// Applies one update; returns the gradient norm before clipping.
  double step(Model& model, const Model& grad) {
    const double norm = std::sqrt(squared_norm(grad));
    double scale = 1.0;
    if (config_.clip_norm > 0 && norm > config_.clip_norm) scale = config_.clip_norm / norm;
    ++steps_;

    std::vector<const Mat<Scalar>*> g;
    grad.visit([&](const Mat<Scalar>& m) { g.push_back(&m); });
    std::vector<Mat<Scalar>*> m1;
    first_.visit([&](Mat<Scalar>& m) { m1.push_back(&m); });
    std::vector<Mat<Scalar>*> m2;
    second_.visit([&](Mat<Scalar>& m) { m2.push_back(&m); });

    const auto mu = static_cast<Scalar>(config_.momentum);
    const auto lr = static_cast<Scalar>(config_.learning_rate);
    const auto s = static_cast<Scalar>(scale);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto eps = static_cast<Scalar>(config_.epsilon);
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(config_.momentum, steps_));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(config_.beta2, steps_));
    std::size_t i = 0;
    model.visit([&](Mat<Scalar>& p) {
      const Mat<Scalar> gi = s * *g[i];
      Mat<Scalar>& v = *m1[i];
      if (config_.kind == OptimizerKind::kNesterov) {
        v = mu * v - lr * gi;
        p += mu * v - lr * gi;
      } else {
        Mat<Scalar>& w = *m2[i];
        v = mu * v + (Scalar(1) - mu) * gi;
        w = b2 * w + (Scalar(1) - b2) * gi.cwiseAbs2();
        p.array() -= lr * (v.array() / c1) / ((w.array() / c2).sqrt() + eps);
      }
      ++i;
    });
    return norm;
  }

  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  Model first_;
  Model second_;
  long steps_ = 0;
};

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(const std::string& text);

}  // namespace speakloc::nn
