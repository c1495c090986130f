#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "msbo/random.hpp"

namespace msbo {

enum class OutputScaling { none, sigmoid };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Fully connected network with LeakyReLU hidden layers and an optional
/// sigmoid on the output. Inputs and outputs of the batch API are columns.
class MlpFunction {
 public:
  MlpFunction() = default;
  MlpFunction(std::vector<DenseLayer> layers, OutputScaling scaling, double leaky_slope = 0.01)
      : layers_(std::move(layers)), scaling_(scaling), slope_(leaky_slope) {}

  [[nodiscard]] std::size_t in_dim() const { return static_cast<std::size_t>(layers_.front().weight.cols()); }
  [[nodiscard]] std::size_t out_dim() const { return static_cast<std::size_t>(layers_.back().weight.rows()); }
  [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  [[nodiscard]] std::vector<DenseLayer>& layers() noexcept { return layers_; }
  [[nodiscard]] OutputScaling scaling() const noexcept { return scaling_; }
  [[nodiscard]] double leaky_slope() const noexcept { return slope_; }

  /// Network output before the optional sigmoid.
  [[nodiscard]] Eigen::MatrixXd forward_raw(const Eigen::MatrixXd& in) const {
    Eigen::MatrixXd a = in;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::MatrixXd z = layers_[l].weight * a;
      z.colwise() += layers_[l].bias;
      if (l + 1 < layers_.size()) z = z.array().max(slope_ * z.array());
      a = std::move(z);
    }
    return a;
  }

  [[nodiscard]] Eigen::MatrixXd forward(const Eigen::MatrixXd& in) const {
    Eigen::MatrixXd raw = forward_raw(in);
    if (scaling_ == OutputScaling::sigmoid) raw = (1.0 / (1.0 + (-raw.array()).exp())).matrix();
    return raw;
  }

  [[nodiscard]] Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return forward(x); }

  /// Vector-Jacobian product: gradient of upstream . f(x) with respect to x.
  [[nodiscard]] Eigen::VectorXd vjp(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) const {
    std::vector<Eigen::VectorXd> pre;
    pre.reserve(layers_.size());
    Eigen::VectorXd a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Eigen::VectorXd z = layers_[l].weight * a + layers_[l].bias;
      pre.push_back(z);
      a = l + 1 < layers_.size() ? Eigen::VectorXd(z.array().max(slope_ * z.array())) : z;
    }
    Eigen::VectorXd g = upstream;
    if (scaling_ == OutputScaling::sigmoid) {
      const Eigen::ArrayXd s = 1.0 / (1.0 + (-a.array()).exp());
      g = (g.array() * s * (1.0 - s)).matrix();
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
      if (l + 1 < layers_.size()) g = (g.array() * (pre[l].array() > 0.0).select(1.0, Eigen::ArrayXd::Constant(g.size(), slope_))).matrix();
      g = layers_[l].weight.transpose() * g;
    }
    return g;
  }

  /// out x in Jacobian.
  [[nodiscard]] Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(out_dim()), x.size());
    for (Eigen::Index k = 0; k < j.rows(); ++k)
      j.row(k) = vjp(x, Eigen::VectorXd::Unit(j.rows(), k)).transpose();
    return j;
  }

 private:
  std::vector<DenseLayer> layers_;
  OutputScaling scaling_ = OutputScaling::none;
  double slope_ = 0.01;
};

struct MlpTrainOptions {
  std::vector<std::size_t> hidden{64, 128, 32};
  int epochs = 800;
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  double leaky_slope = 0.01;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases.
inline MlpFunction init_mlp(std::size_t in, std::size_t out, const MlpTrainOptions& opt, OutputScaling scaling,
                            StreamRng& rng) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), opt.hidden.begin(), opt.hidden.end());
  dims.push_back(out);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    DenseLayer layer{Eigen::MatrixXd(dims[l + 1], dims[l]), Eigen::VectorXd(dims[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = bound * (2.0 * rng.uniform() - 1.0);
    layers.push_back(std::move(layer));
  }
  return MlpFunction(std::move(layers), scaling, opt.leaky_slope);
}

/// Mini-batch Adam on mean squared error of the raw (pre-sigmoid) output.
/// `x` is in x n, `y` is out x n. Returns the final full-data MSE.
inline double train_mlp(MlpFunction& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MlpTrainOptions& opt,
                        StreamRng& rng) {
  auto& layers = net.layers();
  const std::size_t nl = layers.size();
  const double slope = net.leaky_slope();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<DenseLayer> m1, m2;
  for (const auto& l : layers) {
    m1.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    m2.push_back(m1.back());
  }
  const auto n = static_cast<std::size_t>(x.cols());
  const std::size_t batch = std::max<std::size_t>(1, std::min(opt.batch_size, n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<Eigen::MatrixXd> acts(nl + 1), pre(nl);
  long step = 0;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t b0 = 0; b0 < n; b0 += batch) {
      const std::size_t bn = std::min(batch, n - b0);
      Eigen::MatrixXd xb(x.rows(), static_cast<Eigen::Index>(bn)), yb(y.rows(), static_cast<Eigen::Index>(bn));
      for (std::size_t k = 0; k < bn; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(order[b0 + k]));
        yb.col(static_cast<Eigen::Index>(k)) = y.col(static_cast<Eigen::Index>(order[b0 + k]));
      }
      acts[0] = xb;
      for (std::size_t l = 0; l < nl; ++l) {
        pre[l] = layers[l].weight * acts[l];
        pre[l].colwise() += layers[l].bias;
        acts[l + 1] = l + 1 < nl ? Eigen::MatrixXd(pre[l].array().max(slope * pre[l].array())) : pre[l];
      }
      // d(mean over batch and outputs of squared error)
      Eigen::MatrixXd g = 2.0 * (acts[nl] - yb) / static_cast<double>(bn * static_cast<std::size_t>(y.rows()));
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t l = nl; l-- > 0;) {
        if (l + 1 < nl) g = (g.array() * (pre[l].array() > 0.0).select(1.0, Eigen::ArrayXXd::Constant(g.rows(), g.cols(), slope))).matrix();
        const Eigen::MatrixXd gw = g * acts[l].transpose();
        const Eigen::VectorXd gb = g.rowwise().sum();
        if (l > 0) g = layers[l].weight.transpose() * g;
        m1[l].weight = beta1 * m1[l].weight + (1.0 - beta1) * gw;
        m2[l].weight = beta2 * m2[l].weight + (1.0 - beta2) * gw.cwiseAbs2();
        m1[l].bias = beta1 * m1[l].bias + (1.0 - beta1) * gb;
        m2[l].bias = beta2 * m2[l].bias + (1.0 - beta2) * gb.cwiseAbs2();
        layers[l].weight.array() -=
            opt.learning_rate * (m1[l].weight.array() / c1) / ((m2[l].weight.array() / c2).sqrt() + eps);
        layers[l].bias.array() -= opt.learning_rate * (m1[l].bias.array() / c1) / ((m2[l].bias.array() / c2).sqrt() + eps);
      }
    }
  }
  return (net.forward_raw(x) - y).squaredNorm() / static_cast<double>(x.cols() * y.rows());
}

}  // namespace msbo
