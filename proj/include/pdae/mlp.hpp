#pragma once

#include "pdae/numeric.hpp"

#include <vector>

namespace pdae {

/// One affine map out = in * weight^T + bias. weight is (out_dim x in_dim).
struct Layer {
  Matrix weight;
  Vector bias;

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
};

/// Feed-forward network: tanh on every hidden layer, identity on the output.
/// Gradients use the same type, one entry per parameter.
struct MlpParams {
  std::vector<Layer> layers;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  /// Same shapes, all zeros.
  MlpParams zeros_like() const {
    MlpParams z;
    for (const auto& l : layers) {
      z.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
    }
    return z;
  }

  /// Visit every scalar parameter in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    for (auto& l : layers) {
      for (Eigen::Index i = 0; i < l.weight.size(); ++i) f(l.weight.data()[i]);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) f(l.bias.data()[i]);
    }
  }

  void validate() const {
    if (layers.empty()) throw ShapeError("MlpParams: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].bias.size() != layers[i].out_dim()) throw ShapeError("MlpParams: bias/weight mismatch");
      if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim()) {
        throw ShapeError("MlpParams: layer " + std::to_string(i) + " expects input " +
                         std::to_string(layers[i].in_dim()) + ", previous layer emits " +
                         std::to_string(layers[i - 1].out_dim()));
      }
    }
  }

  MlpParams& operator+=(const MlpParams& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    return *this;
  }
  MlpParams& operator*=(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    return *this;
  }
  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
  bool operator==(const MlpParams& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].weight.rows() != o.layers[i].weight.rows() ||
          layers[i].weight.cols() != o.layers[i].weight.cols() || layers[i].weight != o.layers[i].weight ||
          layers[i].bias != o.layers[i].bias) {
        return false;
      }
    }
    return true;
  }
};

/// Fan-in scaled uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline MlpParams make_mlp(const std::vector<Eigen::Index>& dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("make_mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    Layer l{Matrix(dims[i + 1], dims[i]), Vector(dims[i + 1])};
    for (Eigen::Index k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = rng.uniform(-bound, bound);
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) l.bias(k) = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(l));
  }
  return p;
}

/// `hidden_layers` hidden layers of width `width` between in and out.
inline MlpParams make_mlp(Eigen::Index in, Eigen::Index out, int hidden_layers, Eigen::Index width, Rng& rng) {
  std::vector<Eigen::Index> dims{in};
  for (int i = 0; i < hidden_layers; ++i) dims.push_back(width);
  dims.push_back(out);
  return make_mlp(dims, rng);
}

/// Single affine layer out = in * m^T + b.
inline MlpParams affine_mlp(const Matrix& m, const Vector& b) {
  MlpParams p;
  p.layers.push_back({m, b});
  p.validate();
  return p;
}

inline MlpParams identity_mlp(Eigen::Index d) {
  return affine_mlp(Matrix::Identity(d, d), Vector::Zero(d));
}

/// tanh through the vectorized exp: 1 - 2 / (e^{2x} + 1). Saturates
/// cleanly to +-1 when the exponential over- or underflows.
inline Matrix tanh_activation(const Matrix& x) {
  return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix();
}

/// Activations retained for the backward pass. acts[0] is the input,
/// acts[i] the post-activation output of layer i-1.
struct MlpTape {
  std::vector<Matrix> acts;
  const Matrix& output() const { return acts.back(); }
};

inline MlpTape mlp_forward_tape(const MlpParams& p, const Matrix& input) {
  p.validate();
  if (input.cols() != p.in_dim()) {
    throw ShapeError("mlp_forward: input is " + shape_str(input.rows(), input.cols()) + ", network expects " +
                     std::to_string(p.in_dim()) + " columns");
  }
  MlpTape tape;
  tape.acts.reserve(p.layers.size() + 1);
  tape.acts.push_back(input);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const auto& l = p.layers[i];
    Matrix h = tape.acts.back() * l.weight.transpose();
    h.rowwise() += l.bias.transpose();
    if (i + 1 < p.layers.size()) h = tanh_activation(h);
    tape.acts.push_back(std::move(h));
  }
  return tape;
}

inline Matrix mlp_forward(const MlpParams& p, const Matrix& input) {
  return std::move(mlp_forward_tape(p, input).acts.back());
}

/// Reverse pass. Accumulates d loss / d theta into `grads` given
/// d loss / d output, and returns d loss / d input.
inline Matrix mlp_backward(const MlpParams& p, const MlpTape& tape, const Matrix& d_output, MlpParams& grads) {
  if (d_output.rows() != tape.output().rows() || d_output.cols() != tape.output().cols()) {
    throw ShapeError("mlp_backward: output gradient shape mismatch");
  }
  Matrix delta = d_output;
  for (std::size_t k = p.layers.size(); k-- > 0;) {
    const auto& l = p.layers[k];
    if (k + 1 < p.layers.size()) {
      // tanh' = 1 - tanh^2, tanh output stored in acts[k+1]
      delta.array() *= 1.0 - tape.acts[k + 1].array().square();
    }
    grads.layers[k].weight.noalias() += delta.transpose() * tape.acts[k];
    grads.layers[k].bias += delta.colwise().sum().transpose();
    delta = delta * l.weight;
  }
  return delta;
}

}  // namespace pdae
