#pragma once

#include "pdae/mlp.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace pdae {

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators for one parameter group, stored flat in the
/// group's parameter visiting order.
struct AdamState {
  AdamConfig config;
  std::vector<double> first;
  std::vector<double> second;
  long step = 0;
};

namespace detail {

template <typename F>
void visit_blocks(MlpParams& p, const MlpParams& g, F&& f) {
  if (p.layers.size() != g.layers.size()) throw ShapeError("adam_step: layer count mismatch");
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& pl = p.layers[i];
    const auto& gl = g.layers[i];
    if (pl.weight.rows() != gl.weight.rows() || pl.weight.cols() != gl.weight.cols() ||
        pl.bias.size() != gl.bias.size()) {
      throw ShapeError("adam_step: gradient shape mismatch in layer " + std::to_string(i));
    }
    f(std::span<double>(pl.weight.data(), pl.weight.size()),
      std::span<const double>(gl.weight.data(), gl.weight.size()));
    f(std::span<double>(pl.bias.data(), pl.bias.size()), std::span<const double>(gl.bias.data(), gl.bias.size()));
  }
}

template <typename F>
void visit_blocks(Matrix& p, const Matrix& g, F&& f) {
  if (p.rows() != g.rows() || p.cols() != g.cols()) throw ShapeError("adam_step: gradient shape mismatch");
  f(std::span<double>(p.data(), p.size()), std::span<const double>(g.data(), g.size()));
}

}  // namespace detail

/// Bias-corrected Adam update, in place. A non-finite gradient rejects the
/// whole step before any parameter or moment is touched.
template <typename Params>
void adam_step(Params& params, const Params& grads, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  bool finite = true;
  std::size_t total = 0;
  detail::visit_blocks(params, grads, [&](std::span<double>, std::span<const double> g) {
    for (double v : g) finite = finite && std::isfinite(v);
    total += g.size();
  });
  if (!finite) throw NonFiniteError("adam_step: non-finite gradient");
  if (state.first.empty()) {
    state.first.assign(total, 0.0);
    state.second.assign(total, 0.0);
  } else if (state.first.size() != total) {
    throw ShapeError("adam_step: optimizer state does not match parameters");
  }
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  std::size_t k = 0;
  detail::visit_blocks(params, grads, [&](std::span<double> p, std::span<const double> g) {
    for (std::size_t i = 0; i < p.size(); ++i, ++k) {
      double& m = state.first[k];
      double& v = state.second[k];
      m = c.beta1 * m + (1.0 - c.beta1) * g[i];
      v = c.beta2 * v + (1.0 - c.beta2) * g[i] * g[i];
      p[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
    }
  });
}

}  // namespace pdae
