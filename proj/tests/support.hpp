#pragma once

#include "pdae/pdae.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace pdae::testing {

/// Worst relative error between analytic and central-difference gradients
/// over every scalar reachable through `visit`.
/// rel = |a - n| / max(|a|, |n|, floor)
struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// `params` are visited as a flat list of references; `loss` re-evaluates
/// with the current values.
inline GradCheck check_gradients(const std::vector<double*>& params, const std::vector<double>& analytic,
                                 const std::function<double()>& loss, double step = 1e-5) {
  GradCheck r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& p = *params[i];
    const double saved = p;
    p = saved + step;
    const double up = loss();
    p = saved - step;
    const double down = loss();
    p = saved;
    r.max_rel = std::max(r.max_rel, rel_error(analytic[i], (up - down) / (2.0 * step)));
    ++r.checked;
  }
  return r;
}

inline void collect(MlpParams& p, const MlpParams& g, std::vector<double*>& ptrs, std::vector<double>& vals) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    for (Eigen::Index i = 0; i < p.layers[l].weight.size(); ++i) {
      ptrs.push_back(p.layers[l].weight.data() + i);
      vals.push_back(g.layers[l].weight.data()[i]);
    }
    for (Eigen::Index i = 0; i < p.layers[l].bias.size(); ++i) {
      ptrs.push_back(p.layers[l].bias.data() + i);
      vals.push_back(g.layers[l].bias.data()[i]);
    }
  }
}

inline void collect(Matrix& p, const Matrix& g, std::vector<double*>& ptrs, std::vector<double>& vals) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    ptrs.push_back(p.data() + i);
    vals.push_back(g.data()[i]);
  }
}

using LossFn = double (*)(const PdaeModel&, const Minibatch&, Rng&, PdaeGrads*, double);

/// Small random model and batch for gradient checks. Noise draws are frozen
/// by replaying a copied Rng.
struct ToyProblem {
  PdaeModel model;
  Minibatch batch;
};

inline ToyProblem make_toy(std::uint64_t seed, Eigen::Index domains = 2, Eigen::Index per_domain = 4,
                           Eigen::Index noise_dim = 1, double beta = 1.0) {
  Rng rng(seed);
  ModelConfig mc;
  mc.latent_dim = 2;
  mc.hidden_layers = 1;
  mc.width = 5;
  mc.noise_dim = noise_dim;
  mc.noise_std = 0.5;
  mc.beta = beta;
  ToyProblem t{init_model(mc, 2, 3, rng), {}};
  t.model.input_shift = standard_normal(rng, 2, 1).col(0) * 0.1;
  t.model.input_scale = Vector::Constant(2, 1.3);
  for (Eigen::Index e = 0; e < domains; ++e) {
    Label a = Label::Zero(3);
    if (e > 0) a(e % 3) = 1.0 + 0.5 * static_cast<double>(e);
    t.batch.push_back({a, standard_normal(rng, per_domain, 2)});
  }
  return t;
}

/// Gradient check of one loss over decoder, W_hat and, unless the loss holds
/// the encoding fixed, the encoder.
inline GradCheck check_loss(ToyProblem t, LossFn fn, std::uint64_t noise_seed, bool through_encoder = true) {
  PdaeGrads g = PdaeGrads::zeros(t.model);
  {
    Rng r(noise_seed);
    fn(t.model, t.batch, r, &g, 1.0);
  }
  std::vector<double*> ptrs;
  std::vector<double> vals;
  if (through_encoder) collect(t.model.encoder, g.encoder, ptrs, vals);
  collect(t.model.decoder, g.decoder, ptrs, vals);
  collect(t.model.w_hat, g.w_hat, ptrs, vals);
  return check_gradients(ptrs, vals, [&] {
    Rng r(noise_seed);
    return fn(t.model, t.batch, r, nullptr, 1.0);
  });
}

}  // namespace pdae::testing
