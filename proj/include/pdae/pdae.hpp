#pragma once

// Perturbation distribution autoencoder: encode observations to perturbed
// latents, transport them between conditions with W_hat (a_tgt - a_src), and
// decode stochastically. Trained with energy-score losses.

#include "pdae/adam.hpp"
#include "pdae/energy_terms.hpp"
#include "pdae/genmodel.hpp"
#include "pdae/metrics.hpp"
#include "pdae/mlp.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

namespace pdae {

struct PdaeModel {
  MlpParams encoder;  ///< d_X -> d_Z
  MlpParams decoder;  ///< d_Z + noise_dim -> d_X
  Matrix w_hat;       ///< d_Z x K
  Eigen::Index noise_dim = 0;
  double noise_std = 0.1;
  double beta = 1.0;
  /// Fixed per-column affine standardization: the encoder sees
  /// (x - shift) / scale and decoder outputs are mapped back by shift + scale * out.
  Vector input_shift;
  Vector input_scale;

  Eigen::Index observed_dim() const { return encoder.in_dim(); }
  Eigen::Index latent_dim() const { return encoder.out_dim(); }
  Eigen::Index num_perturbations() const { return w_hat.cols(); }

  void validate() const {
    encoder.validate();
    decoder.validate();
    if (w_hat.rows() != latent_dim()) throw ShapeError("PdaeModel: W_hat rows must equal the encoder output dim");
    if (decoder.in_dim() != latent_dim() + noise_dim) {
      throw ShapeError("PdaeModel: decoder input dim must equal d_Z + noise_dim");
    }
    if (decoder.out_dim() != observed_dim()) throw ShapeError("PdaeModel: decoder output dim must equal d_X");
    if (!(beta > 0.0 && beta < 2.0)) throw std::invalid_argument("PdaeModel: beta must lie in (0, 2)");
    if (noise_std < 0.0) throw std::invalid_argument("PdaeModel: negative noise_std");
    if (input_shift.size() != observed_dim() || input_scale.size() != observed_dim()) {
      throw ShapeError("PdaeModel: standardization vectors must have length d_X");
    }
    if ((input_scale.array() <= 0.0).any()) throw std::invalid_argument("PdaeModel: standardization scale must be > 0");
  }
};

/// Builds a model around given networks with an identity standardization.
inline PdaeModel make_model(MlpParams encoder, MlpParams decoder, Matrix w_hat, Eigen::Index noise_dim,
                            double noise_std, double beta = 1.0) {
  PdaeModel m{std::move(encoder), std::move(decoder), std::move(w_hat), noise_dim, noise_std, beta, {}, {}};
  m.input_shift = Vector::Zero(m.observed_dim());
  m.input_scale = Vector::Ones(m.observed_dim());
  m.validate();
  return m;
}

struct ModelConfig {
  Eigen::Index latent_dim = 2;
  int hidden_layers = 4;
  Eigen::Index width = 64;
  Eigen::Index noise_dim = 0;
  double noise_std = 0.1;
  double beta = 1.0;
};

/// Randomly initialized model. Networks and W_hat use fan-in uniform init.
inline PdaeModel init_model(const ModelConfig& cfg, Eigen::Index observed_dim, Eigen::Index num_perturbations,
                            Rng& rng) {
  MlpParams enc = make_mlp(observed_dim, cfg.latent_dim, cfg.hidden_layers, cfg.width, rng);
  MlpParams dec = make_mlp(cfg.latent_dim + cfg.noise_dim, observed_dim, cfg.hidden_layers, cfg.width, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(num_perturbations));
  Matrix w(cfg.latent_dim, num_perturbations);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  return make_model(std::move(enc), std::move(dec), std::move(w), cfg.noise_dim, cfg.noise_std, cfg.beta);
}

/// Per-column mean/std standardization fitted to pooled observations.
inline void fit_standardization(PdaeModel& model, const std::vector<Domain>& domains) {
  Matrix pooled(0, model.observed_dim());
  for (const auto& d : domains) pooled = vstack(pooled, d.x);
  const Vector mean = column_mean(pooled);
  Vector sd(mean.size());
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    const double var = (pooled.col(j).array() - mean(j)).square().mean();
    sd(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  model.input_shift = mean;
  model.input_scale = sd;
}

/// Observations of one condition within a training minibatch.
struct DomainBatch {
  Label label;
  Matrix x;
};
using Minibatch = std::vector<DomainBatch>;

/// Gradient w.r.t. every trainable part of the model.
struct PdaeGrads {
  MlpParams encoder;
  MlpParams decoder;
  Matrix w_hat;

  static PdaeGrads zeros(const PdaeModel& m) {
    return {m.encoder.zeros_like(), m.decoder.zeros_like(), Matrix::Zero(m.w_hat.rows(), m.w_hat.cols())};
  }
};

namespace detail {

inline Matrix standardize(const PdaeModel& m, const Matrix& x) {
  require_cols(x, m.observed_dim(), "PdaeModel input");
  return (x.rowwise() - m.input_shift.transpose()).array().rowwise() / m.input_scale.transpose().array();
}

inline Matrix destandardize(const PdaeModel& m, const Matrix& out) {
  Matrix x = out.array().rowwise() * m.input_scale.transpose().array();
  x.rowwise() += m.input_shift.transpose();
  return x;
}

/// Chain rule through destandardize: d out = d x * scale (per column).
inline Matrix destandardize_grad(const PdaeModel& m, const Matrix& dx) {
  return dx.array().rowwise() * m.input_scale.transpose().array();
}

inline Matrix with_noise(const PdaeModel& m, const Matrix& z, Rng& rng) {
  if (m.noise_dim == 0) return z;
  return hstack(z, standard_normal(rng, z.rows(), m.noise_dim) * m.noise_std);
}

inline void require_label(const PdaeModel& m, const Label& a, const char* what) {
  if (a.size() != m.num_perturbations()) {
    throw ShapeError(std::string(what) + ": label has length " + std::to_string(a.size()) + ", model expects " +
                     std::to_string(m.num_perturbations()));
  }
}

}  // namespace detail

/// Estimated perturbed latents, one row per observation.
inline Matrix encode(const PdaeModel& model, const Matrix& x) {
  return mlp_forward(model.encoder, detail::standardize(model, x));
}

/// Adds W_hat (a_tgt - a_src) to every row.
inline Matrix transport(const PdaeModel& model, const Matrix& z, const Label& a_src, const Label& a_tgt) {
  detail::require_label(model, a_src, "transport");
  detail::require_label(model, a_tgt, "transport");
  require_cols(z, model.latent_dim(), "transport");
  const Vector shift = model.w_hat * (a_tgt - a_src);
  return z.rowwise() + shift.transpose();
}

/// Decodes with a fresh N(0, noise_std^2 I) draw per row.
inline Matrix decode(const PdaeModel& model, const Matrix& z, Rng& rng) {
  require_cols(z, model.latent_dim(), "decode");
  return detail::destandardize(model, mlp_forward(model.decoder, detail::with_noise(model, z, rng)));
}

/// Decodes with caller-provided noise rows (n x noise_dim).
inline Matrix decode_with_noise(const PdaeModel& model, const Matrix& z, const Matrix& noise) {
  require_cols(z, model.latent_dim(), "decode");
  require_cols(noise, model.noise_dim, "decode noise");
  const Matrix input = model.noise_dim == 0 ? z : hstack(z, noise);
  return detail::destandardize(model, mlp_forward(model.decoder, input));
}

/// Perturbation loss: for every ordered pair of conditions (e, h), including
/// e = h, decode the batch of e transported to a_h and score it against the
/// real batch of h with the negative energy score. Pairs are averaged.
/// For e = h the cross term skips each point's own reconstruction.
inline double perturbation_loss(const PdaeModel& model, const Minibatch& batch, Rng& rng,
                                PdaeGrads* grads = nullptr, double scale = 1.0) {
  const std::size_t p = batch.size();
  if (p == 0) throw std::invalid_argument("perturbation_loss: empty minibatch");
  for (const auto& b : batch) {
    if (b.x.rows() < 2) throw std::invalid_argument("perturbation_loss: every domain batch needs >= 2 points");
    detail::require_label(model, b.label, "perturbation_loss");
  }
  const double pair_weight = 1.0 / static_cast<double>(p * p);
  const double g = scale * pair_weight;
  const Eigen::Index dz = model.latent_dim();
  double total = 0.0;

  for (std::size_t e = 0; e < p; ++e) {
    const auto& src = batch[e];
    const Eigen::Index m = src.x.rows();
    const MlpTape enc_tape = mlp_forward_tape(model.encoder, detail::standardize(model, src.x));
    const Matrix& z = enc_tape.output();

    Matrix z_all(m * static_cast<Eigen::Index>(p), dz);
    for (std::size_t h = 0; h < p; ++h) {
      const Vector shift = model.w_hat * (batch[h].label - src.label);
      z_all.middleRows(static_cast<Eigen::Index>(h) * m, m) = z.rowwise() + shift.transpose();
    }
    const MlpTape dec_tape = mlp_forward_tape(model.decoder, detail::with_noise(model, z_all, rng));
    const Matrix synth_all = detail::destandardize(model, dec_tape.output());
    Matrix d_synth = grads ? Matrix::Zero(synth_all.rows(), synth_all.cols()) : Matrix();

    for (std::size_t h = 0; h < p; ++h) {
      const Matrix synth = synth_all.middleRows(static_cast<Eigen::Index>(h) * m, m);
      const bool self = (h == e);
      if (grads) {
        Matrix ds = Matrix::Zero(m, synth.cols());
        total += pair_weight * cross_mean(synth, batch[h].x, model.beta, self, g, &ds, nullptr);
        total -= pair_weight * 0.5 * within_mean_u(synth, model.beta, -0.5 * g, &ds);
        d_synth.middleRows(static_cast<Eigen::Index>(h) * m, m) = ds;
      } else {
        total += pair_weight * (cross_mean(synth, batch[h].x, model.beta, self) - 0.5 * within_mean_u(synth, model.beta));
      }
    }
    if (!grads) continue;

    const Matrix d_in = mlp_backward(model.decoder, dec_tape, detail::destandardize_grad(model, d_synth), grads->decoder);
    Matrix d_z = Matrix::Zero(m, dz);
    for (std::size_t h = 0; h < p; ++h) {
      const auto block = d_in.block(static_cast<Eigen::Index>(h) * m, 0, m, dz);
      d_z += block;
      const Vector rel = batch[h].label - src.label;
      grads->w_hat.noalias() += block.colwise().sum().transpose() * rel.transpose();
    }
    mlp_backward(model.encoder, enc_tape, d_z, grads->encoder);
  }
  return total;
}

/// Conditional reconstruction loss: two independent decodes of each point's
/// encoding, scored with the conditional energy score, averaged over all
/// points. The encoding is held fixed, so no gradient reaches the encoder.
inline double reconstruction_loss(const PdaeModel& model, const Minibatch& batch, Rng& rng,
                                  PdaeGrads* grads = nullptr, double scale = 1.0) {
  Matrix x(0, model.observed_dim());
  for (const auto& b : batch) x = vstack(x, b.x);
  const Eigen::Index n = x.rows();
  if (n == 0) throw std::invalid_argument("reconstruction_loss: empty minibatch");
  const Matrix z = encode(model, x);
  const Matrix z2 = vstack(z, z);
  const MlpTape tape = mlp_forward_tape(model.decoder, detail::with_noise(model, z2, rng));
  const Matrix out = detail::destandardize(model, tape.output());
  const double beta = model.beta;
  const double w = 1.0 / static_cast<double>(n);
  Matrix d_out = grads ? Matrix::Zero(out.rows(), out.cols()) : Matrix();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector r1 = x.row(i) - out.row(i);
    const Vector r2 = x.row(i) - out.row(n + i);
    const Vector r12 = out.row(i) - out.row(n + i);
    const double n1 = r1.norm(), n2 = r2.norm(), n12 = r12.norm();
    total += 0.5 * w * (pow_norm(n1, beta) + pow_norm(n2, beta) - pow_norm(n12, beta));
    if (grads) {
      const double c = 0.5 * w * scale;
      // d/dxhat ||x - xhat||^b = -s r ; d/dxhat ||xhat - xhat'||^b = s r12
      d_out.row(i) += (-c * pow_norm_grad_factor(n1, beta) * r1 - c * pow_norm_grad_factor(n12, beta) * r12).transpose();
      d_out.row(n + i) += (-c * pow_norm_grad_factor(n2, beta) * r2 + c * pow_norm_grad_factor(n12, beta) * r12).transpose();
    }
  }
  if (grads) mlp_backward(model.decoder, tape, detail::destandardize_grad(model, d_out), grads->decoder);
  return total;
}

/// Prior loss: negative energy score of the pooled estimated basal states
/// encode(x) - W_hat a against fresh N(0, I) draws.
inline double prior_loss(const PdaeModel& model, const Minibatch& batch, Rng& rng, PdaeGrads* grads = nullptr,
                         double scale = 1.0) {
  const Eigen::Index dz = model.latent_dim();
  std::vector<MlpTape> tapes;
  Matrix basal(0, dz);
  for (const auto& b : batch) {
    detail::require_label(model, b.label, "prior_loss");
    tapes.push_back(mlp_forward_tape(model.encoder, detail::standardize(model, b.x)));
    const Vector shift = model.w_hat * b.label;
    basal = vstack(basal, Matrix(tapes.back().output().rowwise() - shift.transpose()));
  }
  if (basal.rows() < 2) throw std::invalid_argument("prior_loss: need >= 2 points");
  const Matrix xi = standard_normal(rng, basal.rows(), dz);
  Matrix d_basal = grads ? Matrix::Zero(basal.rows(), dz) : Matrix();
  Matrix* db = grads ? &d_basal : nullptr;
  double value = cross_mean(xi, basal, model.beta, false, scale, nullptr, db);
  value -= 0.5 * within_mean_u(basal, model.beta, -0.5 * scale, db);
  if (grads) {
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const Eigen::Index m = batch[k].x.rows();
      const auto block = d_basal.middleRows(offset, m);
      mlp_backward(model.encoder, tapes[k], block, grads->encoder);
      grads->w_hat.noalias() -= block.colwise().sum().transpose() * batch[k].label.transpose();
      offset += m;
    }
  }
  return value;
}

/// Group norm sum_k ||column_k(W_hat)||_2.
inline double sparsity_penalty(const Matrix& w_hat, Matrix* grad = nullptr, double scale = 1.0) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < w_hat.cols(); ++k) {
    const double n = w_hat.col(k).norm();
    total += n;
    if (grad && n > 0.0) grad->col(k) += scale * w_hat.col(k) / n;
  }
  return total;
}

struct TrainConfig {
  double lambda_rec = 0.0;
  double lambda_prior = 0.0;
  double lambda_sparsity = 0.0;
  double lr_encoder = 0.005;
  double lr_decoder = 0.005;
  double lr_w = 0.005;
  /// Cosine decay of all rates to this fraction by the last step; 1 keeps them constant.
  double lr_final_fraction = 1.0;
  Eigen::Index batch_size = 1024;
  int epochs = 500;
  std::uint64_t seed = 0;
  bool standardize = true;

  void validate() const {
    if (lambda_rec < 0 || lambda_prior < 0 || lambda_sparsity < 0)
      throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
    if (!(lr_encoder > 0 && lr_decoder > 0 && lr_w > 0))
      throw std::invalid_argument("TrainConfig: learning rates must be > 0");
    if (!(lr_final_fraction > 0 && lr_final_fraction <= 1))
      throw std::invalid_argument("TrainConfig: lr_final_fraction must be in (0, 1]");
    if (batch_size < 4) throw std::invalid_argument("TrainConfig: batch_size must be >= 4");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  }
};

struct OptimizerStates {
  AdamState encoder;
  AdamState decoder;
  AdamState w_hat;
};

struct StepLosses {
  double perturbation = 0.0;
  double reconstruction = 0.0;
  double prior = 0.0;
  double sparsity = 0.0;

  double weighted(const TrainConfig& cfg) const {
    return perturbation + cfg.lambda_rec * reconstruction + cfg.lambda_prior * prior +
           cfg.lambda_sparsity * sparsity;
  }
};

/// Unweighted loss components of one minibatch; gradients of the weighted
/// objective are accumulated into *grads. Reconstruction only
/// reaches the decoder, prior the encoder and W_hat, sparsity only W_hat.
inline StepLosses batch_losses(const PdaeModel& model, const Minibatch& batch, const TrainConfig& cfg, Rng& rng,
                               PdaeGrads* grads) {
  StepLosses l;
  l.perturbation = perturbation_loss(model, batch, rng, grads, 1.0);
  if (cfg.lambda_rec > 0) l.reconstruction = reconstruction_loss(model, batch, rng, grads, cfg.lambda_rec);
  if (cfg.lambda_prior > 0) l.prior = prior_loss(model, batch, rng, grads, cfg.lambda_prior);
  if (cfg.lambda_sparsity > 0)
    l.sparsity = sparsity_penalty(model.w_hat, grads ? &grads->w_hat : nullptr, cfg.lambda_sparsity);
  return l;
}

/// One optimization step: decoder on pert + l_R rec, encoder on pert + l_prior
/// prior, W_hat on pert + l_prior prior + l_S sparsity, each with its own Adam.
inline StepLosses train_step(PdaeModel& model, const Minibatch& batch, const TrainConfig& cfg,
                             OptimizerStates& opt, Rng& rng) {
  if (batch.size() < 2) throw std::invalid_argument("train_step: minibatch must span >= 2 domains");
  PdaeGrads g = PdaeGrads::zeros(model);
  const StepLosses l = batch_losses(model, batch, cfg, rng, &g);
  if (!std::isfinite(l.weighted(cfg)) || !std::isfinite(l.reconstruction) || !std::isfinite(l.prior)) {
    std::ostringstream os;
    os << "train_step: non-finite loss (perturbation=" << l.perturbation << ", reconstruction=" << l.reconstruction
       << ", prior=" << l.prior << ", sparsity=" << l.sparsity << ")";
    throw NonFiniteError(os.str());
  }
  adam_step(model.decoder, g.decoder, opt.decoder, cfg.lr_decoder);
  adam_step(model.encoder, g.encoder, opt.encoder, cfg.lr_encoder);
  adam_step(model.w_hat, g.w_hat, opt.w_hat, cfg.lr_w);
  return l;
}

struct TrainHistory {
  std::vector<StepLosses> epochs;  ///< mean per-step losses of each epoch
};

/// Epoch loop. Each step draws batch_size / (#domains) points per domain
/// from per-domain shuffles; a domain that runs out is reshuffled and
/// continues. An epoch covers the largest domain once.
inline TrainHistory train(PdaeModel& model, const std::vector<Domain>& domains, const TrainConfig& cfg) {
  cfg.validate();
  if (domains.size() < 2) throw std::invalid_argument("train: need >= 2 domains");
  for (const auto& d : domains)
    if (d.x.rows() == 0) throw std::invalid_argument("train: empty domain");
  const Eigen::Index per = cfg.batch_size / static_cast<Eigen::Index>(domains.size());
  if (per < 2) throw std::invalid_argument("train: batch_size too small for the number of domains");
  Rng rng(cfg.seed);
  if (cfg.standardize && cfg.epochs > 0) fit_standardization(model, domains);
  OptimizerStates opt;
  TrainHistory history;

  std::vector<std::vector<Eigen::Index>> order(domains.size());
  std::vector<std::size_t> cursor(domains.size(), 0);
  Eigen::Index largest = 0;
  for (std::size_t e = 0; e < domains.size(); ++e) {
    order[e].resize(static_cast<std::size_t>(domains[e].x.rows()));
    std::iota(order[e].begin(), order[e].end(), Eigen::Index{0});
    std::shuffle(order[e].begin(), order[e].end(), rng.engine());
    largest = std::max(largest, domains[e].x.rows());
  }
  const Eigen::Index steps = (largest + per - 1) / per;
  const double total_steps = static_cast<double>(steps) * cfg.epochs;
  TrainConfig step_cfg = cfg;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    StepLosses sum;
    for (Eigen::Index s = 0; s < steps; ++s) {
      Minibatch batch;
      for (std::size_t e = 0; e < domains.size(); ++e) {
        std::vector<Eigen::Index> idx;
        idx.reserve(static_cast<std::size_t>(per));
        while (static_cast<Eigen::Index>(idx.size()) < per) {
          if (cursor[e] == order[e].size()) {
            std::shuffle(order[e].begin(), order[e].end(), rng.engine());
            cursor[e] = 0;
          }
          idx.push_back(order[e][cursor[e]++]);
        }
        batch.push_back({domains[e].label, take_rows(domains[e].x, idx)});
      }
      if (cfg.lr_final_fraction < 1.0) {
        const double t = static_cast<double>(epoch * steps + s) / std::max(1.0, total_steps - 1.0);
        const double f = cfg.lr_final_fraction + (1.0 - cfg.lr_final_fraction) * 0.5 * (1.0 + std::cos(M_PI * t));
        step_cfg.lr_encoder = cfg.lr_encoder * f;
        step_cfg.lr_decoder = cfg.lr_decoder * f;
        step_cfg.lr_w = cfg.lr_w * f;
      }
      const StepLosses l = train_step(model, batch, step_cfg, opt, rng);
      sum.perturbation += l.perturbation;
      sum.reconstruction += l.reconstruction;
      sum.prior += l.prior;
      sum.sparsity += l.sparsity;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    history.epochs.push_back({sum.perturbation * inv, sum.reconstruction * inv, sum.prior * inv, sum.sparsity * inv});
  }
  return history;
}

/// Mixture weights over source domains: nonnegative, summing to one.
struct PredictionWeights {
  Vector omega;

  static PredictionWeights uniform(std::size_t n) {
    return {Vector::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n))};
  }
  static PredictionWeights one_hot(std::size_t n, std::size_t e) {
    Vector w = Vector::Zero(static_cast<Eigen::Index>(n));
    w(static_cast<Eigen::Index>(e)) = 1.0;
    return {w};
  }

  void validate(std::size_t num_domains) const {
    if (omega.size() != static_cast<Eigen::Index>(num_domains))
      throw ShapeError("PredictionWeights: need one weight per source domain");
    if ((omega.array() < 0.0).any()) throw std::invalid_argument("PredictionWeights: weights must be >= 0");
    if (omega.sum() == 0.0) throw std::invalid_argument("PredictionWeights: all weights are zero");
    if (std::abs(omega.sum() - 1.0) > 1e-9) throw std::invalid_argument("PredictionWeights: weights must sum to 1");
  }
};

/// Sample from sum_e omega_e P_hat(e -> test): every source domain is
/// encoded, transported to a_test and decoded; the union is resampled by
/// picking a domain with probability omega_e and a point uniformly within it.
/// n_out = 0 selects the largest source-domain size.
inline SampleSet predict(const PdaeModel& model, const std::vector<Domain>& domains, const Label& a_test,
                         const PredictionWeights& weights, Rng& rng, Eigen::Index n_out = 0) {
  weights.validate(domains.size());
  detail::require_label(model, a_test, "predict");
  std::vector<Matrix> synth(domains.size());
  Eigen::Index largest = 0;
  for (std::size_t e = 0; e < domains.size(); ++e) {
    largest = std::max(largest, domains[e].x.rows());
    if (weights.omega(static_cast<Eigen::Index>(e)) == 0.0) continue;
    if (domains[e].x.rows() == 0) throw std::invalid_argument("predict: empty source domain with positive weight");
    synth[e] = decode(model, transport(model, encode(model, domains[e].x), domains[e].label, a_test), rng);
  }
  if (n_out <= 0) n_out = largest;
  std::discrete_distribution<std::size_t> pick(weights.omega.data(), weights.omega.data() + weights.omega.size());
  Matrix out(n_out, model.observed_dim());
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const std::size_t e = pick(rng.engine());
    out.row(i) = synth[e].row(static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(synth[e].rows()))));
  }
  return out;
}

/// Entry (e, h) = MMD^2 between P_hat(e -> h) and the observations of h,
/// Gaussian kernel with median-heuristic bandwidth. Each set is subsampled
/// to at most max_points rows.
inline Matrix goodness_of_fit(const PdaeModel& model, const std::vector<Domain>& domains, Rng& rng,
                              Eigen::Index max_points = 512) {
  const auto n = static_cast<Eigen::Index>(domains.size());
  auto subsample = [&](const Matrix& m) {
    if (m.rows() <= max_points) return m;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    idx.resize(static_cast<std::size_t>(max_points));
    return take_rows(m, idx);
  };
  for (const auto& d : domains)
    if (d.x.rows() < 2) throw std::invalid_argument("goodness_of_fit: every domain needs >= 2 points");
  Matrix out(n, n);
  for (Eigen::Index e = 0; e < n; ++e) {
    const auto& src = domains[static_cast<std::size_t>(e)];
    const Matrix xs = subsample(src.x);
    const Matrix z = encode(model, xs);
    for (Eigen::Index h = 0; h < n; ++h) {
      const auto& tgt = domains[static_cast<std::size_t>(h)];
      const Matrix synth = decode(model, transport(model, z, src.label, tgt.label), rng);
      out(e, h) = mmd_squared_median(synth, subsample(tgt.x));
    }
  }
  return out;
}

}  // namespace pdae
