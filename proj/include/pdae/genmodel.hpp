#pragma once

// Ground-truth data-generating process: latent mean shifts Z = Z_base + W a,
// pushed through a mixing function, optionally with appended noise columns.
// Also the linear-SEM shift-intervention sampler.

#include "pdae/numeric.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <variant>
#include <vector>

namespace pdae {

/// Perturbation label a in R^K.
using Label = Vector;

/// x = e^{z1} (cos z2, sin z2). Requires d_Z = 2.
struct ComplexExpMixing {};
struct IdentityMixing {};
/// x = M z + b
struct AffineMixing {
  Matrix m;
  Vector b;
};
/// Latents of a linear SEM; mixing is the identity on latents, the SEM
/// structure itself is realized by sample_sem_intervention.
struct LinearSemMixing {
  Matrix b;
};
using MixingSpec = std::variant<ComplexExpMixing, IdentityMixing, AffineMixing, LinearSemMixing>;

struct GroundTruthModel {
  Matrix w;                         ///< d_Z x K
  Vector base_mean;                 ///< d_Z
  double base_std = 1.0;            ///< sigma
  std::optional<Matrix> base_factor;  ///< L: Z_base = mean + sigma * L xi; identity when unset
  MixingSpec mixing = IdentityMixing{};
  Eigen::Index noise_dims = 0;      ///< appended N(0, noise_std^2) columns
  double noise_std = 0.0;

  Eigen::Index latent_dim() const { return w.rows(); }
  Eigen::Index num_perturbations() const { return w.cols(); }
  Eigen::Index signal_dim() const;
  Eigen::Index observed_dim() const { return signal_dim() + noise_dims; }

  void validate() const {
    if (base_std < 0.0 || noise_std < 0.0) throw std::invalid_argument("GroundTruthModel: negative std");
    if (base_mean.size() != w.rows()) throw ShapeError("GroundTruthModel: base_mean length must equal d_Z");
    if (base_factor && (base_factor->rows() != w.rows() || base_factor->cols() != w.rows())) {
      throw ShapeError("GroundTruthModel: base_factor must be d_Z x d_Z");
    }
    if (std::holds_alternative<ComplexExpMixing>(mixing) && w.rows() != 2) {
      throw ShapeError("GroundTruthModel: complex exponential mixing needs d_Z = 2");
    }
    if (const auto* a = std::get_if<AffineMixing>(&mixing); a && (a->m.cols() != w.rows() || a->b.size() != a->m.rows())) {
      throw ShapeError("GroundTruthModel: affine mixing shape");
    }
  }
};

/// Observations of one experimental condition.
struct Domain {
  Label label;
  Matrix x;
  std::optional<Matrix> z_pert;  ///< ground-truth latents, diagnostics only
};

inline Eigen::Index mixing_output_dim(const MixingSpec& spec, Eigen::Index latent_dim) {
  if (const auto* a = std::get_if<AffineMixing>(&spec)) return a->m.rows();
  return latent_dim;
}

inline Eigen::Index GroundTruthModel::signal_dim() const { return mixing_output_dim(mixing, latent_dim()); }

inline Matrix sample_latents(const GroundTruthModel& model, const Label& a, Eigen::Index n, Rng& rng) {
  model.validate();
  if (a.size() != model.num_perturbations()) {
    throw ShapeError("sample_latents: label has length " + std::to_string(a.size()) + ", model expects " +
                     std::to_string(model.num_perturbations()));
  }
  const Vector mean = model.base_mean + model.w * a;
  Matrix xi = standard_normal(rng, n, model.latent_dim()) * model.base_std;
  if (model.base_factor) xi = xi * model.base_factor->transpose();
  xi.rowwise() += mean.transpose();
  return xi;
}

inline Matrix mix(const MixingSpec& spec, const Matrix& z) {
  return std::visit(
      [&](const auto& s) -> Matrix {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ComplexExpMixing>) {
          require_cols(z, 2, "mix(complex exponential)");
          Matrix x(z.rows(), 2);
          for (Eigen::Index i = 0; i < z.rows(); ++i) {
            const double r = std::exp(z(i, 0));
            x(i, 0) = r * std::cos(z(i, 1));
            x(i, 1) = r * std::sin(z(i, 1));
          }
          return x;
        } else if constexpr (std::is_same_v<T, AffineMixing>) {
          require_cols(z, s.m.cols(), "mix(affine)");
          Matrix x = z * s.m.transpose();
          x.rowwise() += s.b.transpose();
          return x;
        } else if constexpr (std::is_same_v<T, LinearSemMixing>) {
          require_cols(z, s.b.rows(), "mix(linear SEM)");
          return z;
        } else {
          return z;
        }
      },
      spec);
}

/// Analytic inverse of the complex exponential on the strip z2 in (-pi, pi].
inline Matrix complex_exp_inverse(const Matrix& x) {
  require_cols(x, 2, "complex_exp_inverse");
  Matrix z(x.rows(), 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    z(i, 0) = std::log(x.row(i).norm());
    z(i, 1) = std::atan2(x(i, 1), x(i, 0));
  }
  return z;
}

/// Samples n observations of condition `a`. Noise columns follow the signal columns.
inline Domain generate_domain(const GroundTruthModel& model, const Label& a, Eigen::Index n, Rng& rng,
                              bool keep_latents = true) {
  if (n < 1) throw std::invalid_argument("generate_domain: n must be >= 1");
  Matrix z = sample_latents(model, a, n, rng);
  Matrix x = mix(model.mixing, z);
  if (model.noise_dims > 0) x = hstack(x, standard_normal(rng, n, model.noise_dims) * model.noise_std);
  Domain d{a, std::move(x), std::nullopt};
  if (keep_latents) d.z_pert = std::move(z);
  return d;
}

/// Largest absolute eigenvalue.
inline double spectral_radius(const Matrix& b) {
  if (b.rows() != b.cols()) throw ShapeError("spectral_radius: matrix must be square");
  if (b.rows() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(b), false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

class UnstableSemError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_stable(const Matrix& b) {
  const double rho = spectral_radius(b);
  if (!(rho < 1.0)) throw UnstableSemError("unstable SEM: spectral radius " + std::to_string(rho) + " >= 1");
}

/// W = (I - B^T)^{-1}: shift interventions in the SEM Z := B^T Z + eta + a
/// are latent mean shifts with this perturbation matrix.
inline Matrix sem_to_meanshift(const Matrix& b) {
  require_stable(b);
  const Eigen::Index d = b.rows();
  return Matrix(Matrix::Identity(d, d) - b.transpose()).partialPivLu().inverse();
}

/// Solves Z = B^T Z + eta + a per row by fixed-point iteration of the
/// structural equations, eta ~ N(0, noise_std^2 I).
inline Matrix sample_sem_intervention(const Matrix& b, double noise_std, const Vector& a, Eigen::Index n, Rng& rng) {
  require_stable(b);
  if (a.size() != b.rows()) throw ShapeError("sample_sem_intervention: shift length must equal d_Z");
  const Eigen::Index d = b.rows();
  Matrix drive = standard_normal(rng, n, d) * noise_std;
  drive.rowwise() += a.transpose();
  Matrix z = drive;
  for (int it = 0; it < 100000; ++it) {
    Matrix next = z * b + drive;  // row form of B^T z + eta + a
    const double change = (next - z).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, next.cwiseAbs().maxCoeff());
    z = std::move(next);
    if (change <= 1e-14 * scale) break;
  }
  return z;
}

/// The 2-D simulation design: W = [w1 w2 w3] with w1=(1,0), w2=(0,1),
/// w3=(1,1), zero-mean isotropic base with sigma = 0.25, complex exponential mixing.
inline GroundTruthModel simulation_ground_truth(Eigen::Index noise_dims = 0, double noise_std = 0.0) {
  GroundTruthModel m;
  m.w = Matrix(2, 3);
  m.w << 1, 0, 1, 0, 1, 1;
  m.base_mean = Vector::Zero(2);
  m.base_std = 0.25;
  m.mixing = ComplexExpMixing{};
  m.noise_dims = noise_dims;
  m.noise_std = noise_std;
  return m;
}

/// Control plus the three single perturbations.
inline std::vector<Label> simulation_training_labels() {
  std::vector<Label> labels(4, Label::Zero(3));
  for (int k = 0; k < 3; ++k) labels[static_cast<std::size_t>(k + 1)](k) = 1.0;
  return labels;
}

}  // namespace pdae
