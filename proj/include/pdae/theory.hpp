#pragma once

// Numerical checks of the identifiability and extrapolation results:
// affine recovery of latents by a trained encoder, closed-form extrapolation
// agreement for Gaussian models, SEM shift interventions as mean shifts, and
// the canonical reparametrization of the base distribution.

#include "pdae/pdae.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

namespace pdae {

class RankDeficientError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline Eigen::Index matrix_rank(const Matrix& m, double tol = 1e-10) {
  if (m.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(m)};
  qr.setThreshold(tol);
  return qr.rank();
}

/// Columns a_e - a_0 for e = 1..M.
inline Matrix relative_labels(const std::vector<Label>& labels) {
  if (labels.size() < 2) throw std::invalid_argument("relative_labels: need a reference and >= 1 further label");
  Matrix a(labels.front().size(), static_cast<Eigen::Index>(labels.size()) - 1);
  for (std::size_t e = 1; e < labels.size(); ++e) {
    if (labels[e].size() != a.rows()) throw ShapeError("relative_labels: label length mismatch");
    a.col(static_cast<Eigen::Index>(e) - 1) = labels[e] - labels.front();
  }
  return a;
}

// ---------------------------------------------------------------------------
// Two-sample permutation test with the energy distance

struct PermutationTest {
  double statistic = 0.0;
  double threshold = 0.0;  ///< null quantile at the requested level
  double p_value = 1.0;
  bool passed = false;     ///< statistic below the threshold
};

/// V-statistic ED between x and y against its permutation null. Pass iff
/// the observed statistic lies below the `quantile` of the null draws.
inline PermutationTest permutation_energy_test(const Matrix& x, const Matrix& y, Rng& rng, int permutations = 200,
                                               double quantile = 0.95, double beta = 1.0) {
  require_same_cols(x, y, "permutation_energy_test");
  if (x.rows() < 1 || y.rows() < 1) throw std::invalid_argument("permutation_energy_test: empty sample");
  if (permutations < 1) throw std::invalid_argument("permutation_energy_test: need >= 1 permutation");
  const Matrix pooled = vstack(x, y);
  const Eigen::Index n = pooled.rows(), nx = x.rows(), ny = y.rows();
  const Matrix dist = pairwise_distances(pooled, pooled, beta);

  auto statistic = [&](const std::vector<char>& in_x) {
    double sxx = 0, syy = 0, sxy = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool xi = in_x[static_cast<std::size_t>(i)];
      const double* row = dist.row(i).data();
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const bool xj = in_x[static_cast<std::size_t>(j)];
        if (xi && xj) sxx += row[j];
        else if (!xi && !xj) syy += row[j];
        else sxy += row[j];
      }
    }
    const double fx = static_cast<double>(nx), fy = static_cast<double>(ny);
    return 2.0 * sxy / (fx * fy) - 2.0 * sxx / (fx * fx) - 2.0 * syy / (fy * fy);
  };

  std::vector<char> labels(static_cast<std::size_t>(n), 0);
  std::fill(labels.begin(), labels.begin() + nx, 1);
  PermutationTest t;
  t.statistic = statistic(labels);
  std::vector<double> null(static_cast<std::size_t>(permutations));
  int at_least = 0;
  for (auto& v : null) {
    std::shuffle(labels.begin(), labels.end(), rng.engine());
    v = statistic(labels);
    if (v >= t.statistic) ++at_least;
  }
  std::sort(null.begin(), null.end());
  const auto k = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(permutations))) - 1;
  t.threshold = null[std::min(k, null.size() - 1)];
  t.p_value = (1.0 + at_least) / (1.0 + permutations);
  t.passed = t.statistic < t.threshold;
  return t;
}

// ---------------------------------------------------------------------------
// Identifiability: affine alignment of learned and true latents

struct IdentifiabilityReport {
  Matrix map;              ///< M in learned ~ M z_true + offset
  Vector offset;
  Vector r_squared;        ///< per learned coordinate
  double residual_rms = 0.0;
  Matrix learned_shifts;   ///< W_hat A
  Matrix mapped_shifts;    ///< M W A
  double max_shift_gap = 0.0;

  double min_r_squared() const { return r_squared.minCoeff(); }
};

/// Least-squares affine regression of encode(x) on the retained true
/// latents, pooled over domains (at most max_points rows per domain).
inline IdentifiabilityReport verify_identifiability(const PdaeModel& model, const GroundTruthModel& truth,
                                                    const std::vector<Domain>& domains,
                                                    Eigen::Index max_points = 4096) {
  if (domains.size() < 2) throw std::invalid_argument("verify_identifiability: need >= 2 domains");
  Matrix z_true(0, truth.latent_dim()), z_hat(0, model.latent_dim());
  std::vector<Label> labels;
  for (const auto& d : domains) {
    if (!d.z_pert) throw std::invalid_argument("verify_identifiability: domain without retained latents");
    const Eigen::Index n = std::min(max_points, d.x.rows());
    z_true = vstack(z_true, d.z_pert->topRows(n));
    z_hat = vstack(z_hat, encode(model, d.x.topRows(n)));
    labels.push_back(d.label);
  }
  const Eigen::Index n = z_true.rows();
  Eigen::MatrixXd design(n, z_true.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(z_true.cols()) = z_true;
  const Eigen::MatrixXd coef = design.colPivHouseholderQr().solve(Eigen::MatrixXd(z_hat));
  const Eigen::MatrixXd fitted = design * coef;

  IdentifiabilityReport r;
  r.offset = coef.row(0).transpose();
  r.map = coef.bottomRows(z_true.cols()).transpose();
  r.r_squared.resize(z_hat.cols());
  double sse_total = 0.0;
  for (Eigen::Index j = 0; j < z_hat.cols(); ++j) {
    const double sse = (z_hat.col(j) - fitted.col(j)).squaredNorm();
    const double sst = (z_hat.col(j).array() - z_hat.col(j).mean()).square().sum();
    r.r_squared(j) = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
    sse_total += sse;
  }
  r.residual_rms = std::sqrt(sse_total / static_cast<double>(z_hat.size()));
  const Matrix a = relative_labels(labels);
  r.learned_shifts = model.w_hat * a;
  r.mapped_shifts = r.map * truth.w * a;
  r.max_shift_gap = (r.learned_shifts - r.mapped_shifts).cwiseAbs().maxCoeff();
  return r;
}

// ---------------------------------------------------------------------------
// Extrapolation under Gaussian base and affine mixing

/// Gaussian latent model with affine mixing, plus the orthogonal map used to
/// build an observationally equivalent alternative.
struct TheoryScenario {
  Matrix w;                    ///< d_Z x K
  std::vector<Label> labels;   ///< a_0 first
  Matrix o;                    ///< orthogonal d_Z x d_Z
  Vector base_mean;            ///< mu
  Matrix base_cov;             ///< Sigma
  AffineMixing mixing;
  Matrix null_component;       ///< N with N A = 0: the part of W_tilde the data cannot see

  Matrix relative() const { return relative_labels(labels); }

  void validate() const {
    const Eigen::Index dz = w.rows();
    if (o.rows() != dz || o.cols() != dz) throw ShapeError("TheoryScenario: O must be d_Z x d_Z");
    if ((o.transpose() * o - Matrix::Identity(dz, dz)).cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument("TheoryScenario: O is not orthogonal");
    if (base_mean.size() != dz || base_cov.rows() != dz || base_cov.cols() != dz)
      throw ShapeError("TheoryScenario: base moments must match d_Z");
    if (mixing.m.cols() != dz || mixing.b.size() != mixing.m.rows()) throw ShapeError("TheoryScenario: mixing shape");
    for (const auto& a : labels)
      if (a.size() != w.cols()) throw ShapeError("TheoryScenario: label length must equal K");
    if (null_component.rows() != dz || null_component.cols() != w.cols())
      throw ShapeError("TheoryScenario: null component must be d_Z x K");
  }
};

/// Observed mean and covariance of X = M (mu + W a + Z0) + b, Z0 ~ N(0, Sigma).
struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

inline GaussianMoments affine_gaussian_moments(const AffineMixing& f, const Vector& latent_mean,
                                               const Matrix& latent_cov) {
  return {f.m * latent_mean + f.b, f.m * latent_cov * f.m.transpose()};
}

inline Matrix random_orthogonal(Eigen::Index d, Rng& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(standard_normal(rng, d, d))};
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::VectorXd diag = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < d; ++j)
    if (diag(j) < 0) q.col(j) *= -1.0;
  return q;
}

inline Matrix random_spd(Eigen::Index d, Rng& rng, double floor = 0.2) {
  const Matrix g = standard_normal(rng, d, d);
  return g * g.transpose() / static_cast<double>(d) + floor * Matrix::Identity(d, d);
}

/// Random scenario with K > M so that A has a nontrivial left null space and
/// out-of-span labels exist.
inline TheoryScenario random_theory_scenario(Rng& rng, Eigen::Index latent_dim = 2, Eigen::Index num_perturbations = 4,
                                             Eigen::Index num_conditions = 3, Eigen::Index observed_dim = 3) {
  TheoryScenario s;
  s.w = standard_normal(rng, latent_dim, num_perturbations);
  s.labels.push_back(standard_normal(rng, num_perturbations, 1).col(0) * 0.5);
  for (Eigen::Index e = 0; e < num_conditions; ++e)
    s.labels.push_back(s.labels.front() + Vector(standard_normal(rng, num_perturbations, 1).col(0)));
  s.o = random_orthogonal(latent_dim, rng);
  s.base_mean = standard_normal(rng, latent_dim, 1).col(0);
  s.base_cov = random_spd(latent_dim, rng);
  s.mixing = {standard_normal(rng, observed_dim, latent_dim), standard_normal(rng, observed_dim, 1).col(0)};
  const Matrix a = s.relative();
  const Eigen::MatrixXd proj =
      Eigen::MatrixXd::Identity(num_perturbations, num_perturbations) -
      Eigen::MatrixXd(a) * Eigen::MatrixXd(a).completeOrthogonalDecomposition().pseudoInverse();
  s.null_component = standard_normal(rng, latent_dim, num_perturbations) * proj;
  return s;
}

struct ExtrapolationCheck {
  Label label;
  double mean_gap = 0.0;
  double cov_gap = 0.0;
};

struct ExtrapolationReport {
  Matrix w_alt;                           ///< O W + N
  std::vector<ExtrapolationCheck> in_span;
  ExtrapolationCheck out_of_span;
  double tolerance = 1e-8;
  bool passed = false;                    ///< every in-span gap within tolerance
};

/// Builds the alternative model (f o O^T, O W + N, base N(O mu - N a_0, O Sigma O^T)),
/// which matches the original on every training condition, then compares
/// closed-form observed moments at in-span test labels a_0 + A alpha and at
/// one label outside the span. Requires rank(W A) = d_Z.
inline ExtrapolationReport verify_extrapolation_linear(const TheoryScenario& s, Rng& rng, int in_span_tests = 10,
                                                       double tolerance = 1e-8) {
  s.validate();
  const Matrix a = s.relative();
  const Eigen::Index rank = matrix_rank(s.w * a);
  if (rank != s.w.rows()) {
    throw RankDeficientError("verify_extrapolation_linear: rank(W A) = " + std::to_string(rank) + " < d_Z = " +
                             std::to_string(s.w.rows()));
  }
  const Label& a0 = s.labels.front();
  const Matrix& n = s.null_component;
  if ((n * a).cwiseAbs().maxCoeff() > 1e-9) throw std::invalid_argument("verify_extrapolation_linear: N A != 0");

  const AffineMixing f_alt{s.mixing.m * s.o.transpose(), s.mixing.b};
  const Vector mean_alt = s.o * s.base_mean - n * a0;
  const Matrix cov_alt = s.o * s.base_cov * s.o.transpose();
  ExtrapolationReport r;
  r.tolerance = tolerance;
  r.w_alt = s.o * s.w + n;

  auto check = [&](const Label& test) {
    const GaussianMoments orig = affine_gaussian_moments(s.mixing, s.base_mean + s.w * test, s.base_cov);
    const GaussianMoments alt = affine_gaussian_moments(f_alt, mean_alt + r.w_alt * test, cov_alt);
    return ExtrapolationCheck{test, (orig.mean - alt.mean).cwiseAbs().maxCoeff(),
                              (orig.cov - alt.cov).cwiseAbs().maxCoeff()};
  };

  bool ok = true;
  for (const auto& train_label : s.labels) {
    const auto c = check(train_label);
    ok = ok && c.mean_gap <= tolerance && c.cov_gap <= tolerance;
    r.in_span.push_back(c);
  }
  for (int t = 0; t < in_span_tests; ++t) {
    const Vector alpha = standard_normal(rng, a.cols(), 1).col(0);
    const auto c = check(a0 + a * alpha);
    ok = ok && c.mean_gap <= tolerance && c.cov_gap <= tolerance;
    r.in_span.push_back(c);
  }
  // Out of span: move along the direction N sees.
  const Eigen::MatrixXd proj =
      Eigen::MatrixXd::Identity(a.rows(), a.rows()) -
      Eigen::MatrixXd(a) * Eigen::MatrixXd(a).completeOrthogonalDecomposition().pseudoInverse();
  Vector off = proj * standard_normal(rng, a.rows(), 1).col(0);
  r.out_of_span = check(a0 + off);
  r.passed = ok;
  return r;
}

// ---------------------------------------------------------------------------
// SEM shift interventions

enum class SemMap {
  Correct,   ///< (I - B^T)^{-1}
  Transposed ///< (I - B)^{-1}, a deliberately wrong negative control
};

struct SemEquivalenceReport {
  Matrix w;  ///< map used for the mean-shift model
  PermutationTest test;
  bool passed() const { return test.passed; }
};

/// Samples the SEM under shift a and the mean-shift model with
/// W = (I - B^T)^{-1}, base W_# N(0, noise_std^2 I), and compares them.
inline SemEquivalenceReport verify_sem_equivalence(const Matrix& b, const Vector& a, Eigen::Index n, Rng& rng,
                                                   SemMap map = SemMap::Correct, double noise_std = 1.0,
                                                   int permutations = 200) {
  require_stable(b);
  const Eigen::Index d = b.rows();
  SemEquivalenceReport r;
  r.w = map == SemMap::Correct ? sem_to_meanshift(b)
                               : Matrix(Matrix(Matrix::Identity(d, d) - b).partialPivLu().inverse());
  const Matrix sem = sample_sem_intervention(b, noise_std, a, n, rng);
  Matrix shifted = standard_normal(rng, n, d) * noise_std * r.w.transpose();
  shifted.rowwise() += (r.w * a).transpose();
  r.test = permutation_energy_test(sem, shifted, rng, permutations);
  return r;
}

/// Random stable B: strictly upper triangular (acyclic) with entries in
/// [-max_weight, max_weight].
inline Matrix random_dag_weights(Eigen::Index d, Rng& rng, double max_weight = 0.9) {
  Matrix b = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i + 1; j < d; ++j) b(i, j) = rng.uniform(-max_weight, max_weight);
  return b;
}

// ---------------------------------------------------------------------------
// Canonical reparametrization of the base distribution

struct ReparametrizationReport {
  Matrix w_tilde;                      ///< Sigma^{-1/2} W
  Eigen::Index rank_original = 0;      ///< rank(W A)
  Eigen::Index rank_tilde = 0;         ///< rank(W_tilde A)
  std::vector<PermutationTest> tests;  ///< one per condition
  double moment_gap = 0.0;             ///< closed form, affine mixing only
  bool has_moments = false;
  bool passed = false;
};

struct SymmetricRoots {
  Matrix sqrt;
  Matrix inv_sqrt;
};

inline SymmetricRoots symmetric_roots(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("symmetric_roots: matrix must be square");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("symmetric_roots: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es{Eigen::MatrixXd(sigma)};
  if (es.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("symmetric_roots: matrix is not positive definite");
  return {es.operatorSqrt(), es.operatorInverseSqrt()};
}

/// Model (f, W, N(mu, Sigma)) versus the canonical (f_tilde, W_tilde,
/// N(-W_tilde a_0, I)) with f_tilde(z) = f(mu + W a_0 + Sigma^{1/2} z).
/// Each condition is sampled independently from both and compared with a
/// permutation test at family-wise level `level` (Bonferroni over conditions).
inline ReparametrizationReport verify_reparametrization(const MixingSpec& f, const Matrix& w, const Vector& mu,
                                                        const Matrix& sigma, const std::vector<Label>& labels,
                                                        Rng& rng, Eigen::Index n = 400, int permutations = 200,
                                                        double level = 0.05) {
  const Eigen::Index dz = w.rows();
  if (mu.size() != dz || sigma.rows() != dz) throw ShapeError("verify_reparametrization: moment shapes must match d_Z");
  const SymmetricRoots roots = symmetric_roots(sigma);
  const Label& a0 = labels.front();
  ReparametrizationReport r;
  r.w_tilde = roots.inv_sqrt * w;
  const Matrix a = relative_labels(labels);
  r.rank_original = matrix_rank(w * a);
  r.rank_tilde = matrix_rank(r.w_tilde * a);
  const Vector anchor = mu + w * a0;

  auto f_tilde = [&](const Matrix& z) {
    Matrix pre = z * roots.sqrt.transpose();
    pre.rowwise() += anchor.transpose();
    return mix(f, pre);
  };

  const double quantile = 1.0 - level / static_cast<double>(labels.size());
  bool ok = r.rank_original == r.rank_tilde;
  for (const auto& label : labels) {
    Matrix z = standard_normal(rng, n, dz) * roots.sqrt.transpose();
    z.rowwise() += (mu + w * label).transpose();
    const Matrix x = mix(f, z);
    Matrix zt = standard_normal(rng, n, dz);
    zt.rowwise() += (r.w_tilde * (label - a0)).transpose();
    const Matrix xt = f_tilde(zt);
    r.tests.push_back(permutation_energy_test(x, xt, rng, permutations, quantile));
    ok = ok && r.tests.back().passed;
  }

  if (const auto* aff = std::get_if<AffineMixing>(&f)) {
    r.has_moments = true;
    const AffineMixing composed{aff->m * roots.sqrt, aff->m * anchor + aff->b};
    for (const auto& label : labels) {
      const GaussianMoments orig = affine_gaussian_moments(*aff, mu + w * label, sigma);
      const GaussianMoments alt =
          affine_gaussian_moments(composed, r.w_tilde * (label - a0), Matrix::Identity(dz, dz));
      r.moment_gap = std::max({r.moment_gap, (orig.mean - alt.mean).cwiseAbs().maxCoeff(),
                               (orig.cov - alt.cov).cwiseAbs().maxCoeff()});
    }
    ok = ok && r.moment_gap <= 1e-8;
  }
  r.passed = ok;
  return r;
}

// ---------------------------------------------------------------------------
// Default seeded suite

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace detail {
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}
}  // namespace detail

/// Extrapolation on `scenarios` random scenarios (10 in-span labels each)
/// plus a rank-deficient rejection; SEM equivalence on `sem_trials` random
/// DAGs (pass at >= 95% of trials) plus the wrong-map negative control;
/// reparametrization on `reparam_scenarios` random SPD covariances.
inline std::vector<CheckResult> run_theory_suite(std::uint64_t seed, int scenarios = 3, int sem_trials = 20,
                                                 int reparam_scenarios = 5) {
  std::vector<CheckResult> out;
  Rng master(seed);

  for (int s = 0; s < scenarios; ++s) {
    Rng rng = master.split();
    const TheoryScenario sc = random_theory_scenario(rng);
    const ExtrapolationReport r = verify_extrapolation_linear(sc, rng, 10);
    double worst = 0.0;
    for (const auto& c : r.in_span) worst = std::max({worst, c.mean_gap, c.cov_gap});
    out.push_back({"extrapolation_in_span_" + std::to_string(s), r.passed,
                   "labels=" + std::to_string(r.in_span.size()) + " max_gap=" + detail::fmt(worst) +
                       " out_of_span_mean_gap=" + detail::fmt(r.out_of_span.mean_gap)});
  }
  {
    Rng rng = master.split();
    TheoryScenario sc = random_theory_scenario(rng, 2, 2, 1, 3);
    bool rejected = false;
    try {
      verify_extrapolation_linear(sc, rng);
    } catch (const RankDeficientError&) {
      rejected = true;
    }
    out.push_back({"extrapolation_rank_deficient_rejected", rejected, "d_Z=2 M=1"});
  }

  {
    Rng rng = master.split();
    int passed = 0;
    double worst_p = 1.0;
    for (int t = 0; t < sem_trials; ++t) {
      const Matrix b = random_dag_weights(3, rng);
      const Vector a = standard_normal(rng, 3, 1).col(0);
      const auto r = verify_sem_equivalence(b, a, 300, rng);
      passed += r.passed();
      worst_p = std::min(worst_p, r.test.p_value);
    }
    const int need = static_cast<int>(std::ceil(0.95 * sem_trials));
    out.push_back({"sem_equivalence", passed >= need,
                   std::to_string(passed) + "/" + std::to_string(sem_trials) + " trials pass (need " +
                       std::to_string(need) + "), min p=" + detail::fmt(worst_p)});
  }
  {
    Rng rng = master.split();
    Matrix b = Matrix::Zero(3, 3);
    b(0, 1) = 0.8;
    b(1, 2) = 0.8;
    Vector a = Vector::Zero(3);
    a(0) = 1.0;
    const auto r = verify_sem_equivalence(b, a, 300, rng, SemMap::Transposed);
    out.push_back({"sem_negative_control_detected", !r.passed(),
                   "statistic=" + detail::fmt(r.test.statistic) + " threshold=" + detail::fmt(r.test.threshold)});
  }

  for (int s = 0; s < reparam_scenarios; ++s) {
    Rng rng = master.split();
    const GroundTruthModel truth = simulation_ground_truth();
    const Matrix sigma = random_spd(2, rng);
    const Vector mu = standard_normal(rng, 2, 1).col(0);
    const AffineMixing f{standard_normal(rng, 3, 2), standard_normal(rng, 3, 1).col(0)};
    const auto r = verify_reparametrization(f, truth.w, mu, sigma, simulation_training_labels(), rng);
    double min_p = 1.0;
    for (const auto& t : r.tests) min_p = std::min(min_p, t.p_value);
    out.push_back({"reparametrization_" + std::to_string(s), r.passed,
                   "rank " + std::to_string(r.rank_original) + "->" + std::to_string(r.rank_tilde) +
                       " moment_gap=" + detail::fmt(r.moment_gap) + " min p=" + detail::fmt(min_p)});
  }
  return out;
}

}  // namespace pdae
