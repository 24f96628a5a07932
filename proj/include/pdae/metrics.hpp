#pragma once

// Scoring rules and two-sample distances: energy score, CRPS, energy
// distance, MMD (Gaussian and distance kernels), mean difference.

#include "pdae/energy_terms.hpp"

#include <algorithm>
#include <variant>
#include <vector>

namespace pdae {

/// Observations of one distribution, one per row.
using SampleSet = Matrix;

struct GaussianKernel {
  double bandwidth = 1.0;
};
struct DistanceKernel {
  double beta = 1.0;
};
using KernelSpec = std::variant<GaussianKernel, DistanceKernel>;

/// How the within-sample term of the energy score is estimated.
enum class EsEstimator {
  Unbiased,   ///< mean over distinct pairs
  Empirical,  ///< exact score of the empirical distribution (diagonal included)
};

namespace detail {
inline void require_nonempty(const Matrix& m, const char* what) {
  if (m.rows() == 0) throw std::invalid_argument(std::string(what) + ": empty sample");
}
inline void require_beta_open(double beta, const char* what) {
  if (!(beta > 0.0 && beta < 2.0)) throw std::invalid_argument(std::string(what) + ": beta must lie in (0, 2)");
}
inline void require_beta_closed(double beta, const char* what) {
  if (!(beta > 0.0 && beta <= 2.0)) throw std::invalid_argument(std::string(what) + ": beta must lie in (0, 2]");
}
}  // namespace detail

/// ES_beta(P, x) = 1/2 E||X - X'||^beta - E||X - x||^beta with P given by a sample.
inline double energy_score(const SampleSet& p, const Vector& x, double beta,
                           EsEstimator estimator = EsEstimator::Unbiased) {
  detail::require_nonempty(p, "energy_score");
  detail::require_beta_open(beta, "energy_score");
  if (x.size() != p.cols()) throw ShapeError("energy_score: observation length does not match sample dimension");
  const double within = estimator == EsEstimator::Unbiased ? within_mean_u(p, beta) : within_mean_v(p, beta);
  const Matrix xr = x.transpose();
  return 0.5 * within - cross_mean(p, xr, beta);
}

/// CRPS in the kernel form, i.e. the one-dimensional energy score with beta = 1.
inline double crps(const SampleSet& p, double x, EsEstimator estimator = EsEstimator::Unbiased) {
  if (p.cols() != 1) throw ShapeError("crps: sample must be one-dimensional");
  Vector xv(1);
  xv(0) = x;
  return energy_score(p, xv, 1.0, estimator);
}

/// V-statistic energy distance 2E||X-Y||^b - E||X-X'||^b - E||Y-Y'||^b.
inline double energy_distance(const SampleSet& x, const SampleSet& y, double beta = 1.0) {
  detail::require_nonempty(x, "energy_distance");
  detail::require_nonempty(y, "energy_distance");
  require_same_cols(x, y, "energy_distance");
  detail::require_beta_closed(beta, "energy_distance");
  return 2.0 * cross_mean(x, y, beta) - within_mean_v(x, beta) - within_mean_v(y, beta);
}

/// k(x, y) = 1/2 (||x||^b + ||y||^b - ||x - y||^b).
inline double distance_kernel(const Vector& x, const Vector& y, double beta) {
  if (x.size() != y.size()) throw ShapeError("distance_kernel: dimension mismatch");
  return 0.5 * (pow_norm(x.norm(), beta) + pow_norm(y.norm(), beta) - pow_norm((x - y).norm(), beta));
}

inline double gaussian_kernel(const Vector& x, const Vector& y, double bandwidth) {
  return std::exp(-(x - y).squaredNorm() / (2.0 * bandwidth * bandwidth));
}

namespace detail {
inline double kernel_mean(const Matrix& a, const Matrix& b, const KernelSpec& k) {
  double total = 0.0;
  std::visit(
      [&](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, GaussianKernel>) {
          const double inv = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
          for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < b.rows(); ++j) total += std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
        } else {
          Vector na(a.rows()), nb(b.rows());
          for (Eigen::Index i = 0; i < a.rows(); ++i) na(i) = pow_norm(a.row(i).norm(), spec.beta);
          for (Eigen::Index j = 0; j < b.rows(); ++j) nb(j) = pow_norm(b.row(j).norm(), spec.beta);
          for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < b.rows(); ++j)
              total += 0.5 * (na(i) + nb(j) - pow_norm((a.row(i) - b.row(j)).norm(), spec.beta));
        }
      },
      k);
  return total / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}
}  // namespace detail

/// V-statistic MMD^2 = E k(X,X') - 2 E k(X,Y) + E k(Y,Y').
inline double mmd_squared(const SampleSet& x, const SampleSet& y, const KernelSpec& kernel) {
  detail::require_nonempty(x, "mmd_squared");
  detail::require_nonempty(y, "mmd_squared");
  require_same_cols(x, y, "mmd_squared");
  if (const auto* g = std::get_if<GaussianKernel>(&kernel); g && !(g->bandwidth > 0.0)) {
    throw std::invalid_argument("mmd_squared: bandwidth must be positive");
  }
  if (const auto* dk = std::get_if<DistanceKernel>(&kernel)) detail::require_beta_closed(dk->beta, "mmd_squared");
  return detail::kernel_mean(x, x, kernel) - 2.0 * detail::kernel_mean(x, y, kernel) +
         detail::kernel_mean(y, y, kernel);
}

/// Median pairwise Euclidean distance over the pooled sample (self pairs
/// excluded). Falls back to the smallest positive distance, then to 1.
inline double median_heuristic(const SampleSet& x, const SampleSet& y) {
  const Matrix pooled = vstack(x, y);
  const Eigen::Index n = pooled.rows();
  if (n < 2) throw std::invalid_argument("median_heuristic: need at least two pooled points");
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  double median = dists[mid];
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  if (median > 0.0) return median;
  double smallest = 0.0;
  for (double d : dists)
    if (d > 0.0 && (smallest == 0.0 || d < smallest)) smallest = d;
  return smallest > 0.0 ? smallest : 1.0;
}

/// Gaussian-kernel MMD^2 with the median-heuristic bandwidth.
inline double mmd_squared_median(const SampleSet& x, const SampleSet& y) {
  return mmd_squared(x, y, GaussianKernel{median_heuristic(x, y)});
}

/// ||mean(X) - mean(Y)||_2.
inline double mean_difference(const SampleSet& x, const SampleSet& y) {
  detail::require_nonempty(x, "mean_difference");
  detail::require_nonempty(y, "mean_difference");
  require_same_cols(x, y, "mean_difference");
  return (column_mean(x) - column_mean(y)).norm();
}

}  // namespace pdae
