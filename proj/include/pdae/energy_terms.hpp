#pragma once

// Pairwise ||.||^beta averages with their reverse-mode gradients. Every
// energy-score based loss and metric in the library is assembled from these
// two terms.

#include "pdae/numeric.hpp"

namespace pdae {

/// Sum over i<j of ||a_i - a_j||^beta. Adds `scale` times its gradient to
/// *grad when grad is non-null.
inline double pair_sum_within(const Matrix& a, double beta, double scale = 1.0, Matrix* grad = nullptr) {
  const Eigen::Index m = a.rows();
  const Eigen::Index d = a.cols();
  if (grad && (grad->rows() != m || grad->cols() != d)) throw ShapeError("pair_sum_within: gradient shape");
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double* ai = a.row(i).data();
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double* aj = a.row(j).data();
      double sq = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - aj[k];
        sq += diff * diff;
      }
      const double norm = std::sqrt(sq);
      total += pow_norm(norm, beta);
      if (grad) {
        const double s = scale * pow_norm_grad_factor(norm, beta);
        if (s != 0.0) {
          double* gi = grad->row(i).data();
          double* gj = grad->row(j).data();
          for (Eigen::Index k = 0; k < d; ++k) {
            const double g = s * (ai[k] - aj[k]);
            gi[k] += g;
            gj[k] -= g;
          }
        }
      }
    }
  }
  return total;
}

/// Sum over (i,j) of ||a_i - b_j||^beta, optionally skipping i == j.
/// Gradients w.r.t. a and b are accumulated with factor `scale`.
inline double pair_sum_cross(const Matrix& a, const Matrix& b, double beta, bool skip_diagonal = false,
                             double scale = 1.0, Matrix* grad_a = nullptr, Matrix* grad_b = nullptr) {
  require_same_cols(a, b, "pair_sum_cross");
  const Eigen::Index d = a.cols();
  if (grad_a && (grad_a->rows() != a.rows() || grad_a->cols() != d)) throw ShapeError("pair_sum_cross: grad_a shape");
  if (grad_b && (grad_b->rows() != b.rows() || grad_b->cols() != d)) throw ShapeError("pair_sum_cross: grad_b shape");
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      const double* bj = b.row(j).data();
      double sq = 0.0;
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        sq += diff * diff;
      }
      const double norm = std::sqrt(sq);
      total += pow_norm(norm, beta);
      if (grad_a || grad_b) {
        const double s = scale * pow_norm_grad_factor(norm, beta);
        if (s == 0.0) continue;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double g = s * (ai[k] - bj[k]);
          if (grad_a) (*grad_a)(i, k) += g;
          if (grad_b) (*grad_b)(j, k) -= g;
        }
      }
    }
  }
  return total;
}

/// Mean over unordered distinct pairs (U-statistic within term). 0 for m < 2.
inline double within_mean_u(const Matrix& a, double beta, double scale = 1.0, Matrix* grad = nullptr) {
  const double m = static_cast<double>(a.rows());
  if (a.rows() < 2) return 0.0;
  const double count = m * (m - 1.0) / 2.0;
  return pair_sum_within(a, beta, scale / count, grad) / count;
}

/// Mean over all ordered pairs including the diagonal (V-statistic within term).
inline double within_mean_v(const Matrix& a, double beta) {
  const double m = static_cast<double>(a.rows());
  return 2.0 * pair_sum_within(a, beta) / (m * m);
}

/// Mean over all (i,j), or over i != j when skip_diagonal.
inline double cross_mean(const Matrix& a, const Matrix& b, double beta, bool skip_diagonal = false, double scale = 1.0,
                         Matrix* grad_a = nullptr, Matrix* grad_b = nullptr) {
  double count = static_cast<double>(a.rows()) * static_cast<double>(b.rows());
  if (skip_diagonal) count -= static_cast<double>(std::min(a.rows(), b.rows()));
  if (count <= 0.0) throw std::invalid_argument("cross_mean: no pairs");
  return pair_sum_cross(a, b, beta, skip_diagonal, scale / count, grad_a, grad_b) / count;
}

}  // namespace pdae
