#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pdae {

/// Dense row-major matrix; one observation per row throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Raised for incompatible dimensions. Never broadcast silently.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

inline void require_cols(const Matrix& m, Eigen::Index cols, const char* what) {
  if (m.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(cols) +
                     " columns, got " + shape_str(m.rows(), m.cols()));
  }
}

inline void require_same_cols(const Matrix& a, const Matrix& b, const char* what) {
  if (a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": dimension mismatch " +
                     shape_str(a.rows(), a.cols()) + " vs " + shape_str(b.rows(), b.cols()));
  }
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Seeded random stream. Copies replay the same draws, which the gradient
/// checks rely on to freeze the noise of stochastic losses.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  /// Independent child stream, e.g. one per seed or per test case.
  Rng split() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// n i.i.d. rows from N(mean, std^2 I).
inline Matrix gaussian_sample(Rng& rng, const Vector& mean, double std, Eigen::Index n) {
  if (std < 0.0) throw std::invalid_argument("gaussian_sample: std must be >= 0");
  const Eigen::Index d = mean.size();
  Matrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = mean(j) + std * rng.normal();
  }
  return out;
}

/// Standard normal matrix of the given shape.
inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.normal();
  return out;
}

/// Euclidean norm raised to beta, with value 0 at the origin.
inline double pow_norm(double norm, double beta) {
  if (beta == 1.0) return norm;
  if (beta == 2.0) return norm * norm;
  return norm == 0.0 ? 0.0 : std::pow(norm, beta);
}

/// Derivative factor s such that d/dv ||v||^beta = s * v. Zero at v = 0
/// (a valid subgradient for beta < 2, exact for beta = 2 up to the factor).
inline double pow_norm_grad_factor(double norm, double beta) {
  if (beta == 2.0) return 2.0;
  if (norm == 0.0) return 0.0;
  if (beta == 1.0) return 1.0 / norm;
  return beta * std::pow(norm, beta - 2.0);
}

/// Entry (i,j) = ||x_i - y_j||^beta.
inline Matrix pairwise_distances(const Matrix& x, const Matrix& y, double beta) {
  require_same_cols(x, y, "pairwise_distances");
  if (!(beta > 0.0 && beta <= 2.0)) throw std::invalid_argument("pairwise_distances: beta must lie in (0, 2]");
  Matrix out(x.rows(), y.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < y.rows(); ++j) {
      out(i, j) = pow_norm((x.row(i) - y.row(j)).norm(), beta);
    }
  }
  return out;
}

inline Vector column_mean(const Matrix& m) {
  if (m.rows() == 0) throw std::invalid_argument("column_mean: empty matrix");
  return m.colwise().mean().transpose();
}

/// Rows of `m` indexed by `idx`.
template <typename IndexRange>
Matrix take_rows(const Matrix& m, const IndexRange& idx) {
  Matrix out(static_cast<Eigen::Index>(std::size(idx)), m.cols());
  Eigen::Index r = 0;
  for (auto i : idx) out.row(r++) = m.row(static_cast<Eigen::Index>(i));
  return out;
}

inline Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  require_same_cols(a, b, "vstack");
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

inline Matrix hstack(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("hstack: row mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace pdae
