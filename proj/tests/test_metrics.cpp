#include "pdae/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace pdae;

namespace {

Matrix col(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

Matrix shuffled(const Matrix& m, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  return take_rows(m, idx);
}

/// One-dimensional energy score with beta = 1 via sorting and prefix sums,
/// averaged over observations.
double mean_score_1d(std::vector<double> sample, const std::vector<double>& obs) {
  std::sort(sample.begin(), sample.end());
  const auto m = static_cast<double>(sample.size());
  std::vector<double> prefix(sample.size() + 1, 0.0);
  for (std::size_t i = 0; i < sample.size(); ++i) prefix[i + 1] = prefix[i] + sample[i];
  double pairs = 0.0;
  for (std::size_t j = 0; j < sample.size(); ++j) pairs += sample[j] * (2.0 * static_cast<double>(j) - m + 1.0);
  const double within = pairs / (m * (m - 1.0) / 2.0);
  double cross = 0.0;
  for (double x : obs) {
    const auto k = static_cast<std::size_t>(std::lower_bound(sample.begin(), sample.end(), x) - sample.begin());
    const double below = x * static_cast<double>(k) - prefix[k];
    const double above = (prefix.back() - prefix[k]) - x * (m - static_cast<double>(k));
    cross += (below + above) / m;
  }
  return 0.5 * within - cross / static_cast<double>(obs.size());
}

std::vector<double> normal_draws(Rng& rng, std::size_t n, double mean) {
  std::vector<double> v(n);
  for (auto& x : v) x = mean + rng.normal();
  return v;
}

}  // namespace

TEST(EnergyScore, PointMassIsNegativeDistance) {
  Matrix p(1, 2);
  p << 1, 1;
  Vector x(2);
  x << 4, 5;
  EXPECT_DOUBLE_EQ(energy_score(p, x, 1.0), -5.0);
  EXPECT_NEAR(energy_score(p, x, 0.5), -std::sqrt(5.0), 1e-14);
}

TEST(EnergyScore, TwoPointEnumerationUsesUnbiasedWithinTerm) {
  // within pairs: |0-2| over one unordered pair; cross: (1 + 1) / 2
  Vector x(1);
  x << 1.0;
  EXPECT_DOUBLE_EQ(energy_score(col({0, 2}), x, 1.0), 0.5 * 2.0 - 1.0);
  x << 0.0;
  EXPECT_DOUBLE_EQ(energy_score(col({0, 2}), x, 1.0), 0.5 * 2.0 - 1.0);
  x << 5.0;
  EXPECT_DOUBLE_EQ(energy_score(col({0, 2}), x, 1.0), 0.5 * 2.0 - 4.0);
}

TEST(EnergyScore, TwoPointEnumerationWithEmpiricalWithinTerm) {
  // within: (0 + 2 + 2 + 0) / 4
  Vector x(1);
  x << 1.0;
  EXPECT_DOUBLE_EQ(energy_score(col({0, 2}), x, 1.0, EsEstimator::Empirical), -0.5);
}

TEST(EnergyScore, MatchesSortedOracle) {
  Rng rng(1);
  const auto s = normal_draws(rng, 300, 0.2);
  const auto o = normal_draws(rng, 40, 0.0);
  Matrix p(300, 1);
  for (std::size_t i = 0; i < s.size(); ++i) p(static_cast<Eigen::Index>(i), 0) = s[i];
  double lib = 0.0;
  for (double x : o) lib += energy_score(p, Vector::Constant(1, x), 1.0);
  EXPECT_NEAR(lib / static_cast<double>(o.size()), mean_score_1d(s, o), 1e-12);
}

TEST(EnergyScore, TrueDistributionScoresHigherThanShiftedCandidate) {
  Rng rng(2);
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto truth = normal_draws(rng, 10000, 0.0);
    const auto shifted = normal_draws(rng, 10000, 1.0);
    const auto obs = normal_draws(rng, 10000, 0.0);
    wins += mean_score_1d(truth, obs) > mean_score_1d(shifted, obs);
  }
  EXPECT_GE(wins, 19);
}

TEST(EnergyScore, RejectsEmptyAndBadInputs) {
  EXPECT_THROW(energy_score(Matrix(0, 1), Vector::Zero(1), 1.0), std::invalid_argument);
  EXPECT_THROW(energy_score(col({0, 1}), Vector::Zero(2), 1.0), ShapeError);
  EXPECT_THROW(energy_score(col({0, 1}), Vector::Zero(1), 2.0), std::invalid_argument);
}

TEST(EnergyDistance, IdenticalSingletonsAreZero) {
  Matrix p(1, 2);
  p << 0.3, -1;
  EXPECT_EQ(energy_distance(p, p), 0.0);
}

TEST(EnergyDistance, SingletonEnumeration) { EXPECT_DOUBLE_EQ(energy_distance(col({0}), col({2}), 1.0), 4.0); }

TEST(EnergyDistance, BetaTwoIsTwiceSquaredMeanGap) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = standard_normal(rng, 30, 3);
    const Matrix y = standard_normal(rng, 25, 3).array() + 0.4;
    EXPECT_NEAR(energy_distance(x, y, 2.0), 2.0 * (column_mean(x) - column_mean(y)).squaredNorm(), 1e-10);
  }
}

TEST(EnergyDistance, SelfDistanceIsZero) {
  Rng rng(4);
  const Matrix x = standard_normal(rng, 50, 2);
  for (double beta : {0.5, 1.0, 1.5, 2.0}) EXPECT_NEAR(energy_distance(x, x, beta), 0.0, 1e-12);
}

TEST(EnergyDistance, RejectsDimensionMismatch) {
  EXPECT_THROW(energy_distance(Matrix::Zero(3, 2), Matrix::Zero(3, 3)), ShapeError);
}

TEST(Mmd, IdenticalSetsCancel) {
  Rng rng(5);
  const Matrix x = standard_normal(rng, 40, 2);
  EXPECT_NEAR(mmd_squared(x, x, GaussianKernel{0.7}), 0.0, 1e-12);
  EXPECT_NEAR(mmd_squared(x, x, DistanceKernel{1.0}), 0.0, 1e-12);
}

TEST(Mmd, DistanceKernelIsHalfEnergyDistance) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = standard_normal(rng, 20 + t, 3);
    const Matrix y = standard_normal(rng, 15, 3).array() * 1.5 + 0.2;
    for (double beta : {0.5, 1.0, 1.5})
      EXPECT_NEAR(energy_distance(x, y, beta), 2.0 * mmd_squared(x, y, DistanceKernel{beta}), 1e-10);
  }
}

TEST(Mmd, GaussianSingletonsClosedForm) {
  Matrix x = Matrix::Zero(1, 2);
  Matrix y(1, 2);
  y << 0.6, -0.8;
  const double s = 0.9;
  EXPECT_NEAR(mmd_squared(x, y, GaussianKernel{s}), 2.0 - 2.0 * std::exp(-1.0 / (2 * s * s)), 1e-15);
}

TEST(Mmd, RejectsBadBandwidthAndShapes) {
  EXPECT_THROW(mmd_squared(col({0}), col({1}), GaussianKernel{0.0}), std::invalid_argument);
  EXPECT_THROW(mmd_squared(Matrix::Zero(2, 1), Matrix::Zero(2, 2), GaussianKernel{1.0}), ShapeError);
}

TEST(MedianHeuristic, ThreePointEnumeration) { EXPECT_DOUBLE_EQ(median_heuristic(col({0, 1}), col({2})), 1.0); }

TEST(MedianHeuristic, IdenticalPointsFallBackToOne) {
  EXPECT_DOUBLE_EQ(median_heuristic(col({3, 3}), col({3, 3})), 1.0);
}

TEST(MedianHeuristic, ZeroMedianFallsBackToSmallestPositive) {
  EXPECT_DOUBLE_EQ(median_heuristic(col({0, 0, 0}), col({0, 0.5})), 0.5);
}

TEST(MedianHeuristic, ScalesWithData) {
  Rng rng(7);
  const Matrix x = standard_normal(rng, 21, 2);
  const Matrix y = standard_normal(rng, 12, 2);
  const double base = median_heuristic(x, y);
  EXPECT_NEAR(median_heuristic(x * 3.5, y * 3.5), 3.5 * base, 1e-12);
}

TEST(DistanceKernel, FormulaProperties) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const Vector x = standard_normal(rng, 3, 1).col(0);
    const Vector y = standard_normal(rng, 3, 1).col(0);
    for (double beta : {0.5, 1.0, 1.5}) {
      EXPECT_NEAR(distance_kernel(x, x, beta), std::pow(x.norm(), beta), 1e-14);
      EXPECT_NEAR(distance_kernel(Vector::Zero(3), y, beta), 0.0, 1e-14);
      EXPECT_DOUBLE_EQ(distance_kernel(x, y, beta), distance_kernel(y, x, beta));
    }
  }
}

TEST(Crps, PointMassAndEnumeration) {
  EXPECT_DOUBLE_EQ(crps(col({2.5}), 1.0), -1.5);
  EXPECT_DOUBLE_EQ(crps(col({0, 2}), 1.0), 0.0);
  EXPECT_DOUBLE_EQ(crps(col({0, 2}), 3.0), -1.0);
  EXPECT_DOUBLE_EQ(crps(col({0, 2}), 1.0, EsEstimator::Empirical), -0.5);
}

TEST(Crps, AgreesWithEnergyScore) {
  Rng rng(9);
  const Matrix p = standard_normal(rng, 37, 1);
  for (int t = 0; t < 10; ++t) {
    const double x = rng.normal();
    EXPECT_NEAR(crps(p, x), energy_score(p, Vector::Constant(1, x), 1.0), 1e-12);
  }
  EXPECT_THROW(crps(Matrix::Zero(3, 2), 0.0), ShapeError);
}

TEST(MeanDifference, Cases) {
  Rng rng(10);
  const Matrix x = standard_normal(rng, 11, 2);
  EXPECT_EQ(mean_difference(x, x), 0.0);
  Matrix a(2, 2), b(2, 2);
  a << -1, 1, 1, -1;
  b << 3, 4, 3, 4;
  EXPECT_DOUBLE_EQ(mean_difference(a, b), 5.0);
  const Matrix y = standard_normal(rng, 7, 2);
  double gap = 0.0;
  for (Eigen::Index j = 0; j < 2; ++j) {
    double sx = 0, sy = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) sx += x(i, j);
    for (Eigen::Index i = 0; i < y.rows(); ++i) sy += y(i, j);
    gap += std::pow(sx / 11.0 - sy / 7.0, 2);
  }
  EXPECT_NEAR(mean_difference(x, y), std::sqrt(gap), 1e-14);
  EXPECT_THROW(mean_difference(Matrix::Zero(1, 2), Matrix::Zero(1, 3)), ShapeError);
}

TEST(MetricProperties, NonnegativeAndPermutationInvariant) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = standard_normal(rng, 30, 2);
    const Matrix y = standard_normal(rng, 20, 2).array() + 0.1 * t;
    const Matrix xs = shuffled(x, rng), ys = shuffled(y, rng);
    for (double beta : {0.5, 1.0, 2.0}) {
      EXPECT_GE(energy_distance(x, y, beta), -1e-12);
      EXPECT_NEAR(energy_distance(xs, ys, beta), energy_distance(x, y, beta), 1e-12);
    }
    EXPECT_NEAR(mmd_squared_median(xs, ys), mmd_squared_median(x, y), 1e-12);
    EXPECT_NEAR(mean_difference(xs, ys), mean_difference(x, y), 1e-12);
  }
}
