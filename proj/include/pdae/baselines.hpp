#pragma once

// Comparison methods: pool all training data, pseudobulk the involved single
// perturbations, and linear regression of domain means on labels.

#include "pdae/genmodel.hpp"
#include "pdae/metrics.hpp"

#include <vector>

namespace pdae {

/// mean(a) = intercept + coef * a
struct MeanModel {
  Vector intercept;  ///< d_X
  Matrix coef;       ///< d_X x K
};

inline SampleSet pool_all(const std::vector<Domain>& domains) {
  if (domains.empty()) throw std::invalid_argument("pool_all: no domains");
  Matrix out(0, domains.front().x.cols());
  for (const auto& d : domains) out = vstack(out, d.x);
  if (out.rows() == 0) throw std::invalid_argument("pool_all: all domains are empty");
  return out;
}

/// Index of the only nonzero entry, or -1 when the label is not a single perturbation.
inline Eigen::Index single_perturbation_index(const Label& a) {
  Eigen::Index found = -1;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (a(k) != 0.0) {
      if (found >= 0) return -1;
      found = k;
    }
  }
  return found;
}

/// Pools every single-perturbation domain whose perturbation is active in
/// a_test. Falls back to pool_all when none qualifies.
inline SampleSet pseudobulk(const std::vector<Domain>& domains, const Label& a_test) {
  Matrix out(0, domains.empty() ? 0 : domains.front().x.cols());
  for (const auto& d : domains) {
    if (d.label.size() != a_test.size()) throw ShapeError("pseudobulk: label length mismatch");
    const Eigen::Index k = single_perturbation_index(d.label);
    if (k >= 0 && a_test(k) != 0.0) out = vstack(out, d.x);
  }
  return out.rows() > 0 ? out : pool_all(domains);
}

/// Least-squares fit of domain means on labels with intercept; minimum-norm
/// solution when the design is rank deficient.
inline MeanModel fit_mean_model(const std::vector<Domain>& domains) {
  if (domains.size() < 2) throw std::invalid_argument("fit_mean_model: need >= 2 domains");
  const auto n = static_cast<Eigen::Index>(domains.size());
  const Eigen::Index k = domains.front().label.size();
  const Eigen::Index dx = domains.front().x.cols();
  Eigen::MatrixXd design(n, k + 1);
  Eigen::MatrixXd means(n, dx);
  for (Eigen::Index e = 0; e < n; ++e) {
    const auto& d = domains[static_cast<std::size_t>(e)];
    if (d.label.size() != k) throw ShapeError("fit_mean_model: label length mismatch");
    design(e, 0) = 1.0;
    design.row(e).tail(k) = d.label.transpose();
    means.row(e) = column_mean(d.x).transpose();
  }
  const Eigen::MatrixXd beta = design.completeOrthogonalDecomposition().solve(means);
  return {beta.row(0).transpose(), beta.bottomRows(k).transpose()};
}

inline Vector predict_mean(const MeanModel& model, const Label& a_test) {
  if (a_test.size() != model.coef.cols()) throw ShapeError("predict_mean: label length mismatch");
  return model.intercept + model.coef * a_test;
}

/// Reference rows translated so their mean equals predicted_mean.
inline SampleSet mean_shift_distribution(const SampleSet& reference, const Vector& predicted_mean) {
  if (predicted_mean.size() != reference.cols()) throw ShapeError("mean_shift_distribution: dimension mismatch");
  const Vector shift = predicted_mean - column_mean(reference);
  return reference.rowwise() + shift.transpose();
}

}  // namespace pdae
