#include "pdae/theory.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace pdae;

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

std::vector<Domain> world_domains(const MixingSpec& mixing, Eigen::Index n, Rng& rng, bool keep_latents = true) {
  GroundTruthModel truth = simulation_ground_truth();
  truth.mixing = mixing;
  std::vector<Domain> out;
  for (const auto& a : simulation_training_labels()) out.push_back(generate_domain(truth, a, n, rng, keep_latents));
  return out;
}

GroundTruthModel identity_truth() {
  GroundTruthModel t = simulation_ground_truth();
  t.mixing = IdentityMixing{};
  return t;
}

}  // namespace

TEST(PermutationTest, SameDistributionPassesShiftedFails) {
  Rng rng(1);
  const Matrix x = standard_normal(rng, 200, 2);
  const Matrix y = standard_normal(rng, 200, 2);
  const PermutationTest same = permutation_energy_test(x, y, rng);
  EXPECT_TRUE(same.passed);
  EXPECT_GT(same.p_value, 0.05);
  const Matrix z = standard_normal(rng, 200, 2).array() + 1.0;
  const PermutationTest shifted = permutation_energy_test(x, z, rng);
  EXPECT_FALSE(shifted.passed);
  EXPECT_LT(shifted.p_value, 0.01);
  EXPECT_NEAR(shifted.statistic, energy_distance(x, z), 1e-10);
}

TEST(PermutationTest, RejectsBadArguments) {
  Rng rng(2);
  EXPECT_THROW(permutation_energy_test(Matrix::Zero(0, 2), Matrix::Zero(3, 2), rng), std::invalid_argument);
  EXPECT_THROW(permutation_energy_test(Matrix::Zero(3, 2), Matrix::Zero(3, 2), rng, 0), std::invalid_argument);
  EXPECT_THROW(permutation_energy_test(Matrix::Zero(3, 2), Matrix::Zero(3, 1), rng), ShapeError);
}

TEST(Extrapolation, InSpanLabelsAgreeInClosedForm) {
  Rng rng(3);
  for (int s = 0; s < 5; ++s) {
    const TheoryScenario sc = random_theory_scenario(rng);
    const ExtrapolationReport r = verify_extrapolation_linear(sc, rng, 10);
    EXPECT_TRUE(r.passed);
    EXPECT_EQ(r.in_span.size(), sc.labels.size() + 10);
    for (const auto& c : r.in_span) {
      EXPECT_LE(c.mean_gap, 1e-8);
      EXPECT_LE(c.cov_gap, 1e-8);
    }
    EXPECT_LT(max_abs(r.w_alt * sc.relative() - sc.o * sc.w * sc.relative()), 1e-9);
  }
}

TEST(Extrapolation, OutOfSpanLabelsCanDisagree) {
  Rng rng(4);
  const TheoryScenario sc = random_theory_scenario(rng);
  const ExtrapolationReport r = verify_extrapolation_linear(sc, rng);
  EXPECT_GT(r.out_of_span.mean_gap, 1e-6);
}

TEST(Extrapolation, RejectsRankDeficientScenario) {
  Rng rng(5);
  const TheoryScenario sc = random_theory_scenario(rng, 2, 2, 1, 3);
  try {
    verify_extrapolation_linear(sc, rng);
    FAIL() << "expected RankDeficientError";
  } catch (const RankDeficientError& e) {
    EXPECT_NE(std::string(e.what()).find("rank(W A) = 1"), std::string::npos);
  }
}

TEST(Extrapolation, RejectsVisibleNullComponentAndBadRotation) {
  Rng rng(6);
  TheoryScenario sc = random_theory_scenario(rng);
  sc.null_component = Matrix::Ones(sc.w.rows(), sc.w.cols());
  EXPECT_THROW(verify_extrapolation_linear(sc, rng), std::invalid_argument);
  sc = random_theory_scenario(rng);
  sc.o(0, 0) += 0.1;
  EXPECT_THROW(sc.validate(), std::invalid_argument);
}

TEST(SemEquivalence, EmptyGraphPasses) {
  Rng rng(7);
  Vector a(3);
  a << 0.5, -1.0, 2.0;
  const auto r = verify_sem_equivalence(Matrix::Zero(3, 3), a, 300, rng);
  EXPECT_TRUE(r.passed());
  EXPECT_EQ(r.w, Matrix(Matrix::Identity(3, 3)));
}

TEST(SemEquivalence, PassRateMatchesPermutationLevel) {
  // Exact null: strict pass below the 190th of 200 null draws has rate 189.5/201.
  Rng rng(8);
  const int trials = 200;
  int passed = 0;
  for (int t = 0; t < trials; ++t) {
    const Matrix b = random_dag_weights(3, rng);
    EXPECT_LT(spectral_radius(b), 1.0);
    passed += verify_sem_equivalence(b, standard_normal(rng, 3, 1).col(0), 300, rng).passed();
  }
  const double rate = static_cast<double>(passed) / trials;
  const double expect = 189.5 / 201.0;
  EXPECT_NEAR(rate, expect, 4.0 * std::sqrt(expect * (1.0 - expect) / trials));
}

TEST(SemEquivalence, TransposedMapIsDetected) {
  Rng rng(9);
  Matrix b = Matrix::Zero(3, 3);
  b(0, 1) = 0.8;
  b(1, 2) = 0.8;
  Vector a = Vector::Zero(3);
  a(0) = 1.0;
  EXPECT_FALSE(verify_sem_equivalence(b, a, 300, rng, SemMap::Transposed).passed());
}

TEST(SymmetricRoots, SquareAndInverse) {
  Rng rng(10);
  const Matrix s = random_spd(3, rng);
  const SymmetricRoots r = symmetric_roots(s);
  EXPECT_LT(max_abs(r.sqrt * r.sqrt - s), 1e-12);
  EXPECT_LT(max_abs(r.inv_sqrt * r.sqrt - Matrix::Identity(3, 3)), 1e-12);
  Matrix bad = -Matrix::Identity(2, 2);
  EXPECT_THROW(symmetric_roots(bad), std::invalid_argument);
  bad << 1, 0.5, 0, 1;
  EXPECT_THROW(symmetric_roots(bad), std::invalid_argument);
}

TEST(Reparametrization, CanonicalBaseLeavesModelUnchanged) {
  Rng rng(11);
  const GroundTruthModel t = simulation_ground_truth();
  const auto labels = simulation_training_labels();
  const Vector mu = -t.w * labels.front();
  const auto r = verify_reparametrization(ComplexExpMixing{}, t.w, mu, Matrix::Identity(2, 2), labels, rng);
  EXPECT_LT(max_abs(r.w_tilde - t.w), 1e-14);
  EXPECT_TRUE(r.passed);
  EXPECT_FALSE(r.has_moments);
}

TEST(Reparametrization, RandomCovariancesMatchMomentsAndKeepRank) {
  Rng rng(12);
  const GroundTruthModel t = simulation_ground_truth();
  for (int s = 0; s < 5; ++s) {
    const Matrix sigma = random_spd(2, rng);
    const Vector mu = standard_normal(rng, 2, 1).col(0);
    const AffineMixing f{standard_normal(rng, 3, 2), standard_normal(rng, 3, 1).col(0)};
    const auto r = verify_reparametrization(f, t.w, mu, sigma, simulation_training_labels(), rng);
    EXPECT_TRUE(r.has_moments);
    EXPECT_LE(r.moment_gap, 1e-8);
    EXPECT_EQ(r.rank_original, r.rank_tilde);
    EXPECT_EQ(r.rank_tilde, 2);
    EXPECT_TRUE(r.passed);
  }
}

TEST(Reparametrization, RejectsShapeMismatch) {
  Rng rng(13);
  const GroundTruthModel t = simulation_ground_truth();
  EXPECT_THROW(verify_reparametrization(IdentityMixing{}, t.w, Vector::Zero(3), Matrix::Identity(2, 2),
                                        simulation_training_labels(), rng),
               ShapeError);
}

TEST(Identifiability, OracleEncoderIsPerfectlyAligned) {
  Rng rng(14);
  const auto domains = world_domains(IdentityMixing{}, 300, rng);
  const GroundTruthModel truth = identity_truth();
  const PdaeModel m = make_model(identity_mlp(2), identity_mlp(2), truth.w, 0, 0.1);
  const IdentifiabilityReport r = verify_identifiability(m, truth, domains);
  EXPECT_NEAR(r.min_r_squared(), 1.0, 1e-12);
  EXPECT_LT(max_abs(r.map - Matrix::Identity(2, 2)), 1e-10);
  EXPECT_LT(r.max_shift_gap, 1e-10);
}

TEST(Identifiability, RotatedShiftedEncoderIsRecovered) {
  Rng rng(15);
  const auto domains = world_domains(IdentityMixing{}, 300, rng);
  const GroundTruthModel truth = identity_truth();
  const Matrix o = random_orthogonal(2, rng) * 1.7;
  Vector c(2);
  c << 0.4, -2.0;
  const PdaeModel m = make_model(affine_mlp(o, c), identity_mlp(2), o * truth.w, 0, 0.1);
  const IdentifiabilityReport r = verify_identifiability(m, truth, domains);
  EXPECT_NEAR(r.min_r_squared(), 1.0, 1e-12);
  EXPECT_LT(max_abs(r.map - o), 1e-10);
  EXPECT_LT(max_abs(r.offset - c), 1e-10);
  EXPECT_LT(r.max_shift_gap, 1e-10);
}

TEST(Identifiability, NonlinearEncoderFallsShort) {
  Rng rng(16);
  const auto domains = world_domains(ComplexExpMixing{}, 300, rng);
  const PdaeModel m = make_model(identity_mlp(2), identity_mlp(2), simulation_ground_truth().w, 0, 0.1);
  const IdentifiabilityReport r = verify_identifiability(m, simulation_ground_truth(), domains);
  EXPECT_LT(r.min_r_squared(), 0.99);
  EXPECT_GE(r.min_r_squared(), 0.0);
}

TEST(Identifiability, RequiresRetainedLatents) {
  Rng rng(17);
  const auto domains = world_domains(IdentityMixing{}, 20, rng, false);
  const PdaeModel m = make_model(identity_mlp(2), identity_mlp(2), simulation_ground_truth().w, 0, 0.1);
  EXPECT_THROW(verify_identifiability(m, identity_truth(), domains), std::invalid_argument);
}

TEST(TheorySuite, DefaultSeedPassesEveryCheck) {
  const auto results = run_theory_suite(1);
  EXPECT_EQ(results.size(), 3u + 1 + 1 + 1 + 5);
  for (const auto& r : results) EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
}
