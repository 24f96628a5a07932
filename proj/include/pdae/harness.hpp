#pragma once

// Experiment orchestration for the 2-D simulation: ID/OOD test-label
// samplers, the evaluation loop over methods and test cases, and the
// decoder-noise robustness sweep.

#include "pdae/baselines.hpp"
#include "pdae/pdae.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pdae {

enum class CaseKind { InDistribution, OutOfDistribution };
enum class Arity { Single, Double };
enum class Split { Validation, Test };

inline const char* to_string(CaseKind k) { return k == CaseKind::InDistribution ? "ID" : "OOD"; }
inline const char* to_string(Arity a) { return a == Arity::Single ? "single" : "double"; }
inline const char* to_string(Split s) { return s == Split::Validation ? "validation" : "test"; }

struct TestCase {
  Label label;
  CaseKind kind = CaseKind::InDistribution;
  Arity arity = Arity::Single;
  Split split = Split::Test;
  int setting = 0;  ///< single: active coordinate; double: sampling branch
};

/// Number of sampling branches of a region: 3 for singles and ID doubles,
/// 4 for OOD doubles.
inline int branch_count(CaseKind kind, Arity arity) {
  return (arity == Arity::Double && kind == CaseKind::OutOfDistribution) ? 4 : 3;
}

/// Uniform draw from one of the label regions of the three-perturbation
/// design. `branch` selects the union member; unset picks one uniformly.
inline Label sample_test_label(Rng& rng, CaseKind kind, Arity arity, std::optional<int> branch = std::nullopt,
                               Eigen::Index num_perturbations = 3) {
  if (num_perturbations != 3) {
    throw std::invalid_argument("sample_test_label: regions are defined for K = 3 only, got K = " +
                                std::to_string(num_perturbations));
  }
  const int branches = branch_count(kind, arity);
  const int b = branch ? *branch : static_cast<int>(rng.index(static_cast<std::size_t>(branches)));
  if (b < 0 || b >= branches) throw std::invalid_argument("sample_test_label: branch out of range");

  Label a = Label::Zero(3);
  const bool id = kind == CaseKind::InDistribution;
  if (arity == Arity::Single) {
    a(b) = id ? rng.uniform(0.0, 1.0) : rng.uniform(1.0, 2.0);
    return a;
  }
  if (id) {
    if (b == 0) {
      a(0) = rng.uniform(0.0, 1.0);
      a(1) = rng.uniform(0.0, 1.0);
    } else {
      const double c = rng.uniform(0.0, 1.0);
      a(2) = c;
      a(b == 1 ? 0 : 1) = rng.uniform(0.0, 1.0 - c);
    }
    return a;
  }
  if (b < 2) {
    // [free, coupled, 0] or the mirrored arrangement
    const Eigen::Index free = b == 0 ? 0 : 1;
    const Eigen::Index coupled = 1 - free;
    const double u = rng.uniform(0.0, 2.0);
    const double v0 = rng.uniform(0.0, 1.0);
    a(free) = u;
    a(coupled) = u >= 1.0 ? 2.0 * v0 : v0 + 1.0;
  } else {
    const double c = rng.uniform(0.0, 2.0);
    const double s0 = rng.uniform(0.0, 1.0);
    a(2) = c;
    a(b == 2 ? 0 : 1) = s0 * (2.0 - std::max(1.0, c)) + std::max(1.0 - c, 0.0);
  }
  return a;
}

/// Membership in the region a sampler of (kind, arity) draws from.
inline bool in_region(const Label& a, CaseKind kind, Arity arity, double tol = 1e-12) {
  if (a.size() != 3 || !a.allFinite()) return false;
  auto within = [tol](double v, double lo, double hi) { return v >= lo - tol && v <= hi + tol; };
  const bool id = kind == CaseKind::InDistribution;
  if (arity == Arity::Single) {
    int nonzero = 0;
    for (Eigen::Index k = 0; k < 3; ++k) {
      if (a(k) == 0.0) continue;
      ++nonzero;
      if (!(id ? within(a(k), 0.0, 1.0) : within(a(k), 1.0, 2.0))) return false;
    }
    return id ? nonzero <= 1 : nonzero == 1;
  }
  if (id) {
    if (a(2) == 0.0 && within(a(0), 0.0, 1.0) && within(a(1), 0.0, 1.0)) return true;
    for (Eigen::Index other : {0, 1}) {
      const Eigen::Index zero = 1 - other;
      if (a(zero) == 0.0 && within(a(2), 0.0, 1.0) && within(a(other), 0.0, 1.0 - a(2))) return true;
    }
    return false;
  }
  if (a(2) == 0.0) {
    for (Eigen::Index free : {0, 1}) {
      const double u = a(free), v = a(1 - free);
      if (!within(u, 0.0, 2.0)) continue;
      if (u >= 1.0 ? within(v, 0.0, 2.0) : within(v, 1.0, 2.0)) return true;
    }
  }
  for (Eigen::Index other : {0, 1}) {
    const Eigen::Index zero = 1 - other;
    const double c = a(2);
    if (a(zero) != 0.0 || !within(c, 0.0, 2.0)) continue;
    const double lo = std::max(1.0 - c, 0.0);
    const double hi = lo + (2.0 - std::max(1.0, c));
    if (within(a(other), lo, hi)) return true;
  }
  return false;
}

/// Per kind: `rounds` passes over 3 single settings (one per coordinate) and
/// 4 double settings (branch = setting mod branch count). The first half of
/// the ID rounds is validation, the rest test; every OOD case is test.
inline std::vector<TestCase> make_test_suite(Rng& rng, int rounds = 2) {
  if (rounds < 1) throw std::invalid_argument("make_test_suite: rounds must be >= 1");
  std::vector<TestCase> suite;
  for (CaseKind kind : {CaseKind::InDistribution, CaseKind::OutOfDistribution}) {
    for (int r = 0; r < rounds; ++r) {
      const Split split =
          (kind == CaseKind::InDistribution && r < rounds / 2) ? Split::Validation : Split::Test;
      for (int s = 0; s < 3; ++s) suite.push_back({sample_test_label(rng, kind, Arity::Single, s), kind, Arity::Single, split, s});
      for (int s = 0; s < 4; ++s) {
        const int b = s % branch_count(kind, Arity::Double);
        suite.push_back({sample_test_label(rng, kind, Arity::Double, b), kind, Arity::Double, split, s});
      }
    }
  }
  return suite;
}

struct ExperimentConfig {
  GroundTruthModel truth = simulation_ground_truth();
  std::vector<Label> training_labels = simulation_training_labels();  ///< first entry is the reference a_0
  Eigen::Index samples_per_domain = 4096;
  Eigen::Index eval_size = 2048;  ///< rows per predicted and ground-truth test set
  ModelConfig model;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2};
  int suite_rounds = 2;
  bool evaluate_validation = false;
  bool evaluate_ood = true;
  std::vector<double> noise_levels{0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 10.0};
  Eigen::Index sweep_noise_dims = 8;
  std::vector<double> sweep_model_noise_grid{0.0, 0.1, 1.0};  ///< decoder noise levels tried per sweep point
  std::vector<std::uint64_t> sweep_seeds{1};

  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.train.lr_final_fraction = 0.01;
    return c;
  }

  static ExperimentConfig paper() {
    ExperimentConfig c;
    c.samples_per_domain = 1 << 14;
    c.train.epochs = 2000;
    c.train.batch_size = 1 << 12;
    c.seeds = {1, 2, 3, 4, 5};
    return c;
  }

  Eigen::Index observed_dim() const { return truth.observed_dim(); }

  void validate() const {
    truth.validate();
    model_config_check();
    train.validate();
    if (training_labels.size() < 2) throw std::invalid_argument("ExperimentConfig: need a reference and >= 1 perturbed label");
    for (const auto& a : training_labels)
      if (a.size() != truth.num_perturbations()) throw ShapeError("ExperimentConfig: training label length must equal K");
    if (samples_per_domain < 2) throw std::invalid_argument("ExperimentConfig: samples_per_domain must be >= 2");
    if (eval_size < 2) throw std::invalid_argument("ExperimentConfig: eval_size must be >= 2");
    if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: no seeds");
    if (suite_rounds < 1) throw std::invalid_argument("ExperimentConfig: suite_rounds must be >= 1");
    for (double s : noise_levels)
      if (s < 0.0) throw std::invalid_argument("ExperimentConfig: negative noise level");
    if (sweep_model_noise_grid.empty()) throw std::invalid_argument("ExperimentConfig: empty decoder noise grid");
    for (double s : sweep_model_noise_grid)
      if (s < 0.0) throw std::invalid_argument("ExperimentConfig: negative decoder noise level");
  }

 private:
  void model_config_check() const {
    if (model.latent_dim < 1 || model.width < 1 || model.hidden_layers < 0 || model.noise_dim < 0) {
      throw std::invalid_argument("ExperimentConfig: invalid model dimensions");
    }
  }
};

struct EvalRow {
  std::string method;
  std::size_t case_id = 0;
  CaseKind kind = CaseKind::InDistribution;
  Split split = Split::Test;
  Arity arity = Arity::Single;
  std::uint64_t seed = 0;
  Label label;
  double energy_distance = 0.0;
  double mmd2 = 0.0;
  double mean_diff = 0.0;
};

struct AggregateRow {
  std::string method;
  CaseKind kind = CaseKind::InDistribution;
  std::size_t cases = 0;  ///< per seed
  std::size_t seeds = 0;
  double ed_mean = 0.0, ed_std = 0.0;
  double mmd2_mean = 0.0, mmd2_std = 0.0;
  double mean_diff_mean = 0.0, mean_diff_std = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  /// Test-split rows only. Each seed's metrics are averaged over its cases;
  /// mean and sample std are then taken across seeds (std 0 for one seed).
  std::vector<AggregateRow> aggregate() const;
  /// Aggregate of one (method, kind); throws when absent.
  AggregateRow find(const std::string& method, CaseKind kind) const;
};

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"Pool All", "Pseudobulking", "Linear Regression", "PDAE", "Oracle"};
  return names;
}

inline std::vector<AggregateRow> EvalReport::aggregate() const {
  // (method, kind) -> seed -> sums
  struct Acc {
    double ed = 0, mmd = 0, md = 0;
    std::size_t n = 0;
  };
  std::map<std::pair<std::string, int>, std::map<std::uint64_t, Acc>> groups;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& r : rows) {
    if (r.split != Split::Test) continue;
    const auto key = std::make_pair(r.method, static_cast<int>(r.kind));
    if (!groups.count(key)) order.push_back(key);
    auto& acc = groups[key][r.seed];
    acc.ed += r.energy_distance;
    acc.mmd += r.mmd2;
    acc.md += r.mean_diff;
    ++acc.n;
  }
  std::vector<AggregateRow> out;
  for (const auto& key : order) {
    const auto& per_seed = groups[key];
    AggregateRow a;
    a.method = key.first;
    a.kind = static_cast<CaseKind>(key.second);
    a.seeds = per_seed.size();
    a.cases = per_seed.begin()->second.n;
    std::vector<std::array<double, 3>> vals;
    for (const auto& [seed, acc] : per_seed) {
      const double n = static_cast<double>(acc.n);
      vals.push_back({acc.ed / n, acc.mmd / n, acc.md / n});
    }
    std::array<double, 3> mean{0, 0, 0}, sd{0, 0, 0};
    for (const auto& v : vals)
      for (int j = 0; j < 3; ++j) mean[j] += v[j] / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      for (const auto& v : vals)
        for (int j = 0; j < 3; ++j) sd[j] += (v[j] - mean[j]) * (v[j] - mean[j]);
      for (int j = 0; j < 3; ++j) sd[j] = std::sqrt(sd[j] / static_cast<double>(vals.size() - 1));
    }
    a.ed_mean = mean[0];
    a.ed_std = sd[0];
    a.mmd2_mean = mean[1];
    a.mmd2_std = sd[1];
    a.mean_diff_mean = mean[2];
    a.mean_diff_std = sd[2];
    out.push_back(a);
  }
  return out;
}

inline AggregateRow EvalReport::find(const std::string& method, CaseKind kind) const {
  for (const auto& a : aggregate())
    if (a.method == method && a.kind == kind) return a;
  throw std::out_of_range("EvalReport: no rows for " + method + " / " + to_string(kind));
}

/// At most n rows drawn without replacement, in random order.
inline Matrix subsample_rows(const Matrix& m, Eigen::Index n, Rng& rng) {
  if (m.rows() <= n) return m;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(i) + rng.index(idx.size() - static_cast<std::size_t>(i));
    std::swap(idx[static_cast<std::size_t>(i)], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(n));
  return take_rows(m, idx);
}

inline std::vector<Domain> generate_training_domains(const ExperimentConfig& cfg, Rng& rng) {
  std::vector<Domain> domains;
  for (const auto& a : cfg.training_labels) domains.push_back(generate_domain(cfg.truth, a, cfg.samples_per_domain, rng));
  return domains;
}

/// Everything produced for one seed of the simulation.
struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<Domain> domains;
  std::vector<TestCase> suite;
  PdaeModel model;
  TrainHistory history;
  std::vector<EvalRow> rows;
};

using RowSink = std::function<void(const EvalRow&)>;

namespace detail {

inline bool evaluated(const ExperimentConfig& cfg, const TestCase& tc) {
  if (tc.split == Split::Validation && !cfg.evaluate_validation) return false;
  if (tc.kind == CaseKind::OutOfDistribution && !cfg.evaluate_ood) return false;
  return true;
}

}  // namespace detail

/// Scores every method on every selected test case against a fresh
/// ground-truth sample of that case.
inline std::vector<EvalRow> evaluate_methods(const ExperimentConfig& cfg, const std::vector<Domain>& domains,
                                             const PdaeModel& model, const std::vector<TestCase>& suite,
                                             std::uint64_t seed, Rng& rng, const RowSink& sink = {}) {
  const MeanModel linear = fit_mean_model(domains);
  const SampleSet pooled = pool_all(domains);
  const auto weights = PredictionWeights::uniform(domains.size());
  std::vector<EvalRow> rows;
  for (std::size_t c = 0; c < suite.size(); ++c) {
    const TestCase& tc = suite[c];
    if (!detail::evaluated(cfg, tc)) continue;
    Rng case_rng = rng.split();
    const SampleSet truth = generate_domain(cfg.truth, tc.label, cfg.eval_size, case_rng, false).x;
    for (const auto& method : method_names()) {
      SampleSet pred;
      if (method == "Pool All") {
        pred = subsample_rows(pooled, cfg.eval_size, case_rng);
      } else if (method == "Pseudobulking") {
        pred = subsample_rows(pseudobulk(domains, tc.label), cfg.eval_size, case_rng);
      } else if (method == "Linear Regression") {
        pred = subsample_rows(mean_shift_distribution(domains.front().x, predict_mean(linear, tc.label)),
                              cfg.eval_size, case_rng);
      } else if (method == "PDAE") {
        pred = predict(model, domains, tc.label, weights, case_rng, cfg.eval_size);
      } else {
        pred = generate_domain(cfg.truth, tc.label, cfg.eval_size, case_rng, false).x;
      }
      EvalRow row{method, c, tc.kind, tc.split, tc.arity, seed, tc.label,
                  energy_distance(pred, truth, 1.0), mmd_squared_median(pred, truth), mean_difference(pred, truth)};
      if (sink) sink(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

/// Independent random streams of one seed, split in a fixed order so each
/// stage (data, test suite, init, evaluation, training) can be rerun alone.
struct SeedStreams {
  Rng data, suite, init, eval;
  std::uint64_t train_seed;

  explicit SeedStreams(std::uint64_t seed) : SeedStreams(Rng(seed)) {}

 private:
  explicit SeedStreams(Rng master)
      : data(master.split()), suite(master.split()), init(master.split()), eval(master.split()),
        train_seed(master.next_u64()) {}
};

/// Data generation, training and evaluation for one seed.
inline SeedRun run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const RowSink& sink = {}) {
  cfg.validate();
  SeedStreams rng(seed);
  SeedRun run;
  run.seed = seed;
  run.domains = generate_training_domains(cfg, rng.data);
  run.suite = make_test_suite(rng.suite, cfg.suite_rounds);
  run.model = init_model(cfg.model, cfg.observed_dim(), cfg.truth.num_perturbations(), rng.init);
  TrainConfig tc = cfg.train;
  tc.seed = rng.train_seed;
  run.history = train(run.model, run.domains, tc);
  run.rows = evaluate_methods(cfg, run.domains, run.model, run.suite, seed, rng.eval, sink);
  return run;
}

/// All seeds of the simulation. `sink` sees every row as soon as it exists,
/// so callers can persist partial results.
inline EvalReport run_simulation(const ExperimentConfig& cfg, const RowSink& sink = {}) {
  cfg.validate();
  EvalReport report;
  for (std::uint64_t seed : cfg.seeds) {
    SeedRun run = run_seed(cfg, seed, sink);
    report.rows.insert(report.rows.end(), run.rows.begin(), run.rows.end());
  }
  return report;
}

struct SweepCandidate {
  double model_noise_std = 0.0;
  double validation_mmd2 = 0.0;
};

struct SweepPoint {
  double noise_std = 0.0;
  double model_noise_std = 0.0;  ///< selected decoder noise level
  std::vector<SweepCandidate> candidates;
  EvalReport report;             ///< run at the selected level, validation rows included
};

/// Configuration of one sweep run: d_eps appended noise columns with the
/// given std, a decoder with d_eps noise inputs of the given std, ID cases
/// only, validation cases scored for model selection.
inline ExperimentConfig sweep_config(const ExperimentConfig& base, double noise_std, double model_noise_std) {
  if (base.sweep_noise_dims < 1) throw std::invalid_argument("sweep_config: sweep_noise_dims must be >= 1");
  ExperimentConfig c = base;
  c.truth.noise_dims = base.sweep_noise_dims;
  c.truth.noise_std = noise_std;
  c.model.noise_dim = base.sweep_noise_dims;
  c.model.noise_std = model_noise_std;
  c.evaluate_ood = false;
  c.evaluate_validation = true;
  c.seeds = base.sweep_seeds;
  return c;
}

/// Mean MMD^2 of one method over the validation rows of a report.
inline double validation_mmd2(const EvalReport& report, const std::string& method = "PDAE") {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : report.rows)
    if (r.method == method && r.split == Split::Validation) {
      sum += r.mmd2;
      ++n;
    }
  if (n == 0) throw std::out_of_range("validation_mmd2: no validation rows for " + method);
  return sum / static_cast<double>(n);
}

/// Trains one model per decoder noise level and keeps the one with the
/// lowest PDAE validation MMD^2 (first wins on ties).
inline SweepPoint run_sweep_point(const ExperimentConfig& cfg, double noise_std) {
  cfg.validate();
  SweepPoint p;
  p.noise_std = noise_std;
  double best = std::numeric_limits<double>::infinity();
  for (double m : cfg.sweep_model_noise_grid) {
    EvalReport r = run_simulation(sweep_config(cfg, noise_std, m));
    const double score = validation_mmd2(r);
    p.candidates.push_back({m, score});
    if (score < best) {
      best = score;
      p.model_noise_std = m;
      p.report = std::move(r);
    }
  }
  return p;
}

inline std::vector<SweepPoint> run_noise_sweep(const ExperimentConfig& cfg) {
  std::vector<SweepPoint> out;
  for (double s : cfg.noise_levels) out.push_back(run_sweep_point(cfg, s));
  return out;
}

}  // namespace pdae
