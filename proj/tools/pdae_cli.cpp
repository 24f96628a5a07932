// pdae: command-line driver for data generation, training, prediction,
// evaluation and the reproduction runs.
//
// Exit status: 0 success, 1 usage or config error, 2 failed verification,
// 3 I/O error.

#include "pdae/io.hpp"
#include "pdae/theory.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace pdae;

enum Exit { kOk = 0, kUsage = 1, kVerification = 2, kIo = 3 };

struct Options {
  std::string config;
  std::string scale = "desk";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string label;
  std::string weights = "uniform";
  Eigen::Index samples = 0;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig base = o.scale == "paper" ? ExperimentConfig::paper() : ExperimentConfig::desk();
  if (o.config.empty()) return base;
  return load_config(o.config, std::move(base));
}

std::uint64_t resolve_seed(const Options& o, const ExperimentConfig& c) { return o.seed ? *o.seed : c.seeds.front(); }

Label parse_label(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    char* end = nullptr;
    const double x = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0') throw FormatError("--label: not a number '" + cell + "'");
    v.push_back(x);
  }
  if (v.empty()) throw FormatError("--label: empty");
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

PredictionWeights parse_weights(const std::string& spec, std::size_t domains) {
  if (spec == "uniform") return PredictionWeights::uniform(domains);
  if (spec == "control-only") return PredictionWeights::one_hot(domains, 0);
  PredictionWeights w{parse_label(spec)};
  try {
    w.validate(domains);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("--weights: ") + e.what());
  }
  return w;
}

fs::path sibling_manifest(const fs::path& file) {
  return file.parent_path() / (file.stem().string() + ".manifest.json");
}

int cmd_generate(const Options& o) {
  const std::string started = utc_timestamp();
  const ExperimentConfig cfg = resolve_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  SeedStreams rng(seed);
  const auto domains = generate_training_domains(cfg, rng.data);
  auto files = write_dataset(o.out, domains);
  write_manifest(fs::path(o.out) / "manifest.json", {"generate", config_hash(cfg), seed, files}, started);
  std::printf("wrote %zu domains to %s\n", domains.size(), o.out.c_str());
  return kOk;
}

int cmd_train(const Options& o) {
  const std::string started = utc_timestamp();
  const ExperimentConfig cfg = resolve_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const auto domains = read_dataset(o.data);
  SeedStreams rng(seed);
  PdaeModel model = init_model(cfg.model, domains.front().x.cols(), domains.front().label.size(), rng.init);
  TrainConfig tc = cfg.train;
  tc.seed = rng.train_seed;
  const TrainHistory history = train(model, domains, tc);
  save_checkpoint(o.out, model, &history);
  write_manifest(sibling_manifest(o.out), {"train", config_hash(cfg), seed, {fs::path(o.out).filename().string()}},
                 started);
  if (!history.epochs.empty())
    std::printf("trained %d epochs, final perturbation loss %.6g\n", tc.epochs, history.epochs.back().perturbation);
  return kOk;
}

int cmd_predict(const Options& o) {
  const std::string started = utc_timestamp();
  if (o.label.empty()) throw CLI::RequiredError("--label");
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const auto domains = read_dataset(o.data);
  if (domains.front().x.cols() != ck.model.observed_dim() || domains.front().label.size() != ck.model.num_perturbations())
    throw FormatError("checkpoint dimensions do not match the dataset in " + o.data);
  const Label a = parse_label(o.label);
  const PredictionWeights w = parse_weights(o.weights, domains.size());
  const std::uint64_t seed = o.seed.value_or(0);
  Rng rng(seed);
  const SampleSet pred = predict(ck.model, domains, a, w, rng, o.samples);
  write_text(o.out, matrix_csv(pred, numbered("x", pred.cols())));
  write_manifest(sibling_manifest(o.out), {"predict", "", seed, {fs::path(o.out).filename().string()}}, started);
  std::printf("wrote %lld predicted rows to %s\n", static_cast<long long>(pred.rows()), o.out.c_str());
  return kOk;
}

int cmd_evaluate(const Options& o) {
  const std::string started = utc_timestamp();
  const ExperimentConfig cfg = resolve_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const auto domains = read_dataset(o.data);
  SeedStreams rng(seed);
  const auto suite = make_test_suite(rng.suite, cfg.suite_rounds);
  EvalReport report;
  report.rows = evaluate_methods(cfg, domains, ck.model, suite, seed, rng.eval);
  const fs::path out(o.out);
  write_text(out / "report.csv", report_rows_csv(report.rows));
  write_text(out / "summary.csv", summary_csv(report));
  write_manifest(out / "manifest.json", {"evaluate", config_hash(cfg), seed, {"report.csv", "summary.csv"}}, started);
  std::cout << summary_csv(report);
  return kOk;
}

int cmd_reproduce_table1(const Options& o) {
  const std::string started = utc_timestamp();
  ExperimentConfig cfg = resolve_config(o);
  if (o.seed) cfg.seeds = {*o.seed};
  const fs::path out(o.out);
  const fs::path rows_path = out / "rows.csv";
  write_text(rows_path, report_rows_csv({}));
  std::ofstream rows_file(rows_path, std::ios::app | std::ios::binary);
  if (!rows_file) throw IoError("cannot append to " + rows_path.string());
  auto sink = [&](const EvalRow& r) {
    const std::string line = report_rows_csv({r});
    rows_file << line.substr(line.find('\n') + 1) << std::flush;
  };

  EvalReport report;
  std::string ident = "seed,min_r2,r2_per_coordinate,residual_rms,max_shift_gap\n";
  for (std::uint64_t seed : cfg.seeds) {
    std::fprintf(stderr, "seed %llu: training\n", static_cast<unsigned long long>(seed));
    const SeedRun run = run_seed(cfg, seed, sink);
    report.rows.insert(report.rows.end(), run.rows.begin(), run.rows.end());
    const auto id = verify_identifiability(run.model, cfg.truth, run.domains);
    ident += std::to_string(seed) + "," + format_double(id.min_r_squared()) + "," + label_string(id.r_squared) + "," +
             format_double(id.residual_rms) + "," + format_double(id.max_shift_gap) + "\n";
  }
  write_text(out / "table1.csv", summary_csv(report));
  write_text(out / "identifiability.csv", ident);
  write_manifest(out / "manifest.json",
                 {"reproduce-table1", config_hash(cfg), cfg.seeds.front(), {"rows.csv", "table1.csv", "identifiability.csv"}},
                 started);
  std::cout << summary_csv(report);
  return kOk;
}

int cmd_sweep_noise(const Options& o) {
  const std::string started = utc_timestamp();
  ExperimentConfig cfg = resolve_config(o);
  if (o.seed) cfg.sweep_seeds = {*o.seed};
  const fs::path out(o.out);
  std::vector<std::string> files;
  std::string combined =
      "noise_std,model_noise_std,method,kind,seeds,cases,ED_mean,ED_std,MMD2_mean,MMD2_std,mean_diff_mean,mean_diff_std\n";
  std::string selection = "noise_std,model_noise_std,validation_MMD2,selected\n";
  for (std::size_t i = 0; i < cfg.noise_levels.size(); ++i) {
    const double s = cfg.noise_levels[i];
    std::fprintf(stderr, "noise level %g\n", s);
    const SweepPoint p = run_sweep_point(cfg, s);
    for (const auto& c : p.candidates)
      selection += format_double(s) + "," + format_double(c.model_noise_std) + "," + format_double(c.validation_mmd2) +
                   "," + (c.model_noise_std == p.model_noise_std ? "1" : "0") + "\n";
    const std::string summary = summary_csv(p.report);
    const std::string name = "sweep_" + std::to_string(i) + ".csv";
    write_text(out / name,
               "noise_std=" + format_double(s) + ",model_noise_std=" + format_double(p.model_noise_std) + "\n" + summary);
    files.push_back(name);
    std::stringstream ss(summary);
    std::string line;
    std::getline(ss, line);
    while (std::getline(ss, line)) combined += format_double(s) + "," + format_double(p.model_noise_std) + "," + line + "\n";
  }
  write_text(out / "sweep_selection.csv", selection);
  files.push_back("sweep_selection.csv");
  write_text(out / "sweep_summary.csv", combined);
  files.push_back("sweep_summary.csv");
  write_manifest(out / "manifest.json", {"sweep-noise", config_hash(cfg), cfg.sweep_seeds.front(), files}, started);
  std::cout << combined;
  return kOk;
}

int cmd_verify_theory(const Options& o) {
  const std::string started = utc_timestamp();
  const std::uint64_t seed = o.seed.value_or(1);
  const auto results = run_theory_suite(seed);
  std::string csv = "check,passed,detail\n";
  bool all = true;
  for (const auto& r : results) {
    std::printf("%s %s  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    csv += r.name + "," + (r.passed ? "1" : "0") + "," + r.detail + "\n";
    all = all && r.passed;
  }
  if (!o.out.empty()) {
    const fs::path out(o.out);
    write_text(out / "theory.csv", csv);
    write_manifest(out / "manifest.json", {"verify-theory", "", seed, {"theory.csv"}}, started);
  }
  return all ? kOk : kVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbation distribution autoencoder: simulation, training and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto add_config = [&](CLI::App* c) {
    c->add_option("--config", o.config, "JSON experiment config (overlays the --scale preset)");
    c->add_option("--scale", o.scale, "Preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  };
  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "Random seed"); };

  auto* gen = app.add_subcommand("generate", "Sample training domains to CSV");
  add_config(gen);
  add_seed(gen);
  gen->add_option("--out", o.out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model on a generated dataset");
  add_config(tr);
  add_seed(tr);
  tr->add_option("--data", o.data, "Dataset directory")->required();
  tr->add_option("--out", o.out, "Checkpoint file")->required();

  auto* pr = app.add_subcommand("predict", "Sample the predicted distribution of a label");
  add_seed(pr);
  pr->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  pr->add_option("--data", o.data, "Dataset directory")->required();
  pr->add_option("--label", o.label, "Comma-separated perturbation label")->required();
  pr->add_option("--weights", o.weights, "uniform, control-only or comma-separated weights");
  pr->add_option("--samples", o.samples, "Rows to draw (default: largest domain size)");
  pr->add_option("--out", o.out, "Output CSV")->required();

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint and the baselines on the test suite");
  add_config(ev);
  add_seed(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  ev->add_option("--data", o.data, "Dataset directory")->required();
  ev->add_option("--out", o.out, "Output directory")->required();

  auto* t1 = app.add_subcommand("reproduce-table1", "Full simulation over all configured seeds");
  add_config(t1);
  add_seed(t1);
  t1->add_option("--out", o.out, "Output directory")->required();

  auto* sw = app.add_subcommand("sweep-noise", "Noise-dimension robustness sweep");
  add_config(sw);
  add_seed(sw);
  sw->add_option("--out", o.out, "Output directory")->required();

  auto* vt = app.add_subcommand("verify-theory", "Seeded numerical checks of the theory");
  add_seed(vt);
  vt->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(o);
    if (*tr) return cmd_train(o);
    if (*pr) return cmd_predict(o);
    if (*ev) return cmd_evaluate(o);
    if (*t1) return cmd_reproduce_table1(o);
    if (*sw) return cmd_sweep_noise(o);
    if (*vt) return cmd_verify_theory(o);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
