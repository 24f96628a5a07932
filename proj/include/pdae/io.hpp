#pragma once

// File formats: experiment configs (JSON, strict keys), domain CSVs with a
// labels.json index, versioned JSON checkpoints, report CSVs and run
// manifests. Floats are written with 17 significant digits.

#include "pdae/harness.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace pdae {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// File could not be read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration or file content.
class FormatError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

inline json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw FormatError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(where + "." + key + ": " + e.what());
  }
}

inline json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw FormatError(where + ": expected an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError(where + ": expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

/// Nested rows [[...], [...]].
inline json rows_json(const Matrix& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vector_json(m.row(i).transpose()));
  return a;
}

inline Matrix rows_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw FormatError(where + ": expected a nonempty array of rows");
  const Vector first = vector_from(j[0], where);
  Matrix m(static_cast<Eigen::Index>(j.size()), first.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const Vector r = vector_from(j[i], where);
    if (r.size() != m.cols()) throw FormatError(where + ": ragged rows");
    m.row(static_cast<Eigen::Index>(i)) = r.transpose();
  }
  return m;
}

/// {"rows", "cols", "data"} with row-major flat data.
inline json flat_json(const Matrix& m) {
  json d = json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) d.push_back(m.data()[i]);
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", d}};
}

inline Matrix flat_from(const json& j, const std::string& where) {
  reject_unknown_keys(j, {"rows", "cols", "data"}, where);
  if (!j.contains("rows") || !j.contains("cols") || !j.contains("data"))
    throw FormatError(where + ": needs rows, cols and data");
  const auto rows = j["rows"].get<Eigen::Index>();
  const auto cols = j["cols"].get<Eigen::Index>();
  const Vector data = vector_from(j["data"], where + ".data");
  if (rows < 0 || cols < 0 || data.size() != rows * cols)
    throw FormatError(where + ": data length " + std::to_string(data.size()) + " does not match " +
                      shape_str(rows, cols));
  Matrix m(rows, cols);
  std::copy(data.data(), data.data() + data.size(), m.data());
  return m;
}

inline json mlp_json(const MlpParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) layers.push_back({{"weight", flat_json(l.weight)}, {"bias", vector_json(l.bias)}});
  return layers;
}

inline MlpParams mlp_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw FormatError(where + ": expected a nonempty layer list");
  MlpParams p;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    reject_unknown_keys(j[i], {"weight", "bias"}, w);
    if (!j[i].contains("weight") || !j[i].contains("bias")) throw FormatError(w + ": needs weight and bias");
    p.layers.push_back({flat_from(j[i]["weight"], w + ".weight"), vector_from(j[i]["bias"], w + ".bias")});
  }
  try {
    p.validate();
  } catch (const ShapeError& e) {
    throw FormatError(where + ": " + e.what());
  }
  return p;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Experiment config

inline json mixing_json(const MixingSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, ComplexExpMixing>) return {{"type", "complex_exp"}};
        else if constexpr (std::is_same_v<T, IdentityMixing>) return {{"type", "identity"}};
        else if constexpr (std::is_same_v<T, AffineMixing>)
          return {{"type", "affine"}, {"m", detail::rows_json(s.m)}, {"b", detail::vector_json(s.b)}};
        else return {{"type", "linear_sem"}, {"b", detail::rows_json(s.b)}};
      },
      spec);
}

inline MixingSpec mixing_from(const json& j, const std::string& where) {
  if (j.is_string()) return mixing_from(json{{"type", j}}, where);
  detail::reject_unknown_keys(j, {"type", "m", "b"}, where);
  if (!j.contains("type")) throw FormatError(where + ": missing 'type'");
  const std::string type = j["type"].get<std::string>();
  if (type == "complex_exp") return ComplexExpMixing{};
  if (type == "identity") return IdentityMixing{};
  if (type == "affine") {
    if (!j.contains("m") || !j.contains("b")) throw FormatError(where + ": affine mixing needs m and b");
    return AffineMixing{detail::rows_from(j["m"], where + ".m"), detail::vector_from(j["b"], where + ".b")};
  }
  if (type == "linear_sem") {
    if (!j.contains("b")) throw FormatError(where + ": linear_sem mixing needs b");
    return LinearSemMixing{detail::rows_from(j["b"], where + ".b")};
  }
  throw FormatError(where + ".type: unknown mixing '" + type + "'");
}

inline json config_json(const ExperimentConfig& c) {
  json labels = json::array();
  for (const auto& a : c.training_labels) labels.push_back(detail::vector_json(a));
  json truth = {{"w", detail::rows_json(c.truth.w)},
                {"base_mean", detail::vector_json(c.truth.base_mean)},
                {"base_std", c.truth.base_std},
                {"mixing", mixing_json(c.truth.mixing)},
                {"noise_dims", c.truth.noise_dims},
                {"noise_std", c.truth.noise_std}};
  if (c.truth.base_factor) truth["base_factor"] = detail::rows_json(*c.truth.base_factor);
  return {{"ground_truth", truth},
          {"training_labels", labels},
          {"samples_per_domain", c.samples_per_domain},
          {"eval_size", c.eval_size},
          {"seeds", c.seeds},
          {"suite_rounds", c.suite_rounds},
          {"evaluate_validation", c.evaluate_validation},
          {"evaluate_ood", c.evaluate_ood},
          {"noise_levels", c.noise_levels},
          {"sweep_noise_dims", c.sweep_noise_dims},
          {"sweep_model_noise_grid", c.sweep_model_noise_grid},
          {"sweep_seeds", c.sweep_seeds},
          {"model",
           {{"latent_dim", c.model.latent_dim},
            {"hidden_layers", c.model.hidden_layers},
            {"width", c.model.width},
            {"noise_dim", c.model.noise_dim},
            {"noise_std", c.model.noise_std},
            {"beta", c.model.beta}}},
          {"train",
           {{"lambda_rec", c.train.lambda_rec},
            {"lambda_prior", c.train.lambda_prior},
            {"lambda_sparsity", c.train.lambda_sparsity},
            {"lr_encoder", c.train.lr_encoder},
            {"lr_decoder", c.train.lr_decoder},
            {"lr_w", c.train.lr_w},
            {"lr_final_fraction", c.train.lr_final_fraction},
            {"batch_size", c.train.batch_size},
            {"epochs", c.train.epochs},
            {"standardize", c.train.standardize}}}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are errors.
inline ExperimentConfig config_from(const json& j, ExperimentConfig base = ExperimentConfig::desk()) {
  using detail::read_field;
  const std::string w = "config";
  detail::reject_unknown_keys(j, {"scale", "ground_truth", "training_labels", "samples_per_domain", "eval_size",
                                  "seeds", "suite_rounds", "evaluate_validation", "evaluate_ood", "noise_levels",
                                  "sweep_noise_dims", "sweep_model_noise_grid", "sweep_seeds", "model", "train"},
                              w);
  if (j.contains("scale")) {
    const std::string scale = j["scale"].get<std::string>();
    if (scale == "desk") base = ExperimentConfig::desk();
    else if (scale == "paper") base = ExperimentConfig::paper();
    else throw FormatError("config.scale: expected 'desk' or 'paper', got '" + scale + "'");
  }
  ExperimentConfig c = std::move(base);
  if (j.contains("ground_truth")) {
    const json& g = j["ground_truth"];
    const std::string gw = w + ".ground_truth";
    detail::reject_unknown_keys(g, {"w", "base_mean", "base_std", "base_factor", "mixing", "noise_dims", "noise_std"}, gw);
    if (g.contains("w")) c.truth.w = detail::rows_from(g["w"], gw + ".w");
    if (g.contains("base_mean")) c.truth.base_mean = detail::vector_from(g["base_mean"], gw + ".base_mean");
    if (g.contains("base_factor")) c.truth.base_factor = detail::rows_from(g["base_factor"], gw + ".base_factor");
    if (g.contains("mixing")) c.truth.mixing = mixing_from(g["mixing"], gw + ".mixing");
    read_field(g, "base_std", c.truth.base_std, gw);
    read_field(g, "noise_dims", c.truth.noise_dims, gw);
    read_field(g, "noise_std", c.truth.noise_std, gw);
  }
  if (j.contains("training_labels")) {
    const json& l = j["training_labels"];
    if (!l.is_array()) throw FormatError(w + ".training_labels: expected an array");
    c.training_labels.clear();
    for (std::size_t i = 0; i < l.size(); ++i)
      c.training_labels.push_back(detail::vector_from(l[i], w + ".training_labels[" + std::to_string(i) + "]"));
  }
  read_field(j, "samples_per_domain", c.samples_per_domain, w);
  read_field(j, "eval_size", c.eval_size, w);
  read_field(j, "seeds", c.seeds, w);
  read_field(j, "suite_rounds", c.suite_rounds, w);
  read_field(j, "evaluate_validation", c.evaluate_validation, w);
  read_field(j, "evaluate_ood", c.evaluate_ood, w);
  read_field(j, "noise_levels", c.noise_levels, w);
  read_field(j, "sweep_noise_dims", c.sweep_noise_dims, w);
  read_field(j, "sweep_model_noise_grid", c.sweep_model_noise_grid, w);
  read_field(j, "sweep_seeds", c.sweep_seeds, w);
  if (j.contains("model")) {
    const json& m = j["model"];
    const std::string mw = w + ".model";
    detail::reject_unknown_keys(m, {"latent_dim", "hidden_layers", "width", "noise_dim", "noise_std", "beta"}, mw);
    read_field(m, "latent_dim", c.model.latent_dim, mw);
    read_field(m, "hidden_layers", c.model.hidden_layers, mw);
    read_field(m, "width", c.model.width, mw);
    read_field(m, "noise_dim", c.model.noise_dim, mw);
    read_field(m, "noise_std", c.model.noise_std, mw);
    read_field(m, "beta", c.model.beta, mw);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    const std::string tw = w + ".train";
    detail::reject_unknown_keys(t, {"lambda_rec", "lambda_prior", "lambda_sparsity", "lr_encoder", "lr_decoder",
                                    "lr_w", "lr_final_fraction", "batch_size", "epochs", "standardize"},
                                tw);
    read_field(t, "lambda_rec", c.train.lambda_rec, tw);
    read_field(t, "lambda_prior", c.train.lambda_prior, tw);
    read_field(t, "lambda_sparsity", c.train.lambda_sparsity, tw);
    read_field(t, "lr_encoder", c.train.lr_encoder, tw);
    read_field(t, "lr_decoder", c.train.lr_decoder, tw);
    read_field(t, "lr_w", c.train.lr_w, tw);
    read_field(t, "lr_final_fraction", c.train.lr_final_fraction, tw);
    read_field(t, "batch_size", c.train.batch_size, tw);
    read_field(t, "epochs", c.train.epochs, tw);
    read_field(t, "standardize", c.train.standardize, tw);
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& path, ExperimentConfig base = ExperimentConfig::desk()) {
  try {
    return config_from(read_json(path), std::move(base));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// 64-bit FNV-1a of the canonical (compact, key-sorted) config document.
inline std::string config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string matrix_csv(const Matrix& m, const std::vector<std::string>& header) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw ShapeError("matrix_csv: header width mismatch");
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
  out += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

inline CsvTable parse_numeric_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  CsvTable t;
  if (!std::getline(in, line)) throw FormatError(where + ": empty file");
  {
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) t.header.push_back(cell);
  }
  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ls, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw FormatError(where + ": line " + std::to_string(rows + 2) + ": not a number '" + cell + "'");
      data.push_back(v);
      ++cols;
    }
    if (cols != t.header.size())
      throw FormatError(where + ": line " + std::to_string(rows + 2) + " has " + std::to_string(cols) +
                        " fields, header has " + std::to_string(t.header.size()));
    ++rows;
  }
  t.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(t.header.size()));
  std::copy(data.begin(), data.end(), t.values.data());
  return t;
}

inline std::vector<std::string> numbered(const std::string& prefix, Eigen::Index n) {
  std::vector<std::string> h;
  for (Eigen::Index i = 1; i <= n; ++i) h.push_back(prefix + std::to_string(i));
  return h;
}

// ---------------------------------------------------------------------------
// Datasets: domain_<e>.csv + labels.json

inline std::vector<std::string> write_dataset(const fs::path& dir, const std::vector<Domain>& domains) {
  std::vector<std::string> files;
  json labels = json::object();
  for (std::size_t e = 0; e < domains.size(); ++e) {
    const auto& d = domains[e];
    Matrix table = d.x;
    std::vector<std::string> header = numbered("x", d.x.cols());
    if (d.z_pert) {
      table = hstack(table, *d.z_pert);
      const auto zh = numbered("z", d.z_pert->cols());
      header.insert(header.end(), zh.begin(), zh.end());
    }
    const std::string name = "domain_" + std::to_string(e) + ".csv";
    write_text(dir / name, matrix_csv(table, header));
    files.push_back(name);
    labels[std::to_string(e)] = detail::vector_json(d.label);
  }
  write_json(dir / "labels.json", {{"format_version", 1}, {"labels", labels}});
  files.push_back("labels.json");
  return files;
}

inline std::vector<Domain> read_dataset(const fs::path& dir) {
  const fs::path index = dir / "labels.json";
  if (!fs::exists(index)) throw IoError("missing " + index.string());
  const json j = read_json(index);
  detail::reject_unknown_keys(j, {"format_version", "labels"}, index.string());
  if (!j.contains("labels") || !j["labels"].is_object() || j["labels"].empty())
    throw FormatError(index.string() + ": needs a nonempty 'labels' object");
  std::vector<Domain> domains(j["labels"].size());
  for (std::size_t e = 0; e < domains.size(); ++e) {
    const std::string key = std::to_string(e);
    if (!j["labels"].contains(key)) throw FormatError(index.string() + ": labels must be keyed 0.." +
                                                      std::to_string(domains.size() - 1) + ", missing " + key);
    domains[e].label = detail::vector_from(j["labels"][key], index.string() + ".labels." + key);
    const fs::path file = dir / ("domain_" + key + ".csv");
    const CsvTable t = parse_numeric_csv(read_text(file), file.string());
    Eigen::Index nx = 0, nz = 0;
    for (const auto& h : t.header) {
      if (h == "x" + std::to_string(nx + 1)) ++nx;
      else if (h == "z" + std::to_string(nz + 1)) ++nz;
      else throw FormatError(file.string() + ": unexpected column '" + h + "'");
    }
    if (nx == 0) throw FormatError(file.string() + ": no observation columns");
    domains[e].x = t.values.leftCols(nx);
    if (nz > 0) domains[e].z_pert = Matrix(t.values.rightCols(nz));
  }
  for (const auto& d : domains) {
    if (d.x.cols() != domains.front().x.cols()) throw FormatError(dir.string() + ": domains differ in width");
    if (d.label.size() != domains.front().label.size()) throw FormatError(dir.string() + ": label lengths differ");
  }
  return domains;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline json checkpoint_json(const PdaeModel& m, const TrainHistory* history = nullptr) {
  json hist = json::array();
  if (history) {
    for (const auto& e : history->epochs)
      hist.push_back({{"perturbation", e.perturbation},
                      {"reconstruction", e.reconstruction},
                      {"prior", e.prior},
                      {"sparsity", e.sparsity}});
  }
  return {{"format_version", kCheckpointVersion},
          {"dims",
           {{"observed", m.observed_dim()},
            {"latent", m.latent_dim()},
            {"perturbations", m.num_perturbations()},
            {"noise", m.noise_dim}}},
          {"encoder", detail::mlp_json(m.encoder)},
          {"decoder", detail::mlp_json(m.decoder)},
          {"w_hat", detail::flat_json(m.w_hat)},
          {"noise", {{"dim", m.noise_dim}, {"std", m.noise_std}}},
          {"beta", m.beta},
          {"standardization", {{"shift", detail::vector_json(m.input_shift)}, {"scale", detail::vector_json(m.input_scale)}}},
          {"history", hist}};
}

struct Checkpoint {
  PdaeModel model;
  TrainHistory history;
};

inline Checkpoint checkpoint_from(const json& j, const std::string& where = "checkpoint") {
  detail::reject_unknown_keys(j, {"format_version", "dims", "encoder", "decoder", "w_hat", "noise", "beta",
                                  "standardization", "history"},
                              where);
  for (const char* key : {"format_version", "dims", "encoder", "decoder", "w_hat", "noise", "beta", "standardization"})
    if (!j.contains(key)) throw FormatError(where + ": missing '" + key + "'");
  const int version = j["format_version"].get<int>();
  if (version != kCheckpointVersion)
    throw FormatError(where + ".format_version: unsupported version " + std::to_string(version));
  const json& noise = j["noise"];
  detail::reject_unknown_keys(noise, {"dim", "std"}, where + ".noise");
  const json& st = j["standardization"];
  detail::reject_unknown_keys(st, {"shift", "scale"}, where + ".standardization");
  Checkpoint c;
  c.model.encoder = detail::mlp_from(j["encoder"], where + ".encoder");
  c.model.decoder = detail::mlp_from(j["decoder"], where + ".decoder");
  c.model.w_hat = detail::flat_from(j["w_hat"], where + ".w_hat");
  c.model.noise_dim = noise.at("dim").get<Eigen::Index>();
  c.model.noise_std = noise.at("std").get<double>();
  c.model.beta = j["beta"].get<double>();
  c.model.input_shift = detail::vector_from(st.at("shift"), where + ".standardization.shift");
  c.model.input_scale = detail::vector_from(st.at("scale"), where + ".standardization.scale");
  const json& dims = j["dims"];
  detail::reject_unknown_keys(dims, {"observed", "latent", "perturbations", "noise"}, where + ".dims");
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(where + ": " + e.what());
  }
  if (dims.at("observed").get<Eigen::Index>() != c.model.observed_dim() ||
      dims.at("latent").get<Eigen::Index>() != c.model.latent_dim() ||
      dims.at("perturbations").get<Eigen::Index>() != c.model.num_perturbations() ||
      dims.at("noise").get<Eigen::Index>() != c.model.noise_dim) {
    throw FormatError(where + ".dims: declared dimensions disagree with the stored parameters");
  }
  if (j.contains("history")) {
    for (const auto& e : j["history"]) {
      c.history.epochs.push_back({e.at("perturbation").get<double>(), e.at("reconstruction").get<double>(),
                                  e.at("prior").get<double>(), e.at("sparsity").get<double>()});
    }
  }
  return c;
}

inline void save_checkpoint(const fs::path& path, const PdaeModel& m, const TrainHistory* history = nullptr) {
  write_json(path, checkpoint_json(m, history));
}

inline Checkpoint load_checkpoint(const fs::path& path) { return checkpoint_from(read_json(path), path.string()); }

// ---------------------------------------------------------------------------
// Reports

inline std::string label_string(const Label& a) {
  std::string s;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += (i ? " " : "") + format_double(a(i));
  return s;
}

inline std::string report_rows_csv(const std::vector<EvalRow>& rows) {
  std::string out = "method,seed,case_id,kind,split,arity,label,ED,MMD2,mean_diff\n";
  for (const auto& r : rows) {
    out += r.method + "," + std::to_string(r.seed) + "," + std::to_string(r.case_id) + "," + to_string(r.kind) + "," +
           to_string(r.split) + "," + to_string(r.arity) + "," + label_string(r.label) + "," +
           format_double(r.energy_distance) + "," + format_double(r.mmd2) + "," + format_double(r.mean_diff) + "\n";
  }
  return out;
}

inline std::string summary_csv(const EvalReport& report) {
  std::string out =
      "method,kind,seeds,cases,ED_mean,ED_std,MMD2_mean,MMD2_std,mean_diff_mean,mean_diff_std\n";
  for (const auto& a : report.aggregate()) {
    out += a.method + "," + to_string(a.kind) + "," + std::to_string(a.seeds) + "," + std::to_string(a.cases) + "," +
           format_double(a.ed_mean) + "," + format_double(a.ed_std) + "," + format_double(a.mmd2_mean) + "," +
           format_double(a.mmd2_std) + "," + format_double(a.mean_diff_mean) + "," + format_double(a.mean_diff_std) +
           "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Manifest written next to the outputs. It records wall-clock timestamps,
/// so it is the one artifact that differs between otherwise identical runs.
inline void write_manifest(const fs::path& path, const RunManifest& m, const std::string& started) {
  write_json(path, {{"tool_version", kToolVersion},
                                     {"command", m.command},
                                     {"config_hash", m.config_hash},
                                     {"seed", m.seed},
                                     {"started", started},
                                     {"finished", utc_timestamp()},
                                     {"outputs", m.outputs}});
}

}  // namespace pdae
