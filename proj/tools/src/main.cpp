// lot: command-line driver for the latent transport editing library.
//
// Subcommands cover the full artifact pipeline: synthetic benchmark
// generation, classifier and editor training, applying edits, evaluation
// sweeps, divergence diagnostics against the exact solver, and the four-way
// method comparison. Every command that produces artifacts also writes a
// manifest recording the resolved configuration (and its hash), the seeds,
// and FNV-1a hashes of every input and output file, so a run can be checked
// and reproduced bit for bit.
//
// Exit codes: 0 success, 2 usage error (bad flags or configuration), 3 data
// error (unreadable or inconsistent files), 4 numerical failure. Failures
// print a single machine-readable JSON line on stderr.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lot/attribute_model.hpp"
#include "lot/common.hpp"
#include "lot/dataset.hpp"
#include "lot/editor.hpp"
#include "lot/eval.hpp"
#include "lot/exact_ot.hpp"
#include "lot/point_cloud.hpp"
#include "lot/sinkhorn.hpp"
#include "lot/synth_bench.hpp"
#include "lot/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad invocations and bad configuration files map to exit code 2; they are
// the caller's mistake, unlike unreadable data files (3) or solver failures
// (4).
class usage_error : public std::runtime_error {
 public:
  explicit usage_error(const std::string& what) : std::runtime_error(what) {}
};

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Path plumbing. All paths are validated up front, before any training or
// solving starts, so a typo cannot burn minutes of compute first.

fs::path require_input_file(const std::string& p, const std::string& what) {
  fs::path path(p);
  std::error_code ec;
  if (!fs::is_regular_file(path, ec))
    throw lot::data_error(what + ": not a readable file: " + p);
  return path;
}

fs::path prepare_output_file(const std::string& p, const std::string& what) {
  fs::path path(p);
  if (path.empty()) throw usage_error(what + ": empty output path");
  const fs::path parent = path.parent_path();
  std::error_code ec;
  if (!parent.empty()) fs::create_directories(parent, ec);
  if (!parent.empty() && !fs::is_directory(parent))
    throw lot::data_error(what + ": cannot create directory " + parent.string());
  return path;
}

fs::path prepare_output_dir(const std::string& p, const std::string& what) {
  fs::path path(p);
  if (path.empty()) throw usage_error(what + ": empty output directory");
  std::error_code ec;
  fs::create_directories(path, ec);
  if (!fs::is_directory(path))
    throw lot::data_error(what + ": cannot create directory " + p);
  return path;
}

std::string hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw lot::data_error("hash_file: cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = lot::fnv1a64_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
  return hex64(h);
}

// ---------------------------------------------------------------------------
// Run configuration: one JSON file mirrors the benchmark spec, the training
// configuration, and the evaluation settings; single keys can be overridden
// from the command line. Unknown keys are rejected so a typo cannot silently
// fall back to a default.

struct RunConfig {
  lot::BenchmarkSpec spec;
  lot::TrainingConfig training;
  double flip_target = 0.9;  // calibration target for the flip rate
  int num_alphas = 10;       // sweep resolution
  // Comparison runs: strength of the preservation term and of the L2 edit
  // penalty applied to the regularized rows (the starred rows use zero).
  double compare_lambda = 1.0;
  double compare_l2 = 0.05;
};

void check_keys(const json& obj, const std::vector<std::string>& known,
                const std::string& where) {
  if (!obj.is_object())
    throw usage_error("config: '" + where + "' must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const auto& key : known) ok = ok || (it.key() == key);
    if (!ok)
      throw usage_error("config: unknown key '" + it.key() + "' in " + where);
  }
}

lot::TrainMode parse_mode(const std::string& s) {
  if (s == "lw") return lot::TrainMode::LW;
  if (s == "lt") return lot::TrainMode::LT;
  throw usage_error("mode must be 'lw' or 'lt', got '" + s + "'");
}

const char* mode_name(lot::TrainMode m) {
  return m == lot::TrainMode::LW ? "lw" : "lt";
}

void parse_training(const json& obj, lot::TrainingConfig* cfg) {
  check_keys(obj,
             {"mode", "lambda", "l2_reg", "alpha_train", "epsilon", "tolerance",
              "max_iters", "lr", "max_epochs", "patience", "val_fraction",
              "seed", "weighting", "conditioning"},
             "training");
  if (obj.contains("mode")) cfg->mode = parse_mode(obj["mode"].get<std::string>());
  cfg->lambda = obj.value("lambda", cfg->lambda);
  cfg->l2_reg = obj.value("l2_reg", cfg->l2_reg);
  cfg->alpha_train = obj.value("alpha_train", cfg->alpha_train);
  cfg->sinkhorn.epsilon = obj.value("epsilon", cfg->sinkhorn.epsilon);
  cfg->sinkhorn.tolerance = obj.value("tolerance", cfg->sinkhorn.tolerance);
  cfg->sinkhorn.max_iters = obj.value("max_iters", cfg->sinkhorn.max_iters);
  cfg->lr = obj.value("lr", cfg->lr);
  cfg->max_epochs = obj.value("max_epochs", cfg->max_epochs);
  cfg->patience = obj.value("patience", cfg->patience);
  cfg->val_fraction = obj.value("val_fraction", cfg->val_fraction);
  cfg->seed = obj.value("seed", cfg->seed);
  cfg->use_weighting = obj.value("weighting", cfg->use_weighting);
  if (obj.contains("conditioning")) {
    cfg->conditioning.clear();
    for (const auto& v : obj["conditioning"])
      cfg->conditioning.push_back(v.get<Eigen::Index>());
  }
}

json load_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw lot::data_error(what + ": cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw usage_error(what + ": " + path.string() + ": " + e.what());
  }
}

// `config_path` may be empty (all defaults). The file is a JSON object with
// optional sections "spec", "training", "eval", and "compare".
RunConfig load_run_config(const std::string& config_path) {
  RunConfig rc;
  if (config_path.empty()) return rc;
  const fs::path path = require_input_file(config_path, "config");
  const json doc = load_json_file(path, "config");
  check_keys(doc, {"spec", "training", "eval", "compare"}, "config");
  if (doc.contains("spec")) {
    try {
      rc.spec = lot::spec_from_json(doc["spec"].dump());
    } catch (const lot::data_error& e) {
      throw usage_error(std::string("config: ") + e.what());
    }
  }
  if (doc.contains("training")) parse_training(doc["training"], &rc.training);
  if (doc.contains("eval")) {
    const json& ev = doc["eval"];
    check_keys(ev, {"flip_target", "num_alphas"}, "eval");
    rc.flip_target = ev.value("flip_target", rc.flip_target);
    rc.num_alphas = ev.value("num_alphas", rc.num_alphas);
  }
  if (doc.contains("compare")) {
    const json& cp = doc["compare"];
    check_keys(cp, {"lambda", "l2_reg"}, "compare");
    rc.compare_lambda = cp.value("lambda", rc.compare_lambda);
    rc.compare_l2 = cp.value("l2_reg", rc.compare_l2);
  }
  return rc;
}

// The fully resolved configuration, after defaults and command-line
// overrides. This is what gets hashed into the manifest: feeding it back via
// --config reproduces the run.
json resolved_config(const RunConfig& rc) {
  json training{{"mode", mode_name(rc.training.mode)},
                {"lambda", rc.training.lambda},
                {"l2_reg", rc.training.l2_reg},
                {"alpha_train", rc.training.alpha_train},
                {"epsilon", rc.training.sinkhorn.epsilon},
                {"tolerance", rc.training.sinkhorn.tolerance},
                {"max_iters", rc.training.sinkhorn.max_iters},
                {"lr", rc.training.lr},
                {"max_epochs", rc.training.max_epochs},
                {"patience", rc.training.patience},
                {"val_fraction", rc.training.val_fraction},
                {"seed", rc.training.seed},
                {"weighting", rc.training.use_weighting}};
  if (!rc.training.conditioning.empty())
    training["conditioning"] = rc.training.conditioning;
  return json{{"spec", json::parse(lot::spec_to_json(rc.spec))},
              {"training", training},
              {"eval", {{"flip_target", rc.flip_target},
                        {"num_alphas", rc.num_alphas}}},
              {"compare", {{"lambda", rc.compare_lambda},
                           {"l2_reg", rc.compare_l2}}}};
}

// ---------------------------------------------------------------------------
// Manifests.

struct Manifest {
  std::string command;
  json config;
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> content hash
  std::map<std::string, std::string> outputs;  // path -> content hash
};

void add_hash(std::map<std::string, std::string>* into, const fs::path& path) {
  (*into)[path.string()] = hash_file(path);
}

void write_manifest(const fs::path& path, const Manifest& m) {
  json doc{{"command", m.command},
           {"config", m.config},
           {"config_hash", hex64(lot::fnv1a64(m.config.dump()))},
           {"seeds", m.seeds},
           {"inputs", m.inputs},
           {"outputs", m.outputs}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lot::data_error("manifest: cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Shared lookups.

Eigen::Index resolve_attribute(const lot::LatentDataset& ds,
                               const std::string& key) {
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(ds.attribute_names.size()); ++k)
    if (ds.attribute_names[static_cast<std::size_t>(k)] == key) return k;
  try {
    std::size_t pos = 0;
    const long idx = std::stol(key, &pos);
    if (pos == key.size() && idx >= 0 &&
        idx < static_cast<long>(ds.attribute_names.size()))
      return static_cast<Eigen::Index>(idx);
  } catch (const std::exception&) {
  }
  throw lot::data_error("attribute '" + key + "' not found in dataset");
}

// The generating spec travels with every synthetic dataset; evaluation
// against the ground-truth oracle is impossible without it.
lot::BenchmarkSpec dataset_spec(const lot::LatentDataset& ds,
                                const std::string& what) {
  if (ds.spec_json.empty() || ds.spec_json == "{}")
    throw lot::data_error(what + ": dataset carries no generating spec; "
                          "oracle evaluation needs one");
  lot::BenchmarkSpec spec = lot::spec_from_json(ds.spec_json);
  if (spec.dim != ds.codes.cols())
    throw lot::data_error(what + ": dataset spec dim does not match codes");
  return spec;
}

Eigen::MatrixXd rows_where(const Eigen::MatrixXd& codes,
                           const lot::LabelMatrix& labels, Eigen::Index k,
                           std::uint8_t value) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < labels.rows(); ++i)
    if (labels(i, k) == value) idx.push_back(i);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), codes.cols());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    out.row(i) = codes.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

lot::PositivePredicate oracle_predicate(const lot::BenchmarkAxes& axes,
                                        Eigen::Index k) {
  return [axes, k](const Eigen::MatrixXd& codes) {
    const lot::LabelMatrix labels = lot::oracle_attribute(axes, codes);
    return (labels.col(k).array() == std::uint8_t{1}).eval();
  };
}

void print_gamma(const Eigen::MatrixXd& gamma) {
  std::cout << "gamma\n";
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
      if (j) std::cout << ' ';
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", gamma(i, j));
      std::cout << buf;
    }
    std::cout << '\n';
  }
}

// ---------------------------------------------------------------------------
// Commands. Each validates its paths first, computes, writes artifacts, then
// the manifest. Input files are only ever opened for reading.

void cmd_gen(const std::string& config_path, const std::string& out_path,
             std::optional<std::uint64_t> seed) {
  const fs::path out = prepare_output_file(out_path, "gen");
  lot::BenchmarkSpec spec;
  json config_doc = json::object();
  if (!config_path.empty()) {
    const fs::path cfg = require_input_file(config_path, "gen");
    const json doc = load_json_file(cfg, "gen");
    // Accept either a full run configuration or a bare spec object.
    if (doc.contains("spec") || doc.contains("training") ||
        doc.contains("eval") || doc.contains("compare"))
      spec = load_run_config(config_path).spec;
    else
      try {
        spec = lot::spec_from_json(doc.dump());
      } catch (const lot::data_error& e) {
        throw usage_error(std::string("gen: ") + e.what());
      }
  }
  if (seed) spec.seed = *seed;
  spec.validate();
  config_doc["spec"] = json::parse(lot::spec_to_json(spec));

  const lot::LatentDataset ds = lot::generate(spec);
  lot::save_dataset(out, ds);

  std::cout << "n " << ds.codes.rows() << "\n"
            << "dim " << ds.codes.cols() << "\n"
            << "K " << ds.labels.cols() << "\n";
  print_gamma(lot::compute_gamma(ds.labels));

  Manifest m;
  m.command = "gen";
  m.config = config_doc;
  m.seeds["spec"] = spec.seed;
  add_hash(&m.outputs, out);
  write_manifest(out.string() + ".manifest.json", m);
}

void cmd_train_classifiers(const std::string& data_path,
                           const std::string& out_path, std::uint64_t seed) {
  const fs::path data = require_input_file(data_path, "train-classifiers");
  const fs::path out = prepare_output_file(out_path, "train-classifiers");
  const lot::LatentDataset ds = lot::load_dataset(data);
  const lot::AttributeModel model = lot::train_classifiers(ds, seed);
  lot::save_attribute_model(out, model);

  for (std::size_t k = 0; k < model.classifiers.size(); ++k) {
    const Eigen::ArrayXd p =
        model.classifiers[k].predict_proba(ds.codes).array();
    const auto truth = ds.labels.col(static_cast<Eigen::Index>(k)).array();
    double correct = 0.0;
    for (Eigen::Index i = 0; i < ds.labels.rows(); ++i)
      correct += ((p(i) > 0.5) == (truth(i) == 1)) ? 1.0 : 0.0;
    std::cout << "attribute " << model.attribute_names[k] << " accuracy "
              << lot::format_double(correct / static_cast<double>(ds.labels.rows()))
              << "\n";
  }
  print_gamma(model.gamma);

  Manifest m;
  m.command = "train-classifiers";
  m.config = json{{"seed", seed}};
  m.seeds["classifiers"] = seed;
  add_hash(&m.inputs, data);
  add_hash(&m.outputs, out);
  write_manifest(out.string() + ".manifest.json", m);
}

struct TrainOverrides {
  std::optional<std::string> mode;
  std::optional<double> lambda, l2_reg, epsilon;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> weighting;  // "on" / "off"

  void apply(lot::TrainingConfig* cfg) const {
    if (mode) cfg->mode = parse_mode(*mode);
    if (lambda) cfg->lambda = *lambda;
    if (l2_reg) cfg->l2_reg = *l2_reg;
    if (epsilon) cfg->sinkhorn.epsilon = *epsilon;
    if (seed) cfg->seed = *seed;
    if (weighting) {
      if (*weighting != "on" && *weighting != "off")
        throw usage_error("weighting must be 'on' or 'off'");
      cfg->use_weighting = (*weighting == "on");
    }
  }
};

void cmd_train_editor(const std::string& data_path, const std::string& attribute,
                      const std::string& config_path, const TrainOverrides& ov,
                      const std::string& out_path,
                      const std::string& report_path) {
  const fs::path data = require_input_file(data_path, "train-editor");
  const fs::path out = prepare_output_file(out_path, "train-editor");
  fs::path report_file;
  if (!report_path.empty())
    report_file = prepare_output_file(report_path, "train-editor");

  RunConfig rc = load_run_config(config_path);
  ov.apply(&rc.training);
  rc.training.validate();

  const lot::LatentDataset ds = lot::load_dataset(data);
  const Eigen::Index k = resolve_attribute(ds, attribute);
  auto [editor, rep] = lot::train(ds, k, rc.training);

  const json meta{{"attribute", editor.attribute_name},
                  {"mode", mode_name(rc.training.mode)},
                  {"lambda", rc.training.lambda},
                  {"l2_reg", rc.training.l2_reg},
                  {"seed", rc.training.seed},
                  {"weighting", rc.training.use_weighting},
                  {"best_epoch", rep.best_epoch},
                  {"stopped_epoch", rep.stopped_epoch},
                  {"best_val_loss", rep.best_val_loss}};
  lot::save_editor(out, editor, meta.dump());
  if (!report_file.empty()) lot::save_report_csv(report_file, rep);

  std::cout << "attribute " << editor.attribute_name << "\n"
            << "mode " << mode_name(rc.training.mode) << "\n"
            << "best_epoch " << rep.best_epoch << "\n"
            << "stopped_epoch " << rep.stopped_epoch << "\n"
            << "best_val_loss " << lot::format_double(rep.best_val_loss) << "\n"
            << "edit_term " << lot::format_double(rep.final_edit_term) << "\n"
            << "pres_term " << lot::format_double(rep.final_pres_term) << "\n"
            << "reg_term " << lot::format_double(rep.final_reg_term) << "\n";

  Manifest m;
  m.command = "train-editor";
  m.config = resolved_config(rc);
  m.config["attribute"] = attribute;
  m.seeds["training"] = rc.training.seed;
  add_hash(&m.inputs, data);
  add_hash(&m.outputs, out);
  if (!report_file.empty()) add_hash(&m.outputs, report_file);
  write_manifest(out.string() + ".manifest.json", m);
}

void cmd_edit(const std::string& model_path, const std::string& data_path,
              double alpha, const std::string& out_path) {
  const fs::path model_file = require_input_file(model_path, "edit");
  const fs::path data = require_input_file(data_path, "edit");
  const fs::path out = prepare_output_file(out_path, "edit");

  const lot::AffineEditor editor = lot::load_editor(model_file);
  lot::LatentDataset ds = lot::load_dataset(data);
  if (editor.W.cols() != ds.codes.cols())
    throw lot::data_error("edit: editor dim " + std::to_string(editor.W.cols()) +
                          " does not match dataset dim " +
                          std::to_string(ds.codes.cols()));
  ds.codes = editor.edit(ds.codes, alpha);
  // When the dataset still carries its generating spec the labels can be
  // refreshed from the oracle; otherwise the pre-edit labels are kept.
  bool relabeled = false;
  if (!ds.spec_json.empty() && ds.spec_json != "{}") {
    try {
      const lot::BenchmarkSpec spec = lot::spec_from_json(ds.spec_json);
      if (spec.dim == ds.codes.cols() && spec.K == ds.labels.cols()) {
        ds.labels = lot::oracle_attribute(spec, ds.codes);
        relabeled = true;
      }
    } catch (const lot::data_error&) {
    }
  }
  lot::save_dataset(out, ds);
  std::cout << "rows " << ds.codes.rows() << "\n"
            << "alpha " << lot::format_double(alpha) << "\n"
            << "labels " << (relabeled ? "oracle" : "carried") << "\n";

  Manifest m;
  m.command = "edit";
  m.config = json{{"alpha", alpha}};
  add_hash(&m.inputs, model_file);
  add_hash(&m.inputs, data);
  add_hash(&m.outputs, out);
  write_manifest(out.string() + ".manifest.json", m);
}

// Shared by `eval` and `compare`: calibrate the edit strength on the
// currently-negative rows, sweep [d, 2d] against the oracle, and attach the
// distance-to-target diagnostic when genuine positives exist.
lot::EvalReport evaluate_editor(const lot::AffineEditor& editor,
                                const lot::LatentDataset& ds,
                                const lot::BenchmarkAxes& axes, Eigen::Index k,
                                const RunConfig& rc, double* calibrated_d) {
  const Eigen::MatrixXd negatives = rows_where(ds.codes, ds.labels, k, 0);
  if (negatives.rows() == 0)
    throw lot::data_error("eval: no rows with attribute " + std::to_string(k) +
                          " == 0 to edit");
  const double d =
      lot::calibrate_d(editor, negatives, oracle_predicate(axes, k), rc.flip_target);
  if (calibrated_d) *calibrated_d = d;
  lot::EvalReport report = lot::sweep(editor, negatives, axes, k, d, rc.num_alphas);
  const Eigen::MatrixXd positives = rows_where(ds.codes, ds.labels, k, 1);
  if (positives.rows() >= 2)
    report.mean_mahalanobis_to_target =
        lot::ood_score(editor.edit(negatives, d), positives);
  return report;
}

void cmd_eval(const std::string& model_path, const std::string& data_path,
              const std::string& config_path, const std::string& out_path) {
  const fs::path model_file = require_input_file(model_path, "eval");
  const fs::path data = require_input_file(data_path, "eval");
  const fs::path out_dir = prepare_output_dir(out_path, "eval");
  const RunConfig rc = load_run_config(config_path);

  const lot::AffineEditor editor = lot::load_editor(model_file);
  const lot::LatentDataset ds = lot::load_dataset(data);
  const lot::BenchmarkSpec spec = dataset_spec(ds, "eval");
  const lot::BenchmarkAxes axes = lot::benchmark_axes(spec);
  const Eigen::Index k = resolve_attribute(ds, editor.attribute_name);

  double d = 0.0;
  const lot::EvalReport report = evaluate_editor(editor, ds, axes, k, rc, &d);

  const fs::path csv = out_dir / "eval.csv";
  const fs::path js = out_dir / "eval.json";
  const fs::path svg = out_dir / "sweep.svg";
  lot::write_eval_csv(csv, report);
  lot::write_eval_json(js, report);
  lot::SweepSeries series{editor.attribute_name, {}};
  for (const auto& row : report.rows)
    series.points.emplace_back(row.target_change, row.attribute_preservation);
  lot::write_sweep_svg(svg, {series});

  std::cout << "calibrated_d " << lot::format_double(d) << "\n"
            << "target_change " << lot::format_double(report.mean_target_change)
            << "\n"
            << "attribute_preservation "
            << lot::format_double(report.mean_attribute_preservation) << "\n"
            << "identity_preservation "
            << lot::format_double(report.mean_identity_preservation) << "\n"
            << "ood_score "
            << lot::format_double(report.mean_mahalanobis_to_target) << "\n";

  Manifest m;
  m.command = "eval";
  m.config = resolved_config(rc);
  add_hash(&m.inputs, model_file);
  add_hash(&m.inputs, data);
  add_hash(&m.outputs, csv);
  add_hash(&m.outputs, js);
  add_hash(&m.outputs, svg);
  write_manifest(out_dir / "manifest.json", m);
}

void cmd_sinkhorn(const std::string& a_path, const std::string& b_path,
                  double epsilon) {
  const fs::path file_a = require_input_file(a_path, "sinkhorn");
  const fs::path file_b = require_input_file(b_path, "sinkhorn");
  const lot::LatentDataset da = lot::load_dataset(file_a);
  const lot::LatentDataset db = lot::load_dataset(file_b);
  if (da.codes.cols() != db.codes.cols())
    throw lot::data_error("sinkhorn: dimension mismatch between inputs");

  const auto src = lot::WeightedPointCloud::uniform(da.codes);
  const auto tgt = lot::WeightedPointCloud::uniform(db.codes);
  lot::SinkhornConfig cfg;
  cfg.epsilon = epsilon;
  const Eigen::MatrixXd cost = lot::squared_euclidean_cost(da.codes, db.codes);
  const auto parts = lot::sinkhorn_divergence_parts(
      src, tgt, cost, lot::squared_euclidean_cost(da.codes, da.codes),
      lot::squared_euclidean_cost(db.codes, db.codes), cfg);
  if (!parts.converged)
    throw lot::numeric_error("sinkhorn: solver did not converge within " +
                             std::to_string(cfg.max_iters) + " iterations");

  std::cout << "epsilon " << lot::format_double(parts.epsilon) << "\n"
            << "transport_cost " << lot::format_double(parts.cross.value) << "\n"
            << "divergence " << lot::format_double(parts.value) << "\n";
}

void cmd_oracle(const std::string& a_path, const std::string& b_path) {
  const fs::path file_a = require_input_file(a_path, "oracle");
  const fs::path file_b = require_input_file(b_path, "oracle");
  const lot::LatentDataset da = lot::load_dataset(file_a);
  const lot::LatentDataset db = lot::load_dataset(file_b);
  if (da.codes.cols() != db.codes.cols())
    throw lot::data_error("oracle: dimension mismatch between inputs");
  if (da.codes.rows() != db.codes.rows())
    throw lot::data_error("oracle: exact solver needs equal point counts");

  const Eigen::MatrixXd cost = lot::squared_euclidean_cost(da.codes, db.codes);
  const lot::ExactOtResult exact = lot::exact_ot_assignment(cost);
  std::cout << "transport_cost " << lot::format_double(exact.value) << "\n";
}

void cmd_compare(const std::string& data_path, const std::string& attribute,
                 const std::string& config_path, const TrainOverrides& ov,
                 const std::string& out_path) {
  const fs::path data = require_input_file(data_path, "compare");
  const fs::path out_dir = prepare_output_dir(out_path, "compare");
  RunConfig rc = load_run_config(config_path);
  ov.apply(&rc.training);
  if (ov.lambda) rc.compare_lambda = *ov.lambda;
  if (ov.l2_reg) rc.compare_l2 = *ov.l2_reg;

  const lot::LatentDataset ds = lot::load_dataset(data);
  const Eigen::Index k = resolve_attribute(ds, attribute);
  const lot::BenchmarkSpec spec = dataset_spec(ds, "compare");
  const lot::BenchmarkAxes axes = lot::benchmark_axes(spec);

  // The four configurations of the comparison table: each guidance mode with
  // and without its preservation / regularization terms. The starred rows
  // drop those terms entirely.
  struct MethodRow {
    const char* name;
    lot::TrainMode mode;
    double lambda, l2;
  };
  const MethodRow methods[] = {
      {"lt_star", lot::TrainMode::LT, 0.0, 0.0},
      {"lw_star", lot::TrainMode::LW, 0.0, 0.0},
      {"lt", lot::TrainMode::LT, rc.compare_lambda, rc.compare_l2},
      {"lw", lot::TrainMode::LW, rc.compare_lambda, 0.0},
  };

  std::ostringstream csv;
  csv << "method,calibrated_d,target_change,attribute_preservation,"
         "identity_preservation,ood_score\n";
  std::vector<lot::SweepSeries> series;
  Manifest m;
  m.command = "compare";
  m.config = resolved_config(rc);
  m.config["attribute"] = attribute;
  m.seeds["training"] = rc.training.seed;
  add_hash(&m.inputs, data);

  for (const auto& method : methods) {
    lot::TrainingConfig cfg = rc.training;
    cfg.mode = method.mode;
    cfg.lambda = method.lambda;
    cfg.l2_reg = method.l2;
    auto [editor, rep] = lot::train(ds, k, cfg);

    const fs::path editor_file =
        out_dir / ("editor_" + std::string(method.name) + ".json");
    const json meta{{"attribute", editor.attribute_name},
                    {"mode", mode_name(cfg.mode)},
                    {"lambda", cfg.lambda},
                    {"l2_reg", cfg.l2_reg},
                    {"seed", cfg.seed},
                    {"best_epoch", rep.best_epoch}};
    lot::save_editor(editor_file, editor, meta.dump());

    double d = 0.0;
    const lot::EvalReport report = evaluate_editor(editor, ds, axes, k, rc, &d);
    const fs::path eval_file =
        out_dir / ("eval_" + std::string(method.name) + ".csv");
    lot::write_eval_csv(eval_file, report);

    csv << method.name << ',' << lot::format_double(d) << ','
        << lot::format_double(report.mean_target_change) << ','
        << lot::format_double(report.mean_attribute_preservation) << ','
        << lot::format_double(report.mean_identity_preservation) << ','
        << lot::format_double(report.mean_mahalanobis_to_target) << '\n';
    std::cout << method.name << " target_change "
              << lot::format_double(report.mean_target_change)
              << " attribute_preservation "
              << lot::format_double(report.mean_attribute_preservation)
              << " identity_preservation "
              << lot::format_double(report.mean_identity_preservation) << "\n";

    lot::SweepSeries s{method.name, {}};
    for (const auto& row : report.rows)
      s.points.emplace_back(row.target_change, row.attribute_preservation);
    series.push_back(std::move(s));

    add_hash(&m.outputs, editor_file);
    add_hash(&m.outputs, eval_file);
  }

  const fs::path csv_file = out_dir / "compare.csv";
  {
    std::ofstream out(csv_file, std::ios::binary);
    if (!out) throw lot::data_error("compare: cannot write " + csv_file.string());
    out << csv.str();
  }
  const fs::path svg_file = out_dir / "compare.svg";
  lot::write_sweep_svg(svg_file, series);
  add_hash(&m.outputs, csv_file);
  add_hash(&m.outputs, svg_file);
  write_manifest(out_dir / "manifest.json", m);
}

std::string error_line(int code, const std::string& detail) {
  return json{{"error", {{"exit", code}, {"detail", detail}}}}.dump();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent transport editing toolkit"};
  app.require_subcommand(1);

  // gen
  std::string gen_config, gen_out;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark dataset");
  gen->add_option("--config", gen_config, "benchmark spec JSON (bare or run config)");
  gen->add_option("--out", gen_out, "output dataset path")->required();
  gen->add_option("--seed", gen_seed, "override the spec seed");
  gen->callback([&] { cmd_gen(gen_config, gen_out, gen_seed); });

  // train-classifiers
  std::string tc_data, tc_out;
  std::uint64_t tc_seed = 0;
  auto* tc = app.add_subcommand("train-classifiers",
                                "fit per-attribute logistic classifiers");
  tc->add_option("--data", tc_data, "input dataset")->required();
  tc->add_option("--out", tc_out, "output model JSON")->required();
  tc->add_option("--seed", tc_seed, "training seed");
  tc->callback([&] { cmd_train_classifiers(tc_data, tc_out, tc_seed); });

  // train-editor
  std::string te_data, te_attr, te_config, te_out, te_report;
  TrainOverrides te_ov;
  auto* te = app.add_subcommand("train-editor", "train a semantic edit direction");
  te->add_option("--data", te_data, "input dataset")->required();
  te->add_option("--attribute", te_attr, "attribute name or index")->required();
  te->add_option("--mode", te_ov.mode, "training objective")
      ->check(CLI::IsMember({"lw", "lt"}));
  te->add_option("--config", te_config, "run configuration JSON");
  te->add_option("--lambda", te_ov.lambda, "preservation term weight");
  te->add_option("--l2-reg", te_ov.l2_reg, "edit-norm penalty (lt only)");
  te->add_option("--epsilon", te_ov.epsilon, "sinkhorn regularization");
  te->add_option("--seed", te_ov.seed, "training seed");
  te->add_option("--weighting", te_ov.weighting, "bias-correcting source weights")
      ->check(CLI::IsMember({"on", "off"}));
  te->add_option("--out", te_out, "output editor JSON")->required();
  te->add_option("--report", te_report, "per-epoch training report CSV");
  te->callback([&] {
    cmd_train_editor(te_data, te_attr, te_config, te_ov, te_out, te_report);
  });

  // edit
  std::string ed_model, ed_data, ed_out;
  double ed_alpha = 1.0;
  auto* ed = app.add_subcommand("edit", "apply an editor to a dataset");
  ed->add_option("--model", ed_model, "editor JSON")->required();
  ed->add_option("--data", ed_data, "input dataset")->required();
  ed->add_option("--alpha", ed_alpha, "edit strength")->required();
  ed->add_option("--out", ed_out, "output dataset path")->required();
  ed->callback([&] { cmd_edit(ed_model, ed_data, ed_alpha, ed_out); });

  // eval
  std::string ev_model, ev_data, ev_config, ev_out;
  auto* ev = app.add_subcommand("eval", "calibrate and sweep an editor");
  ev->add_option("--model", ev_model, "editor JSON")->required();
  ev->add_option("--data", ev_data, "input dataset")->required();
  ev->add_option("--config", ev_config, "run configuration JSON");
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->callback([&] { cmd_eval(ev_model, ev_data, ev_config, ev_out); });

  // sinkhorn
  std::string sk_a, sk_b;
  double sk_eps = 0.0;
  auto* sk = app.add_subcommand("sinkhorn",
                                "debiased divergence between two datasets");
  sk->add_option("file_a", sk_a, "first dataset")->required();
  sk->add_option("file_b", sk_b, "second dataset")->required();
  sk->add_option("--epsilon", sk_eps, "regularization (<= 0: automatic)");
  sk->callback([&] { cmd_sinkhorn(sk_a, sk_b, sk_eps); });

  // oracle
  std::string or_a, or_b;
  auto* orc = app.add_subcommand("oracle",
                                 "exact transport cost between two datasets");
  orc->add_option("file_a", or_a, "first dataset")->required();
  orc->add_option("file_b", or_b, "second dataset")->required();
  orc->callback([&] { cmd_oracle(or_a, or_b); });

  // compare
  std::string cp_data, cp_attr, cp_config, cp_out;
  TrainOverrides cp_ov;
  auto* cp = app.add_subcommand(
      "compare", "train and evaluate the four method configurations");
  cp->add_option("--data", cp_data, "input dataset")->required();
  cp->add_option("--attribute", cp_attr, "attribute name or index")->required();
  cp->add_option("--config", cp_config, "run configuration JSON");
  cp->add_option("--lambda", cp_ov.lambda, "preservation weight, regularized rows");
  cp->add_option("--l2-reg", cp_ov.l2_reg, "edit-norm penalty, regularized lt row");
  cp->add_option("--epsilon", cp_ov.epsilon, "sinkhorn regularization");
  cp->add_option("--seed", cp_ov.seed, "training seed");
  cp->add_option("--weighting", cp_ov.weighting, "bias-correcting source weights")
      ->check(CLI::IsMember({"on", "off"}));
  cp->add_option("--out", cp_out, "output directory")->required();
  cp->callback([&] { cmd_compare(cp_data, cp_attr, cp_config, cp_ov, cp_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_line(2, e.what()) << "\n";
    return 2;
  } catch (const usage_error& e) {
    std::cerr << error_line(2, e.what()) << "\n";
    return 2;
  } catch (const lot::data_error& e) {
    std::cerr << error_line(3, e.what()) << "\n";
    return 3;
  } catch (const lot::numeric_error& e) {
    std::cerr << error_line(4, e.what()) << "\n";
    return 4;
  } catch (const json::exception& e) {
    std::cerr << error_line(3, e.what()) << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << error_line(4, e.what()) << "\n";
    return 4;
  }
  return 0;
}
