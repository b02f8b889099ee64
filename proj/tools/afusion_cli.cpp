/*
 * Copyright 2026 The afusion Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line front end: gen-data, train, eval, gradcheck, params, predict.
//
// Exit codes: 0 success, 1 gradient check failure or internal error,
// 2 configuration/validation error, 3 I/O or file-format error,
// 4 shape mismatch between model, data and checkpoint.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "afusion/afusion.hpp"

namespace fs = std::filesystem;
using namespace afusion;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitShape = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIoError:
    case ErrorKind::kCorruptFile:
    case ErrorKind::kVersionMismatch:
      return kExitIo;
    case ErrorKind::kShapeMismatch:
      return kExitShape;
    case ErrorKind::kBackwardBeforeForward:
      return kExitFailure;
    default:
      return kExitConfig;
  }
}

// ---------------------------------------------------------------------------
// Config file: a JSON object with optional sections "model", "data", "train"
// and "eval". Flags given on the command line win over file values. Unknown
// sections or keys are errors.

struct DataSection {
  std::optional<std::string> path;
  std::optional<std::string> val_path;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> split_seed;
  json synthetic = json::object();
};

struct EvalSection {
  std::optional<std::size_t> gap_k;
  std::optional<double> f1_threshold;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> top_k;
};

struct CliConfig {
  json model = json::object();
  DataSection data;
  json train = json::object();
  EvalSection eval;
};

template <typename T>
std::optional<T> take(json& obj, const char* section, const char* key) {
  if (!obj.contains(key)) return std::nullopt;
  T value;
  detail::read_field(obj, section, key, value);
  obj.erase(key);
  return value;
}

CliConfig load_cli_config(const std::string& path) {
  CliConfig cfg;
  if (path.empty()) return cfg;
  json root = read_json_file(path);
  detail::reject_unknown_keys(root, "<root>", {"model", "data", "train", "eval"});
  if (root.contains("model")) {
    cfg.model = root["model"];
    // Validate keys now so typos surface before any work starts.
    model_config_from_json(cfg.model);
  }
  if (root.contains("data")) {
    json data = root["data"];
    if (!data.is_object()) throw InvalidConfig("section 'data' must be an object");
    cfg.data.path = take<std::string>(data, "data", "path");
    cfg.data.val_path = take<std::string>(data, "data", "val_path");
    cfg.data.train_fraction = take<double>(data, "data", "train_fraction");
    cfg.data.split_seed = take<std::uint64_t>(data, "data", "split_seed");
    synthetic_spec_from_json(data);
    cfg.data.synthetic = data;
  }
  if (root.contains("train")) {
    cfg.train = root["train"];
    train_config_from_json(cfg.train);
  }
  if (root.contains("eval")) {
    json ev = root["eval"];
    detail::reject_unknown_keys(ev, "eval", {"gap_k", "f1_threshold", "threads", "top_k"});
    cfg.eval.gap_k = take<std::size_t>(ev, "eval", "gap_k");
    cfg.eval.f1_threshold = take<double>(ev, "eval", "f1_threshold");
    cfg.eval.threads = take<std::size_t>(ev, "eval", "threads");
    cfg.eval.top_k = take<std::size_t>(ev, "eval", "top_k");
  }
  return cfg;
}

/// Which videos of a dataset file a command works on.
struct DataSelection {
  std::string path;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> split_seed;
  std::string part = "all";  // all | train | val
};

Dataset select_data(const DataSelection& sel) {
  if (sel.path.empty()) throw InvalidConfig("no dataset given (--data or data.path)");
  Dataset ds = load_dataset(sel.path);
  if (sel.part == "all") return ds;
  if (sel.part != "train" && sel.part != "val") {
    throw InvalidConfig("--part must be all, train or val");
  }
  auto [train_part, val_part] =
      split(ds, sel.train_fraction.value_or(0.8), sel.split_seed.value_or(0));
  return sel.part == "train" ? std::move(train_part) : std::move(val_part);
}

void add_data_selection(CLI::App* cmd, DataSelection& sel) {
  cmd->add_option("--data", sel.path, "AVF1 dataset file");
  cmd->add_option("--train-fraction", sel.train_fraction, "Split fraction used with --part");
  cmd->add_option("--split-seed", sel.split_seed, "Split seed used with --part");
  cmd->add_option("--part", sel.part, "Videos to use: all, train or val");
}

void merge_data_selection(DataSelection& sel, const DataSection& data) {
  if (sel.path.empty() && data.path) sel.path = *data.path;
  if (!sel.train_fraction) sel.train_fraction = data.train_fraction;
  if (!sel.split_seed) sel.split_seed = data.split_seed;
}

std::string format_fixed(double v, int precision = 6) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

void print_report(const MetricsReport& r, bool as_json) {
  if (as_json) {
    std::cout << to_json(r).dump() << '\n';
    return;
  }
  std::cout << std::left << std::setw(12) << "metric" << "value\n";
  std::cout << std::setw(12) << ("GAP@" + std::to_string(r.k)) << format_fixed(r.gap) << '\n';
  std::cout << std::setw(12) << ("F1@" + format_fixed(r.threshold, 2)) << format_fixed(r.micro_f1) << '\n';
  std::cout << std::setw(12) << "loss" << (r.mean_loss ? format_fixed(*r.mean_loss) : "n/a") << '\n';
  std::cout << std::setw(12) << "videos" << r.num_videos << '\n';
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::string config;
  std::string output;
  std::optional<std::size_t> videos, vocab, visual_dim, audio_dim, seq_len;
  std::optional<double> labels_mean, visual_fraction, audio_fraction, both_fraction,
      signal, noise;
  std::optional<std::uint64_t> seed;
};

int cmd_gen_data(const GenDataOptions& o) {
  const CliConfig cfg = load_cli_config(o.config);
  SyntheticSpec spec = synthetic_spec_from_json(cfg.data.synthetic);
  if (o.videos) spec.num_videos = *o.videos;
  if (o.vocab) spec.vocab_size = *o.vocab;
  if (o.visual_dim) spec.visual_dim = *o.visual_dim;
  if (o.audio_dim) spec.audio_dim = *o.audio_dim;
  if (o.seq_len) spec.seq_len = *o.seq_len;
  if (o.labels_mean) spec.labels_per_video_mean = *o.labels_mean;
  if (o.visual_fraction) spec.visual_only_fraction = *o.visual_fraction;
  if (o.audio_fraction) spec.audio_only_fraction = *o.audio_fraction;
  if (o.both_fraction) spec.both_fraction = *o.both_fraction;
  if (o.signal) spec.signal_strength = *o.signal;
  if (o.noise) spec.noise_sigma = *o.noise;
  if (o.seed) spec.seed = *o.seed;
  std::string output = o.output;
  if (output.empty() && cfg.data.path) output = *cfg.data.path;
  if (output.empty()) throw InvalidConfig("no output path (-o or data.path)");

  const std::uint32_t crc = generate_file(spec, output);
  char crc_text[16];
  std::snprintf(crc_text, sizeof(crc_text), "%08x", crc);
  std::cout << "wrote " << output << ": " << spec.num_videos << " videos, vocab "
            << spec.vocab_size << ", visual " << spec.visual_dim << ", audio "
            << spec.audio_dim << ", T " << spec.seq_len << ", seed " << spec.seed
            << ", crc32 " << crc_text << '\n';
  return kExitOk;
}

struct TrainOptions {
  std::string config;
  std::string data;
  std::string val;
  std::optional<double> train_fraction;
  std::optional<std::uint64_t> split_seed;
  std::optional<std::string> arch;
  std::optional<std::size_t> epochs, batch_size, eval_every, patience, gap_k, threads;
  std::optional<double> lr, threshold;
  std::optional<std::uint64_t> seed;
  std::string ckpt_dir = "ckpt";
};

int cmd_train(const TrainOptions& o) {
  const CliConfig cfg = load_cli_config(o.config);

  TrainConfig tc = train_config_from_json(cfg.train);
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch_size) tc.batch_size = *o.batch_size;
  if (o.eval_every) tc.eval_every = *o.eval_every;
  if (o.patience) tc.early_stop_patience = *o.patience;
  if (o.gap_k) tc.gap_k = *o.gap_k;
  if (o.threads) tc.eval_threads = *o.threads;
  if (o.lr) tc.learning_rate = *o.lr;
  if (o.threshold) tc.f1_threshold = *o.threshold;
  if (o.seed) tc.seed = *o.seed;
  tc.validate();

  std::string data_path = o.data.empty() ? cfg.data.path.value_or("") : o.data;
  std::string val_path = o.val.empty() ? cfg.data.val_path.value_or("") : o.val;
  if (data_path.empty()) throw InvalidConfig("no training data (--data or data.path)");

  Dataset train_set, val_set;
  if (!val_path.empty()) {
    train_set = load_dataset(data_path);
    val_set = load_dataset(val_path);
  } else {
    const Dataset all = load_dataset(data_path);
    const double fraction = o.train_fraction.value_or(cfg.data.train_fraction.value_or(0.8));
    const std::uint64_t seed = o.split_seed.value_or(cfg.data.split_seed.value_or(0));
    std::tie(train_set, val_set) = split(all, fraction, seed);
  }

  // Dataset-facing dimensions default to the file's header; explicit config
  // values must agree with it.
  ModelConfig base;
  base.visual_dim = train_set.header.visual_dim;
  base.audio_dim = train_set.header.audio_dim;
  base.vocab_size = train_set.header.vocab_size;
  base.seq_len = train_set.header.seq_len;
  ModelConfig mc = model_config_from_json(cfg.model, base);
  if (o.arch) mc.arch = parse_architecture(*o.arch);
  mc.validate();

  Model model = Model::build(mc, tc.seed);
  std::cout << "training " << to_string(mc.arch) << " (" << model.parameter_total()
            << " parameters) on " << train_set.size() << " videos, validating on "
            << val_set.size() << '\n';
  std::cout << std::left << std::setw(8) << "epoch" << std::setw(14) << "train_loss"
            << std::setw(14) << "val_loss" << std::setw(12) << ("GAP@" + std::to_string(tc.gap_k))
            << "F1" << '\n';
  const auto on_eval = [](const HistoryEntry& e) {
    std::cout << std::left << std::setw(8) << e.epoch << std::setw(14)
              << format_fixed(e.train_loss) << std::setw(14)
              << format_fixed(e.validation.mean_loss.value_or(0.0)) << std::setw(12)
              << format_fixed(e.validation.gap) << format_fixed(e.validation.micro_f1) << '\n';
  };
  const TrainResult result = train(model, train_set, val_set, tc, fs::path(o.ckpt_dir), on_eval);
  const auto& best = result.history.best();
  std::cout << "best epoch " << best.epoch << ": GAP " << format_fixed(best.validation.gap)
            << ", F1 " << format_fixed(best.validation.micro_f1)
            << (result.history.stopped_early ? " (stopped early)" : "") << '\n';
  std::cout << "checkpoints in " << o.ckpt_dir << '\n';
  return kExitOk;
}

struct EvalOptions {
  std::string config;
  std::string ckpt;
  DataSelection data;
  std::vector<std::string> from_file;
  std::optional<std::size_t> gap_k, threads;
  std::optional<double> threshold;
  bool json = false;
};

int cmd_eval(EvalOptions o) {
  const CliConfig cfg = load_cli_config(o.config);
  const std::size_t gap_k = o.gap_k.value_or(cfg.eval.gap_k.value_or(kDefaultGapK));
  const double threshold = o.threshold.value_or(cfg.eval.f1_threshold.value_or(kDefaultF1Threshold));
  const std::size_t threads = o.threads.value_or(cfg.eval.threads.value_or(1));
  if (threads == 0) throw InvalidConfig("threads must be positive");

  MetricsReport report;
  if (!o.from_file.empty()) {
    std::ifstream preds_in(o.from_file.at(0)), labels_in(o.from_file.at(1));
    if (!preds_in) throw IoError("cannot open " + o.from_file[0]);
    if (!labels_in) throw IoError("cannot open " + o.from_file[1]);
    const auto [scores, labels] = align_by_id(parse_predictions(preds_in), parse_labels(labels_in));
    report.gap = gap_at_k(scores, labels, gap_k);
    report.micro_f1 = micro_f1(scores, labels, threshold);
    report.num_videos = scores.size();
    report.k = gap_k;
    report.threshold = threshold;
  } else {
    if (o.ckpt.empty()) throw InvalidConfig("eval needs --ckpt or --from-file");
    merge_data_selection(o.data, cfg.data);
    const Model model = load_checkpoint(o.ckpt);
    report = evaluate(model, select_data(o.data), gap_k, threshold, threads);
  }
  print_report(report, o.json);
  return kExitOk;
}

struct GradcheckOptionsCli {
  std::string target;
  bool all = false;
  std::size_t seeds = 20;
  std::uint64_t seed = 1;
  std::optional<std::size_t> d, t, in, out, rows;
  bool corrupt = false;
};

int cmd_gradcheck(const GradcheckOptionsCli& o) {
  std::vector<std::string> targets;
  if (o.all || o.target.empty()) {
    targets = gradcheck_suite_names();
  } else {
    targets = {o.target};
  }
  if (o.seeds == 0) throw InvalidConfig("--seeds must be positive");
  for (const auto& dim : {o.d, o.t, o.in, o.out, o.rows}) {
    if (dim && *dim == 0) throw InvalidConfig("layer sizes must be positive");
  }
  const GradCheckDims dims{o.in, o.out, o.rows, o.d, o.t};
  bool all_pass = true;
  std::cout << std::left << std::setw(16) << "target" << std::setw(8) << "seeds"
            << std::setw(16) << "max_rel_err" << std::setw(10) << "tol" << "result\n";
  for (const auto& name : targets) {
    const auto r = run_gradcheck_suite(name, o.seeds, o.seed, o.corrupt ? 2.0 : 1.0, dims);
    all_pass = all_pass && r.pass();
    std::ostringstream err, tol;
    err << std::scientific << std::setprecision(3) << r.max_rel_error;
    tol << std::scientific << std::setprecision(0) << r.tolerance;
    std::cout << std::setw(16) << name << std::setw(8) << r.seeds << std::setw(16) << err.str()
              << std::setw(10) << tol.str() << (r.pass() ? "PASS" : "FAIL") << '\n';
  }
  return all_pass ? kExitOk : kExitFailure;
}

struct ParamsOptions {
  std::string config;
  std::optional<std::string> arch;
  std::optional<std::size_t> visual_dim, audio_dim, vocab;
  std::optional<std::vector<std::size_t>> visual_hidden, audio_hidden, fusion_hidden;
  bool json = false;
};

int cmd_params(const ParamsOptions& o) {
  const CliConfig cfg = load_cli_config(o.config);
  ModelConfig mc = model_config_from_json(cfg.model);
  if (o.arch) mc.arch = parse_architecture(*o.arch);
  if (o.visual_dim) mc.visual_dim = *o.visual_dim;
  if (o.audio_dim) mc.audio_dim = *o.audio_dim;
  if (o.vocab) mc.vocab_size = *o.vocab;
  if (o.visual_hidden) mc.visual_hidden = *o.visual_hidden;
  if (o.audio_hidden) mc.audio_hidden = *o.audio_hidden;
  if (o.fusion_hidden) mc.fusion_hidden = *o.fusion_hidden;
  const std::size_t count = param_count(mc);
  const double millions = static_cast<double>(count) / 1e6;
  if (o.json) {
    json j;
    j["arch"] = std::string(to_string(mc.arch));
    j["parameters"] = count;
    j["millions"] = millions;
    std::cout << j.dump() << '\n';
  } else {
    std::cout << to_string(mc.arch) << ": " << count << " parameters (" << format_fixed(millions, 1)
              << "M)\n";
  }
  return kExitOk;
}

struct PredictOptions {
  std::string config;
  std::string ckpt;
  DataSelection data;
  std::optional<std::size_t> top_k, threads;
  std::string output;
  std::string labels_out;
};

int cmd_predict(PredictOptions o) {
  const CliConfig cfg = load_cli_config(o.config);
  if (o.ckpt.empty()) throw InvalidConfig("predict needs --ckpt");
  merge_data_selection(o.data, cfg.data);
  const Model model = load_checkpoint(o.ckpt);
  const Dataset ds = select_data(o.data);
  std::size_t k = o.top_k.value_or(cfg.eval.top_k.value_or(3));
  if (k == 0) throw InvalidConfig("--top-k must be positive");
  const std::size_t vocab = model.config().vocab_size;
  if (k > vocab) {
    std::cerr << "warning: --top-k " << k << " exceeds vocabulary of " << vocab
              << "; emitting " << vocab << " pairs per video\n";
    k = vocab;
  }
  const std::size_t threads = o.threads.value_or(cfg.eval.threads.value_or(1));
  if (threads == 0) throw InvalidConfig("threads must be positive");
  const Tensor probs = predict_all(model, ds, threads);
  const auto ranked = top_k_rows(probs, k);

  std::ofstream file;
  if (!o.output.empty()) {
    file.open(o.output, std::ios::trunc);
    if (!file) throw IoError("cannot open " + o.output + " for writing");
  }
  std::ostream& out = o.output.empty() ? std::cout : file;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    write_prediction_line(out, {ds.videos[i].id, ranked[i]});
  }
  if (!out) throw IoError("failed writing predictions");
  if (!o.labels_out.empty()) {
    std::ofstream labels(o.labels_out, std::ios::trunc);
    if (!labels) throw IoError("cannot open " + o.labels_out + " for writing");
    for (const auto& v : ds.videos) write_label_line(labels, {v.id, v.labels});
    if (!labels) throw IoError("failed writing labels");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based audio-visual fusion for multi-label video classification"};
  app.require_subcommand(1);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic AVF1 dataset");
  gen_cmd->add_option("--config", gen.config, "JSON config file (data section)");
  gen_cmd->add_option("-o,--output", gen.output, "Output AVF1 path");
  gen_cmd->add_option("--videos", gen.videos, "Number of videos");
  gen_cmd->add_option("--vocab", gen.vocab, "Number of classes");
  gen_cmd->add_option("--visual-dim", gen.visual_dim, "Visual feature width");
  gen_cmd->add_option("--audio-dim", gen.audio_dim, "Audio feature width");
  gen_cmd->add_option("--seq-len", gen.seq_len, "Frames per video");
  gen_cmd->add_option("--labels-mean", gen.labels_mean, "Mean labels per video");
  gen_cmd->add_option("--visual-fraction", gen.visual_fraction, "Fraction of visual-only classes");
  gen_cmd->add_option("--audio-fraction", gen.audio_fraction, "Fraction of audio-only classes");
  gen_cmd->add_option("--both-fraction", gen.both_fraction, "Fraction of two-modality classes");
  gen_cmd->add_option("--signal", gen.signal, "Planted signal strength");
  gen_cmd->add_option("--noise", gen.noise, "Per-coordinate noise sigma");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoints");
  train_cmd->add_option("--config", tr.config, "JSON config file");
  train_cmd->add_option("--data", tr.data, "AVF1 training data (split unless --val is given)");
  train_cmd->add_option("--val", tr.val, "AVF1 validation data");
  train_cmd->add_option("--train-fraction", tr.train_fraction, "Train share of --data");
  train_cmd->add_option("--split-seed", tr.split_seed, "Seed of the train/validation split");
  train_cmd->add_option("--arch", tr.arch,
                        "attend_fusion, fc_late_fusion, visual_only or audio_only");
  train_cmd->add_option("--epochs", tr.epochs, "Training epochs");
  train_cmd->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--seed", tr.seed, "Initialization and shuffling seed");
  train_cmd->add_option("--eval-every", tr.eval_every, "Epochs between evaluations");
  train_cmd->add_option("--patience", tr.patience, "Evaluations without GAP improvement before stopping");
  train_cmd->add_option("--gap-k", tr.gap_k, "k for GAP@k");
  train_cmd->add_option("--threshold", tr.threshold, "F1 decision threshold");
  train_cmd->add_option("--threads", tr.threads, "Threads for validation passes");
  train_cmd->add_option("--ckpt-dir", tr.ckpt_dir, "Checkpoint directory");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a prediction file");
  eval_cmd->add_option("--config", ev.config, "JSON config file");
  eval_cmd->add_option("--ckpt", ev.ckpt, "AFW1 checkpoint (with its .json sidecar)");
  add_data_selection(eval_cmd, ev.data);
  eval_cmd->add_option("--from-file", ev.from_file, "Prediction file and label file")
      ->expected(2);
  eval_cmd->add_option("--gap-k", ev.gap_k, "k for GAP@k");
  eval_cmd->add_option("--threshold", ev.threshold, "F1 decision threshold");
  eval_cmd->add_option("--threads", ev.threads, "Threads for the prediction pass");
  eval_cmd->add_flag("--json", ev.json, "Print the report as JSON");

  GradcheckOptionsCli gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients to finite differences");
  gc_cmd->add_option("target", gc.target,
                     "linear, sigmoid, relu, attention, attend_fusion or fc_late_fusion")
      ->check(CLI::IsMember(gradcheck_suite_names()));
  gc_cmd->add_flag("--all", gc.all, "Check every target");
  gc_cmd->add_option("--seeds", gc.seeds, "Number of seeds per target");
  gc_cmd->add_option("--seed", gc.seed, "First seed");
  gc_cmd->add_option("--d", gc.d, "Attention width");
  gc_cmd->add_option("--t", gc.t, "Attention sequence length");
  gc_cmd->add_option("--in", gc.in, "Linear input width / activation columns");
  gc_cmd->add_option("--out", gc.out, "Linear output width");
  gc_cmd->add_option("--rows", gc.rows, "Batch rows for linear and activations");
  gc_cmd->add_flag("--corrupt", gc.corrupt, "Debug: double the first analytic gradient");

  ParamsOptions pa;
  auto* params_cmd = app.add_subcommand("params", "Count model parameters");
  params_cmd->add_option("--config", pa.config, "JSON config file (model section)");
  params_cmd->add_option("--arch", pa.arch, "Architecture");
  params_cmd->add_option("--visual-dim", pa.visual_dim, "Visual feature width");
  params_cmd->add_option("--audio-dim", pa.audio_dim, "Audio feature width");
  params_cmd->add_option("--vocab", pa.vocab, "Number of classes");
  params_cmd->add_option("--visual-hidden", pa.visual_hidden, "Visual hidden widths")->delimiter(',');
  params_cmd->add_option("--audio-hidden", pa.audio_hidden, "Audio hidden widths")->delimiter(',');
  params_cmd->add_option("--fusion-hidden", pa.fusion_hidden, "Fusion hidden widths")->delimiter(',');
  params_cmd->add_flag("--json", pa.json, "Print JSON");

  PredictOptions pr;
  auto* predict_cmd = app.add_subcommand("predict", "Write top-k class:score lines per video");
  predict_cmd->add_option("--config", pr.config, "JSON config file");
  predict_cmd->add_option("--ckpt", pr.ckpt, "AFW1 checkpoint (with its .json sidecar)");
  add_data_selection(predict_cmd, pr.data);
  predict_cmd->add_option("--top-k", pr.top_k, "Pairs per video");
  predict_cmd->add_option("--threads", pr.threads, "Threads for the prediction pass");
  predict_cmd->add_option("-o,--output", pr.output, "Prediction file (default stdout)");
  predict_cmd->add_option("--labels-out", pr.labels_out, "Also write the matching label file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    if (params_cmd->parsed()) return cmd_params(pa);
    if (predict_cmd->parsed()) return cmd_predict(pr);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
