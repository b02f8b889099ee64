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

#ifndef AFUSION_TRAINING_HPP_
#define AFUSION_TRAINING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "afusion/config_json.hpp"
#include "afusion/dataset.hpp"
#include "afusion/metrics.hpp"
#include "afusion/model.hpp"

namespace afusion {

/// Adam with bias correction, no weight decay and no clipping.
struct AdamState {
  struct Moments {
    std::string name;
    Tensor m;
    Tensor v;
  };

  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Moments> moments;  // mirrors the model registry once initialized
};

/// One optimizer step over the given parameters, then zeroes their
/// gradients. The list must keep the same names and shapes across calls.
inline void adam_step(AdamState& state, const std::vector<ParamRef>& params) {
  if (state.moments.empty()) {
    for (const auto& p : params) {
      state.moments.push_back({p.name, Tensor(p.value->shape()), Tensor(p.value->shape())});
    }
  }
  if (state.moments.size() != params.size()) {
    throw ShapeMismatch("optimizer state tracks " + std::to_string(state.moments.size()) +
                        " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.moments[i].name != params[i].name ||
        state.moments[i].m.shape() != params[i].value->shape()) {
      throw ShapeMismatch("optimizer state out of sync at '" + params[i].name + "'");
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = *params[i].value;
    Tensor& grad = *params[i].grad;
    Tensor& m = state.moments[i].m;
    Tensor& v = state.moments[i].v;
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      value[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    grad.fill(0.0);
  }
}

inline void adam_step(AdamState& state, Model& model) {
  adam_step(state, model.parameters());
}

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t eval_every = 1;
  std::size_t early_stop_patience = 10;
  std::size_t gap_k = kDefaultGapK;
  double f1_threshold = kDefaultF1Threshold;
  double learning_rate = 1e-3;
  // Worker threads for validation passes; results do not depend on it.
  std::size_t eval_threads = 1;

  void validate() const {
    if (batch_size == 0) throw InvalidConfig("batch_size must be positive");
    if (eval_every == 0) throw InvalidConfig("eval_every must be positive");
    if (early_stop_patience == 0) throw InvalidConfig("early_stop_patience must be at least 1");
    if (gap_k == 0) throw InvalidConfig("gap_k must be positive");
    if (!(f1_threshold > 0.0 && f1_threshold < 1.0)) {
      throw InvalidConfig("f1_threshold must lie in (0, 1)");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidConfig("learning_rate must be finite and non-negative");
    }
    if (eval_threads == 0) throw InvalidConfig("eval_threads must be positive");
  }
};

inline json to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"early_stop_patience", c.early_stop_patience},
              {"gap_k", c.gap_k},
              {"f1_threshold", c.f1_threshold},
              {"learning_rate", c.learning_rate},
              {"eval_threads", c.eval_threads}};
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig base = {}) {
  detail::reject_unknown_keys(j, "train",
                              {"epochs", "batch_size", "seed", "eval_every",
                               "early_stop_patience", "gap_k", "f1_threshold",
                               "learning_rate", "eval_threads"});
  detail::read_field(j, "train", "epochs", base.epochs);
  detail::read_field(j, "train", "batch_size", base.batch_size);
  detail::read_field(j, "train", "seed", base.seed);
  detail::read_field(j, "train", "eval_every", base.eval_every);
  detail::read_field(j, "train", "early_stop_patience", base.early_stop_patience);
  detail::read_field(j, "train", "gap_k", base.gap_k);
  detail::read_field(j, "train", "f1_threshold", base.f1_threshold);
  detail::read_field(j, "train", "learning_rate", base.learning_rate);
  detail::read_field(j, "train", "eval_threads", base.eval_threads);
  return base;
}

struct HistoryEntry {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  MetricsReport validation;

  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

struct TrainHistory {
  std::vector<HistoryEntry> entries;
  std::size_t best_index = 0;
  bool stopped_early = false;

  const HistoryEntry& best() const { return entries.at(best_index); }

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

inline json to_json(const HistoryEntry& e) {
  json j;
  j["epoch"] = e.epoch;
  j["train_loss"] = e.train_loss;
  const json metrics = to_json(e.validation);
  for (const auto& item : metrics.items()) j[item.key()] = item.value();
  return j;
}

inline json to_json(const TrainHistory& h) {
  json arr = json::array();
  for (const auto& e : h.entries) arr.push_back(to_json(e));
  return arr;
}

/// The model's dataset-facing shape must match the file's header.
inline void check_conforms(const ModelConfig& cfg, const DatasetHeader& h) {
  if (cfg.visual_dim != h.visual_dim || cfg.audio_dim != h.audio_dim ||
      cfg.vocab_size != h.vocab_size || cfg.seq_len != h.seq_len) {
    throw ShapeMismatch(
        "dataset (vocab " + std::to_string(h.vocab_size) + ", visual " +
        std::to_string(h.visual_dim) + ", audio " + std::to_string(h.audio_dim) +
        ", T " + std::to_string(h.seq_len) + ") does not match model (vocab " +
        std::to_string(cfg.vocab_size) + ", visual " + std::to_string(cfg.visual_dim) +
        ", audio " + std::to_string(cfg.audio_dim) + ", T " +
        std::to_string(cfg.seq_len) + ")");
  }
}

inline constexpr std::size_t kEvalBatchSize = 64;

/// Probabilities for every video in dataset order, [N x vocab].
///
/// With threads > 1 the batches are spread over workers calling the const
/// predict path. Each output row depends only on its own video, so the result
/// is bitwise identical for any thread count.
inline Tensor predict_all(const Model& model, const Dataset& ds, std::size_t threads = 1) {
  check_conforms(model.config(), ds.header);
  if (ds.size() == 0) throw EmptyEvaluationSet("dataset has no videos");
  const std::size_t vocab = model.config().vocab_size;
  const std::size_t n_batches = (ds.size() + kEvalBatchSize - 1) / kEvalBatchSize;
  Tensor out({ds.size(), vocab});
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  const auto run_batch = [&](std::size_t b) {
    const std::size_t begin = b * kEvalBatchSize;
    const std::size_t n = std::min(kEvalBatchSize, ds.size() - begin);
    const Batch batch = make_batch(ds, std::span(all).subspan(begin, n));
    const Tensor probs = model.predict(batch.visual, batch.audio);
    std::copy(probs.values().begin(), probs.values().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(begin * vocab));
  };

  threads = std::clamp<std::size_t>(threads, 1, n_batches);
  if (threads == 1) {
    for (std::size_t b = 0; b < n_batches; ++b) run_batch(b);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (std::size_t b = w; b < n_batches; b += threads) run_batch(b);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

/// One full pass; never touches parameters. GAP is computed once over the
/// merged prediction matrix.
inline MetricsReport evaluate(const Model& model, const Dataset& ds,
                              std::size_t gap_k = kDefaultGapK,
                              double f1_threshold = kDefaultF1Threshold,
                              std::size_t threads = 1) {
  const Tensor probs = predict_all(model, ds, threads);
  const auto labels = ds.labels();
  MetricsReport report;
  report.gap = gap_at_k(probs, labels, gap_k);
  report.micro_f1 = micro_f1(probs, labels, f1_threshold);
  report.mean_loss = bce_loss(probs, labels).loss;
  report.num_videos = ds.size();
  report.k = gap_k;
  report.threshold = f1_threshold;
  return report;
}

// Checkpoint directory layout:
//   best.afw1 / best.json   weights and sidecar of the best-GAP evaluation
//   last.afw1 / last.json   weights and sidecar at the end of training
//   history.json            every evaluation so far
// Sidecars hold {"epoch", "metrics", "model"} so a checkpoint can be reloaded
// without the original configuration.

inline json checkpoint_sidecar(const HistoryEntry& e, const ModelConfig& cfg) {
  return json{{"epoch", e.epoch}, {"metrics", to_json(e.validation)}, {"model", to_json(cfg)}};
}

/// Loads an AFW1 checkpoint using the model configuration from its sidecar
/// (same path with a .json extension).
inline Model load_checkpoint(const std::filesystem::path& weights) {
  if (!std::filesystem::exists(weights)) throw IoError("no checkpoint at " + weights.string());
  auto sidecar_path = weights;
  sidecar_path.replace_extension(".json");
  const json sidecar = read_json_file(sidecar_path);
  if (!sidecar.contains("model")) throw CorruptFile(sidecar_path.string() + " has no model section");
  return load_weights(weights, model_config_from_json(sidecar.at("model")));
}

struct TrainResult {
  TrainHistory history;
  std::vector<Tensor> best_weights;
};

using EvalCallback = std::function<void(const HistoryEntry&)>;

/// Deterministic mini-batch training.
///
/// Evaluates once before training (epoch 0, train loss measured without
/// updates), then every eval_every epochs and after the final epoch. The best
/// evaluation is the one with the highest validation GAP (earliest wins ties);
/// training stops once early_stop_patience evaluations pass without a strict
/// improvement. Epoch e shuffles with a seed drawn from stream
/// kShuffleBase + e of config.seed.
inline TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set,
                         const TrainConfig& config,
                         const std::optional<std::filesystem::path>& ckpt_dir = std::nullopt,
                         const EvalCallback& on_eval = {}) {
  config.validate();
  check_conforms(model.config(), train_set.header);
  check_conforms(model.config(), val_set.header);
  if (train_set.size() == 0) throw EmptyEvaluationSet("training set is empty");
  if (ckpt_dir) {
    std::error_code ec;
    std::filesystem::create_directories(*ckpt_dir, ec);
    if (ec) throw IoError("cannot create " + ckpt_dir->string() + ": " + ec.message());
  }

  TrainResult result;
  AdamState adam;
  adam.lr = config.learning_rate;
  std::size_t since_best = 0;

  const auto record = [&](std::size_t epoch, double train_loss) {
    HistoryEntry entry{epoch, train_loss,
                       evaluate(model, val_set, config.gap_k, config.f1_threshold,
                                config.eval_threads)};
    auto& h = result.history;
    h.entries.push_back(entry);
    const bool improved =
        h.entries.size() == 1 || entry.validation.gap > h.best().validation.gap;
    if (improved) {
      h.best_index = h.entries.size() - 1;
      result.best_weights = model.snapshot();
      since_best = 0;
      if (ckpt_dir) {
        save_weights(model, *ckpt_dir / "best.afw1");
        write_json_file(*ckpt_dir / "best.json", checkpoint_sidecar(entry, model.config()));
      }
    } else {
      ++since_best;
    }
    if (ckpt_dir) write_json_file(*ckpt_dir / "history.json", to_json(h));
    if (on_eval) on_eval(entry);
  };

  record(0, bce_loss(predict_all(model, train_set, config.eval_threads), train_set.labels()).loss);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t shuffle_seed = Rng(config.seed, streams::kShuffleBase + epoch).next();
    Batcher batches(train_set, config.batch_size, shuffle_seed);
    double loss_sum = 0.0;
    while (auto batch = batches.next()) {
      model.zero_grads();
      const Tensor probs = model.forward(batch->visual, batch->audio);
      const auto [loss, grad] = bce_loss(probs, batch->labels);
      model.backward(grad);
      adam_step(adam, model);
      loss_sum += loss * static_cast<double>(batch->size());
    }
    const double train_loss = loss_sum / static_cast<double>(train_set.size());
    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      record(epoch, train_loss);
      if (since_best >= config.early_stop_patience) {
        result.history.stopped_early = epoch < config.epochs;
        break;
      }
    }
  }

  if (ckpt_dir) {
    save_weights(model, *ckpt_dir / "last.afw1");
    write_json_file(*ckpt_dir / "last.json",
                    checkpoint_sidecar(result.history.entries.back(), model.config()));
  }
  return result;
}

}  // namespace afusion

#endif  // AFUSION_TRAINING_HPP_
