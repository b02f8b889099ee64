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

#ifndef AFUSION_GRADCHECK_HPP_
#define AFUSION_GRADCHECK_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "afusion/layers.hpp"
#include "afusion/metrics.hpp"
#include "afusion/model.hpp"
#include "afusion/rng.hpp"

namespace afusion {

struct GradCheckEntry {
  std::string name;  // parameter name, or "input"
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;
  bool pass = false;

  double max_rel_error() const {
    double worst = 0.0;
    for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
    return worst;
  }
};

/// Scalar loss used to probe a layer's outputs.
///  kSum:         sum of all outputs
///  kWeightedSum: sum of outputs times fixed random weights in [-1, 1]
///  kBce:         binary cross-entropy against fixed random 0/1 targets;
///                outputs must lie in (0, 1)
enum class ProbeLoss { kSum, kWeightedSum, kBce };

struct GradCheckOptions {
  double tolerance = 1e-5;
  std::uint64_t seed = 1;
  ProbeLoss probe = ProbeLoss::kWeightedSum;
  double step = 1e-5;
  // Denominator floor of the relative error, so that gradients that are zero
  // analytically are judged on absolute error at this scale.
  double rel_floor = 1e-5;
  // Debug knob: multiplies the first parameter's analytic gradient (the
  // input gradient for parameterless layers). Model checks skip parameters
  // whose gradient is identically zero, such as those behind dead ReLUs.
  double corrupt_factor = 1.0;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

template <typename L>
concept DifferentiableLayer = requires(L layer, const Tensor& t) {
  { layer.forward(t) } -> std::same_as<Tensor>;
  { layer.backward(t) } -> std::same_as<Tensor>;
  { layer.parameters("") } -> std::same_as<std::vector<ParamRef>>;
  layer.zero_grads();
};

namespace detail {

class Probe {
 public:
  Probe(ProbeLoss kind, std::uint64_t seed) : kind_(kind), rng_(seed, streams::kGradCheck + 1) {}

  // Returns the scalar loss and dLoss/dOutput.
  std::pair<double, Tensor> operator()(const Tensor& out) {
    if (coeffs_.empty()) {
      coeffs_ = Tensor(out.shape());
      for (double& c : coeffs_.data()) {
        c = kind_ == ProbeLoss::kBce ? (rng_.uniform() < 0.5 ? 1.0 : 0.0)
                                     : rng_.uniform(-1.0, 1.0);
      }
    }
    Tensor grad(out.shape());
    double loss = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      switch (kind_) {
        case ProbeLoss::kSum:
          loss += out[i];
          grad[i] = 1.0;
          break;
        case ProbeLoss::kWeightedSum:
          loss += coeffs_[i] * out[i];
          grad[i] = coeffs_[i];
          break;
        case ProbeLoss::kBce: {
          const double y = coeffs_[i], p = out[i];
          loss -= y * std::log(p) + (1.0 - y) * std::log1p(-p);
          grad[i] = (p - y) / (p * (1.0 - p));
          break;
        }
      }
    }
    return {loss, std::move(grad)};
  }

 private:
  ProbeLoss kind_;
  Rng rng_;
  Tensor coeffs_;
};

// Central differences for every entry of `target`, compared to `analytic`.
inline GradCheckEntry compare_entries(std::string name, Tensor& target,
                                      const Tensor& analytic,
                                      const std::function<double()>& loss,
                                      const GradCheckOptions& opt) {
  GradCheckEntry entry{std::move(name), target.size(), 0.0};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double saved = target[i];
    target[i] = saved + opt.step;
    const double plus = loss();
    target[i] = saved - opt.step;
    const double minus = loss();
    target[i] = saved;
    const double numeric = (plus - minus) / (2.0 * opt.step);
    entry.max_rel_error = std::max(
        entry.max_rel_error, relative_error(analytic[i], numeric, opt.rel_floor));
  }
  return entry;
}

inline GradCheckReport finish(std::vector<GradCheckEntry> entries, double tol) {
  GradCheckReport report{std::move(entries), tol, true};
  for (const auto& e : report.entries) {
    if (!(e.max_rel_error < tol)) report.pass = false;
  }
  return report;
}

}  // namespace detail

/// Checks a layer's analytic parameter and input gradients against central
/// finite differences of a probe loss. Inputs are drawn uniformly from
/// [-1, 1], kept at least 0.01 away from zero so ReLU kinks stay outside the
/// difference stencil. Deterministic given options.seed.
template <DifferentiableLayer Layer>
GradCheckReport gradcheck(Layer& layer, const Tensor::Shape& input_shape,
                          const GradCheckOptions& opt) {
  if (!(opt.tolerance > 0.0)) throw InvalidConfig("gradcheck tolerance must be positive");
  Rng rng(opt.seed, streams::kGradCheck);
  Tensor input(input_shape);
  for (double& v : input.data()) {
    const double u = rng.uniform(-1.0, 1.0);
    v = std::copysign(std::max(std::abs(u), 0.01), u);
  }

  detail::Probe probe(opt.probe, opt.seed);
  layer.zero_grads();
  auto [loss0, grad_out] = probe(layer.forward(input));
  (void)loss0;
  Tensor grad_in = layer.backward(grad_out);

  auto params = layer.parameters("");
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(*p.grad);
  // Parameterless layers take the corruption on their input gradient.
  Tensor& corrupted = analytic.empty() ? grad_in : analytic.front();
  for (double& g : corrupted.data()) g *= opt.corrupt_factor;

  const auto loss_at = [&] { return probe(layer.forward(input)).first; };
  std::vector<GradCheckEntry> entries;
  for (std::size_t i = 0; i < params.size(); ++i) {
    entries.push_back(detail::compare_entries(params[i].name, *params[i].value,
                                              analytic[i], loss_at, opt));
  }
  entries.push_back(detail::compare_entries("input", input, grad_in, loss_at, opt));
  // Leave the layer without a dangling cache from the probing passes.
  layer.backward(Tensor(grad_out.shape()));
  layer.zero_grads();
  return detail::finish(std::move(entries), opt.tolerance);
}

/// End-to-end check of a model under the BCE objective with random inputs in
/// [-1, 1] and random labels (each class positive with probability 0.3, at
/// least one per video).
inline GradCheckReport gradcheck_model(Model& model, std::size_t batch,
                                       const GradCheckOptions& opt) {
  if (!(opt.tolerance > 0.0)) throw InvalidConfig("gradcheck tolerance must be positive");
  const auto& cfg = model.config();
  Rng rng(opt.seed, streams::kGradCheck);
  Tensor visual({batch, cfg.seq_len, cfg.visual_dim});
  Tensor audio({batch, cfg.seq_len, cfg.audio_dim});
  for (double& v : visual.data()) v = rng.uniform(-1.0, 1.0);
  for (double& v : audio.data()) v = rng.uniform(-1.0, 1.0);
  std::vector<LabelSet> labels;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<std::uint32_t> pos;
    for (std::uint32_t c = 0; c < cfg.vocab_size; ++c) {
      if (rng.uniform() < 0.3) pos.push_back(c);
    }
    if (pos.empty()) pos.push_back(static_cast<std::uint32_t>(rng.below(cfg.vocab_size)));
    labels.emplace_back(std::move(pos));
  }

  model.zero_grads();
  model.backward(bce_loss(model.forward(visual, audio), labels).grad);

  auto params = model.parameters();
  std::vector<Tensor> analytic;
  for (const auto& p : params) analytic.push_back(*p.grad);
  for (Tensor& g : analytic) {
    if (std::all_of(g.data().begin(), g.data().end(), [](double v) { return v == 0.0; })) continue;
    for (double& v : g.data()) v *= opt.corrupt_factor;
    break;
  }
  const auto loss_at = [&] { return bce_loss(model.predict(visual, audio), labels).loss; };
  std::vector<GradCheckEntry> entries;
  for (std::size_t i = 0; i < params.size(); ++i) {
    entries.push_back(detail::compare_entries(params[i].name, *params[i].value,
                                              analytic[i], loss_at, opt));
  }
  model.zero_grads();
  return detail::finish(std::move(entries), opt.tolerance);
}

// ---------------------------------------------------------------------------
// Multi-seed suites, shared by the command-line tool and the acceptance tests.

struct GradCheckSuiteResult {
  std::string name;
  std::size_t seeds = 0;
  std::size_t failures = 0;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  bool pass() const { return failures == 0; }
};

inline const std::vector<std::string>& gradcheck_suite_names() {
  static const std::vector<std::string> names = {
      "linear", "sigmoid", "relu", "attention", "attend_fusion", "fc_late_fusion"};
  return names;
}

/// Tolerance per suite: 1e-6 for the linear and sigmoid layers, 1e-5 for the
/// rest.
inline double gradcheck_suite_tolerance(const std::string& name) {
  return (name == "linear" || name == "sigmoid") ? 1e-6 : 1e-5;
}

/// Small end-to-end configuration used for model-level gradient checks.
inline ModelConfig gradcheck_model_config(Architecture arch) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.visual_dim = 4;
  cfg.audio_dim = 3;
  cfg.vocab_size = 3;
  cfg.seq_len = 3;
  cfg.visual_hidden = {4};
  cfg.audio_hidden = {3};
  cfg.fusion_hidden = {4};
  return cfg;
}

/// Optional fixed layer sizes; unset sizes are drawn per seed.
struct GradCheckDims {
  std::optional<std::size_t> in, out, rows, d, t;
};

/// Runs one named suite over `seeds` consecutive seeds starting at
/// `base_seed`. Unfixed layer sizes are drawn from 1..6 per seed.
inline GradCheckSuiteResult run_gradcheck_suite(const std::string& name,
                                                std::size_t seeds,
                                                std::uint64_t base_seed,
                                                double corrupt_factor = 1.0,
                                                const GradCheckDims& dims = {}) {
  GradCheckSuiteResult result{name, seeds, 0, gradcheck_suite_tolerance(name), 0.0};
  for (std::size_t s = 0; s < seeds; ++s) {
    const std::uint64_t seed = base_seed + s;
    Rng sizes(seed, streams::kGradCheck + 2);
    const auto pick = [&sizes](std::optional<std::size_t> fixed = std::nullopt) {
      const std::size_t drawn = static_cast<std::size_t>(sizes.below(6)) + 1;
      return fixed.value_or(drawn);
    };
    GradCheckOptions opt;
    opt.seed = seed;
    opt.tolerance = result.tolerance;
    opt.corrupt_factor = corrupt_factor;
    GradCheckReport report;
    if (name == "linear") {
      const std::size_t in = pick(dims.in), out = pick(dims.out), batch = pick(dims.rows);
      Rng init(seed, streams::kWeightInit);
      LinearLayer layer(in, out, init);
      report = gradcheck(layer, {batch, in}, opt);
    } else if (name == "sigmoid" || name == "relu") {
      const Tensor::Shape shape{pick(dims.rows), pick(dims.in)};
      if (name == "sigmoid") {
        Sigmoid layer;
        opt.probe = ProbeLoss::kBce;
        report = gradcheck(layer, shape, opt);
      } else {
        Relu layer;
        report = gradcheck(layer, shape, opt);
      }
    } else if (name == "attention") {
      const std::size_t d = pick(dims.d), t = pick(dims.t);
      Rng init(seed, streams::kWeightInit);
      SelfAttentionBlock block(d, init);
      report = gradcheck(block, {t, d}, opt);
    } else if (name == "attend_fusion" || name == "fc_late_fusion") {
      Model model = Model::build(gradcheck_model_config(parse_architecture(name)), seed);
      report = gradcheck_model(model, 2, opt);
    } else {
      throw InvalidConfig("unknown gradcheck target '" + name + "'");
    }
    result.max_rel_error = std::max(result.max_rel_error, report.max_rel_error());
    if (!report.pass) ++result.failures;
  }
  return result;
}

}  // namespace afusion

#endif  // AFUSION_GRADCHECK_HPP_
