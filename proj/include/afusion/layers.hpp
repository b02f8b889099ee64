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

#ifndef AFUSION_LAYERS_HPP_
#define AFUSION_LAYERS_HPP_

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afusion/rng.hpp"
#include "afusion/tensor.hpp"

namespace afusion {

/// A trainable tensor and its gradient buffer, as exposed to optimizers,
/// serializers and the gradient checker. Pointers stay valid until the owning
/// layer is moved.
struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct ConstParamRef {
  std::string name;
  const Tensor* value;
  const Tensor* grad;
};

namespace detail {

inline std::string join_name(std::string_view prefix, std::string_view leaf) {
  if (prefix.empty()) return std::string(leaf);
  return std::string(prefix) + "." + std::string(leaf);
}

inline void fill_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace detail

/// Fully connected layer y = x W^T + b with W stored [out x in].
class LinearLayer {
 public:
  LinearLayer(std::size_t in, std::size_t out)
      : weight_({out, in}), bias_({out}), grad_weight_({out, in}),
        grad_bias_({out}) {}

  /// Uniform(-1/sqrt(in), 1/sqrt(in)) for both weight and bias, weight first.
  LinearLayer(std::size_t in, std::size_t out, Rng& rng) : LinearLayer(in, out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    detail::fill_uniform(weight_, bound, rng);
    detail::fill_uniform(bias_, bound, rng);
  }

  std::size_t in_features() const { return weight_.dim(1); }
  std::size_t out_features() const { return weight_.dim(0); }

  Tensor infer(const Tensor& x) const {
    detail::require_rank(x, 2, "linear");
    if (x.dim(1) != in_features()) {
      throw ShapeMismatch("linear expects " + std::to_string(in_features()) +
                          " features, got " + Tensor::describe(x.shape()));
    }
    const std::size_t batch = x.dim(0), in = in_features(), out = out_features();
    Tensor y({batch, out});
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        double acc = bias_[o];
        for (std::size_t k = 0; k < in; ++k) acc += x(i, k) * weight_(o, k);
        y(i, o) = acc;
      }
    }
    return detail::checked_result(std::move(y), "linear");
  }

  Tensor forward(const Tensor& x) {
    Tensor y = infer(x);
    cached_input_ = x;
    return y;
  }

  /// gradW += upstream^T x, gradb += column sums, returns upstream W.
  Tensor backward(const Tensor& upstream) {
    if (!cached_input_) throw BackwardBeforeForward("linear layer");
    const Tensor x = std::move(*cached_input_);
    cached_input_.reset();
    const std::size_t batch = x.dim(0), in = in_features(), out = out_features();
    if (upstream.shape() != Tensor::Shape{batch, out}) {
      throw ShapeMismatch("linear backward upstream " +
                          Tensor::describe(upstream.shape()));
    }
    Tensor dx({batch, in});
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        const double g = upstream(i, o);
        grad_bias_[o] += g;
        for (std::size_t k = 0; k < in; ++k) {
          grad_weight_(o, k) += g * x(i, k);
          dx(i, k) += g * weight_(o, k);
        }
      }
    }
    return dx;
  }

  void zero_grads() {
    grad_weight_.fill(0.0);
    grad_bias_.fill(0.0);
  }

  std::vector<ParamRef> parameters(std::string_view prefix) {
    return {{detail::join_name(prefix, "weight"), &weight_, &grad_weight_},
            {detail::join_name(prefix, "bias"), &bias_, &grad_bias_}};
  }
  std::vector<ConstParamRef> parameters(std::string_view prefix) const {
    return {{detail::join_name(prefix, "weight"), &weight_, &grad_weight_},
            {detail::join_name(prefix, "bias"), &bias_, &grad_bias_}};
  }

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  const Tensor& grad_weight() const { return grad_weight_; }
  const Tensor& grad_bias() const { return grad_bias_; }

  static std::size_t param_count(std::size_t in, std::size_t out) {
    return in * out + out;
  }

 private:
  Tensor weight_, bias_, grad_weight_, grad_bias_;
  std::optional<Tensor> cached_input_;
};

/// Single-head scaled dot-product self-attention with square projections:
///
///   Q = X Wq,  K = X Wk,  V = X Wv,  A = softmax(Q K^T / sqrt(d)),  out = A V
///
/// No positional term, output projection, residual or normalization. Inputs
/// are [T x d] for one sequence or [B x T x d] for a batch of sequences; each
/// sequence attends only within itself.
class SelfAttentionBlock {
 public:
  explicit SelfAttentionBlock(std::size_t d)
      : d_(d), scale_(1.0 / std::sqrt(static_cast<double>(d))),
        wq_({d, d}), wk_({d, d}), wv_({d, d}),
        grad_wq_({d, d}), grad_wk_({d, d}), grad_wv_({d, d}) {}

  /// Uniform(-1/sqrt(d), 1/sqrt(d)), drawn for Wq, Wk, Wv in that order.
  SelfAttentionBlock(std::size_t d, Rng& rng) : SelfAttentionBlock(d) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    detail::fill_uniform(wq_, bound, rng);
    detail::fill_uniform(wk_, bound, rng);
    detail::fill_uniform(wv_, bound, rng);
  }

  std::size_t dim() const { return d_; }
  double scale() const { return scale_; }

  Tensor infer(const Tensor& x) const {
    return run(x, nullptr);
  }

  Tensor forward(const Tensor& x) {
    std::vector<Cache> caches;
    Tensor out = run(x, &caches);
    caches_ = std::move(caches);
    input_rank_ = x.rank();
    return out;
  }

  /// Attention matrices from the most recent forward, one per sequence.
  std::vector<Tensor> last_attention() const {
    std::vector<Tensor> out;
    for (const auto& c : caches_) out.push_back(c.a);
    return out;
  }

  Tensor backward(const Tensor& upstream) {
    if (caches_.empty()) throw BackwardBeforeForward("self-attention block");
    std::vector<Cache> caches = std::move(caches_);
    caches_.clear();
    const std::size_t t = caches.front().x.dim(0);
    const Tensor::Shape expected =
        input_rank_ == 2 ? Tensor::Shape{t, d_}
                         : Tensor::Shape{caches.size(), t, d_};
    if (upstream.shape() != expected) {
      throw ShapeMismatch("attention backward upstream " +
                          Tensor::describe(upstream.shape()));
    }

    std::vector<Tensor> dxs;
    dxs.reserve(caches.size());
    for (std::size_t b = 0; b < caches.size(); ++b) {
      const Cache& c = caches[b];
      const Tensor d_out = input_rank_ == 2 ? upstream : slice_batch(upstream, b);

      // out = A V
      const Tensor d_a = matmul(d_out, transpose(c.v));
      const Tensor d_v = matmul(transpose(c.a), d_out);

      // Softmax Jacobian per row: ds = a * (da - <a, da>).
      Tensor d_s({t, t});
      for (std::size_t i = 0; i < t; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < t; ++j) dot += c.a(i, j) * d_a(i, j);
        for (std::size_t j = 0; j < t; ++j) {
          d_s(i, j) = c.a(i, j) * (d_a(i, j) - dot);
        }
      }
      // S = scale * Q K^T
      const Tensor d_q = afusion::scale(matmul(d_s, c.k), scale_);
      const Tensor d_k = afusion::scale(matmul(transpose(d_s), c.q), scale_);

      const Tensor xt = transpose(c.x);
      accumulate(grad_wq_, matmul(xt, d_q));
      accumulate(grad_wk_, matmul(xt, d_k));
      accumulate(grad_wv_, matmul(xt, d_v));

      Tensor dx = matmul(d_q, transpose(wq_));
      accumulate(dx, matmul(d_k, transpose(wk_)));
      accumulate(dx, matmul(d_v, transpose(wv_)));
      dxs.push_back(std::move(dx));
    }
    return input_rank_ == 2 ? std::move(dxs.front()) : stack(dxs);
  }

  void zero_grads() {
    grad_wq_.fill(0.0);
    grad_wk_.fill(0.0);
    grad_wv_.fill(0.0);
  }

  std::vector<ParamRef> parameters(std::string_view prefix) {
    return {{detail::join_name(prefix, "wq"), &wq_, &grad_wq_},
            {detail::join_name(prefix, "wk"), &wk_, &grad_wk_},
            {detail::join_name(prefix, "wv"), &wv_, &grad_wv_}};
  }
  std::vector<ConstParamRef> parameters(std::string_view prefix) const {
    return {{detail::join_name(prefix, "wq"), &wq_, &grad_wq_},
            {detail::join_name(prefix, "wk"), &wk_, &grad_wk_},
            {detail::join_name(prefix, "wv"), &wv_, &grad_wv_}};
  }

  Tensor& wq() { return wq_; }
  Tensor& wk() { return wk_; }
  Tensor& wv() { return wv_; }
  const Tensor& wq() const { return wq_; }
  const Tensor& wk() const { return wk_; }
  const Tensor& wv() const { return wv_; }
  const Tensor& grad_wq() const { return grad_wq_; }
  const Tensor& grad_wk() const { return grad_wk_; }
  const Tensor& grad_wv() const { return grad_wv_; }

  static std::size_t param_count(std::size_t d) { return 3 * d * d; }

 private:
  struct Cache {
    Tensor x, q, k, v, a;
  };

  Cache attend(const Tensor& x) const {
    if (x.dim(1) != d_) {
      throw ShapeMismatch("attention expects width " + std::to_string(d_) +
                          ", got " + Tensor::describe(x.shape()));
    }
    Cache c;
    c.x = x;
    c.q = matmul(x, wq_);
    c.k = matmul(x, wk_);
    c.v = matmul(x, wv_);
    c.a = softmax_rows(afusion::scale(matmul(c.q, transpose(c.k)), scale_));
    return c;
  }

  // A V, with each output entry summed in value order so that permuting the
  // sequence permutes the output bitwise.
  static Tensor mix(const Tensor& a, const Tensor& v) {
    const std::size_t t = a.dim(0), d = v.dim(1);
    Tensor out({t, d});
    std::vector<double> terms(t);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t col = 0; col < d; ++col) {
        for (std::size_t j = 0; j < t; ++j) terms[j] = a(i, j) * v(j, col);
        out(i, col) = detail::order_free_sum(terms);
      }
    }
    return detail::checked_result(std::move(out), "attention");
  }

  Tensor run(const Tensor& x, std::vector<Cache>* caches) const {
    if (x.rank() == 2) {
      Cache c = attend(x);
      Tensor out = mix(c.a, c.v);
      if (caches) caches->push_back(std::move(c));
      return out;
    }
    detail::require_rank(x, 3, "attention");
    std::vector<Tensor> outs;
    outs.reserve(x.dim(0));
    for (std::size_t b = 0; b < x.dim(0); ++b) {
      Cache c = attend(slice_batch(x, b));
      outs.push_back(mix(c.a, c.v));
      if (caches) caches->push_back(std::move(c));
    }
    return stack(outs);
  }

  std::size_t d_;
  double scale_;
  Tensor wq_, wk_, wv_, grad_wq_, grad_wk_, grad_wv_;
  std::vector<Cache> caches_;
  std::size_t input_rank_ = 2;
};

class Relu {
 public:
  Tensor infer(const Tensor& x) const {
    detail::require_finite_input(x, "relu");
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
  }

  Tensor forward(const Tensor& x) {
    Tensor y = infer(x);
    cached_input_ = x;
    return y;
  }

  Tensor backward(const Tensor& upstream) {
    if (!cached_input_) throw BackwardBeforeForward("relu");
    const Tensor x = std::move(*cached_input_);
    cached_input_.reset();
    if (upstream.shape() != x.shape()) throw ShapeMismatch("relu backward");
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      dx[i] = x[i] > 0.0 ? upstream[i] : 0.0;
    }
    return dx;
  }

  void zero_grads() {}
  std::vector<ParamRef> parameters(std::string_view) { return {}; }

 private:
  std::optional<Tensor> cached_input_;
};

/// Logistic function. Outputs are clamped to the open interval (0, 1) so that
/// saturated logits never round to exactly 0 or 1.
class Sigmoid {
 public:
  static constexpr double kLowest = std::numeric_limits<double>::min();
  static constexpr double kHighest = 1.0 - 0x1.0p-53;

  static double apply(double x) {
    const double y = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                              : std::exp(x) / (1.0 + std::exp(x));
    return std::clamp(y, kLowest, kHighest);
  }

  Tensor infer(const Tensor& x) const {
    detail::require_finite_input(x, "sigmoid");
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = apply(x[i]);
    return y;
  }

  Tensor forward(const Tensor& x) {
    Tensor y = infer(x);
    cached_output_ = y;
    return y;
  }

  Tensor backward(const Tensor& upstream) {
    if (!cached_output_) throw BackwardBeforeForward("sigmoid");
    const Tensor y = std::move(*cached_output_);
    cached_output_.reset();
    if (upstream.shape() != y.shape()) throw ShapeMismatch("sigmoid backward");
    Tensor dx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) {
      dx[i] = upstream[i] * y[i] * (1.0 - y[i]);
    }
    return dx;
  }

  void zero_grads() {}
  std::vector<ParamRef> parameters(std::string_view) { return {}; }

 private:
  std::optional<Tensor> cached_output_;
};

}  // namespace afusion

#endif  // AFUSION_LAYERS_HPP_
