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

#ifndef AFUSION_TENSOR_HPP_
#define AFUSION_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "afusion/errors.hpp"

namespace afusion {

/// Dense row-major array of doubles with an explicit shape of rank 1 to 3.
///
/// There are no views or strides: every operation returns a fresh value, so a
/// Tensor can be shared freely between threads once built.
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (data_.size() != element_count(shape_)) {
      throw ShapeMismatch("data length " + std::to_string(data_.size()) +
                          " does not match shape " + describe(shape_));
    }
  }

  /// Builds a rank-2 tensor from nested rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
      if (row.size() != n) throw ShapeMismatch("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  static Tensor identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
      throw AxisOutOfRange("axis " + std::to_string(axis) + " for shape " +
                           describe(shape_));
    }
    return shape_[axis];
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  /// Same data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const {
    validate_shape(shape);
    if (element_count(shape) != data_.size()) {
      throw ShapeMismatch("cannot reshape " + describe(shape_) + " to " +
                          describe(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(double value) { std::fill(data_.begin(), data_.end(), value); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

  static std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  static std::string describe(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) out << 'x';
      out << shape[i];
    }
    out << ']';
    return out.str();
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 3) {
      throw RankError("tensor rank must be 1..3, got " +
                      std::to_string(shape.size()));
    }
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeMismatch("zero dimension in " + describe(shape));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw RankError(std::string(op) + " expects rank " + std::to_string(rank) +
                    ", got " + Tensor::describe(a.shape()));
  }
}

inline void require_finite_input(const Tensor& a, const char* op) {
  if (!a.all_finite()) {
    throw NonFiniteInput(std::string(op) + " received a non-finite value");
  }
}

// Results of finite arithmetic can still overflow; surface that as an error
// instead of handing Inf downstream.
inline Tensor checked_result(Tensor t, const char* op) {
  if (!t.all_finite()) {
    throw NonFiniteInput(std::string(op) + " produced a non-finite value");
  }
  return t;
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeMismatch("matmul " + Tensor::describe(a.shape()) + " x " +
                        Tensor::describe(b.shape()));
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a(i, p);
      for (std::size_t j = 0; j < n; ++j) out(i, j) += aip * b(p, j);
    }
  }
  return detail::checked_result(std::move(out), "matmul");
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

namespace detail {

/// Sums the terms in ascending order, so the result depends only on the
/// multiset of values and not on where each term came from.
inline double order_free_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

}  // namespace detail

/// Row-wise softmax with the row maximum subtracted first. Permuting the
/// columns of the input permutes the output bitwise.
inline Tensor softmax_rows(const Tensor& a) {
  detail::require_rank(a, 2, "softmax_rows");
  detail::require_finite_input(a, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out({m, n});
  std::vector<double> terms(n);
  for (std::size_t i = 0; i < m; ++i) {
    double row_max = a(i, 0);
    for (std::size_t j = 1; j < n; ++j) row_max = std::max(row_max, a(i, j));
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = std::exp(a(i, j) - row_max);
      terms[j] = out(i, j);
    }
    const double total = detail::order_free_sum(terms);
    for (std::size_t j = 0; j < n; ++j) out(i, j) /= total;
  }
  return out;
}

enum class ElementwiseOp { kAdd, kSub, kMul };

/// Pointwise combination of two same-shaped tensors. There is no
/// broadcasting; use scale() or add_scalar() for scalar operands.
inline Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("elementwise " + Tensor::describe(a.shape()) + " vs " +
                        Tensor::describe(b.shape()));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    switch (op) {
      case ElementwiseOp::kAdd: out[i] = a[i] + b[i]; break;
      case ElementwiseOp::kSub: out[i] = a[i] - b[i]; break;
      case ElementwiseOp::kMul: out[i] = a[i] * b[i]; break;
    }
  }
  return detail::checked_result(std::move(out), "elementwise");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, ElementwiseOp::kAdd);
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, ElementwiseOp::kSub);
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise(a, b, ElementwiseOp::kMul);
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
  return detail::checked_result(std::move(out), "scale");
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + s;
  return detail::checked_result(std::move(out), "add_scalar");
}

/// In-place accumulation used by gradient buffers.
inline void accumulate(Tensor& into, const Tensor& delta) {
  if (into.shape() != delta.shape()) {
    throw ShapeMismatch("accumulate " + Tensor::describe(into.shape()) +
                        " += " + Tensor::describe(delta.shape()));
  }
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

enum class ReduceKind { kSum, kMean };

/// Reduces one axis away. Reducing the only axis of a rank-1 tensor yields
/// shape [1].
inline Tensor reduce(const Tensor& a, ReduceKind kind, std::size_t axis) {
  if (axis >= a.rank()) {
    throw AxisOutOfRange("axis " + std::to_string(axis) + " for shape " +
                         Tensor::describe(a.shape()));
  }
  const auto& shape = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t extent = shape[axis];

  Tensor::Shape out_shape;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out_shape.push_back(shape[i]);
  if (out_shape.empty()) out_shape.push_back(1);

  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t e = 0; e < extent; ++e) {
      const std::size_t base = (o * extent + e) * inner;
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += a[base + i];
    }
  }
  if (kind == ReduceKind::kMean) {
    const double inv = 1.0 / static_cast<double>(extent);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= inv;
  }
  return detail::checked_result(std::move(out), "reduce");
}

inline Tensor sum(const Tensor& a, std::size_t axis) {
  return reduce(a, ReduceKind::kSum, axis);
}
inline Tensor mean(const Tensor& a, std::size_t axis) {
  return reduce(a, ReduceKind::kMean, axis);
}

/// Sum of every element.
inline double total(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

/// Slice i along axis 0 of a rank-3 tensor, as a rank-2 tensor.
inline Tensor slice_batch(const Tensor& a, std::size_t i) {
  detail::require_rank(a, 3, "slice_batch");
  if (i >= a.dim(0)) throw AxisOutOfRange("batch index out of range");
  const std::size_t rows = a.dim(1), cols = a.dim(2);
  const auto begin = a.values().begin() + static_cast<std::ptrdiff_t>(i * rows * cols);
  return Tensor({rows, cols}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(rows * cols)));
}

/// Stacks equally-shaped rank-2 tensors into a rank-3 tensor.
inline Tensor stack(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("stack of nothing");
  detail::require_rank(parts.front(), 2, "stack");
  const auto& shape = parts.front().shape();
  std::vector<double> data;
  data.reserve(parts.size() * parts.front().size());
  for (const auto& p : parts) {
    if (p.shape() != shape) throw ShapeMismatch("stack of unequal shapes");
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  return Tensor({parts.size(), shape[0], shape[1]}, std::move(data));
}

/// [m x p] and [m x q] side by side -> [m x (p + q)].
inline Tensor concat_columns(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "concat_columns");
  detail::require_rank(b, 2, "concat_columns");
  if (a.dim(0) != b.dim(0)) throw ShapeMismatch("concat_columns row count");
  const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out({m, p + q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < q; ++j) out(i, p + j) = b(i, j);
  }
  return out;
}

/// Columns [begin, begin + count) of a rank-2 tensor.
inline Tensor column_block(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_rank(a, 2, "column_block");
  if (begin + count > a.dim(1) || count == 0) {
    throw AxisOutOfRange("column block out of range");
  }
  Tensor out({a.dim(0), count});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

}  // namespace afusion

#endif  // AFUSION_TENSOR_HPP_
