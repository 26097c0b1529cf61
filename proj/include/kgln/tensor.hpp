/*
 * Copyright 2026 The KGLN Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Small dense kernel: vectors, row-major matrices and the handful of
// activations the network uses, each with its adjoint. Parameters are
// stored as float; activations and reductions run in double.

#pragma once

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "kgln/errors.hpp"

namespace kgln {

template <class T>
class Vector {
 public:
  using value_type = T;

  Vector() = default;
  explicit Vector(std::size_t dim, T fill = T{0}) : data_(dim, fill) {}
  Vector(std::initializer_list<T> values) : data_(values) {}
  explicit Vector(std::vector<T> values) : data_(std::move(values)) {}
  template <class U>
    requires(!std::is_same_v<U, T>)
  explicit Vector(const Vector<U>& other) : data_(other.begin(), other.end()) {}
  template <class U>
  explicit Vector(std::span<const U> values) : data_(values.begin(), values.end()) {}

  static Vector zeros(std::size_t dim) { return Vector(dim, T{0}); }
  static Vector ones(std::size_t dim) { return Vector(dim, T{1}); }

  std::size_t dim() const noexcept { return data_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  operator std::span<const T>() const noexcept { return data_; }

  const std::vector<T>& values() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<T> data_;
};

/// Row-major dense matrix.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ShapeError("matrix data length does not match rows*cols");
  }
  Matrix(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using DenseVector = Vector<float>;
using DenseMatrix = Matrix<float>;
using Vec64 = Vector<double>;
using Mat64 = Matrix<double>;

namespace detail {
inline void require_same_dim(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}
}  // namespace detail

template <class T>
bool all_finite(std::span<const T> xs) {
  return std::all_of(xs.begin(), xs.end(), [](T x) { return std::isfinite(x); });
}

/// Anything with size() and operator[]: Vector, std::span, std::vector.
template <class R>
concept IndexableRange = requires(const R& r, std::size_t i) {
  { r.size() } -> std::convertible_to<std::size_t>;
  { double(r[i]) };
};

template <IndexableRange A, IndexableRange B>
double dot(const A& a, const B& b) {
  detail::require_same_dim(a.size(), b.size(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
  return acc;
}

/// y = m x
template <class M, IndexableRange X>
Vec64 matvec(const Matrix<M>& m, const X& x) {
  if (m.cols() != x.size()) {
    throw ShapeError("matvec: matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " but vector has dim " + std::to_string(x.size()));
  }
  Vec64 y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    const M* row = m.data() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) acc += double(row[c]) * double(x[c]);
    y[r] = acc;
  }
  return y;
}

/// Adjoint of matvec with respect to x: m^T dy.
template <class M, IndexableRange D>
Vec64 matvec_transposed(const Matrix<M>& m, const D& dy) {
  detail::require_same_dim(m.rows(), dy.size(), "matvec_transposed");
  Vec64 dx(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const M* row = m.data() + r * m.cols();
    for (std::size_t c = 0; c < m.cols(); ++c) dx[c] += double(row[c]) * double(dy[r]);
  }
  return dx;
}

/// Adjoint of matvec with respect to m: grad += dy x^T.
template <IndexableRange D, IndexableRange X>
void add_outer(Mat64& grad, const D& dy, const X& x) {
  detail::require_same_dim(grad.rows(), dy.size(), "add_outer rows");
  detail::require_same_dim(grad.cols(), x.size(), "add_outer cols");
  for (std::size_t r = 0; r < grad.rows(); ++r) {
    double* row = grad.data() + r * grad.cols();
    for (std::size_t c = 0; c < grad.cols(); ++c) row[c] += double(dy[r]) * double(x[c]);
  }
}

template <class A, class B>
Vec64 add(const Vector<A>& a, const Vector<B>& b) {
  detail::require_same_dim(a.dim(), b.dim(), "add");
  Vec64 out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = double(a[i]) + double(b[i]);
  return out;
}

template <class A, class B>
Vec64 concat(const Vector<A>& a, const Vector<B>& b) {
  Vec64 out(a.dim() + b.dim());
  std::copy(a.begin(), a.end(), out.begin());
  std::copy(b.begin(), b.end(), out.begin() + std::ptrdiff_t(a.dim()));
  return out;
}

/// y += alpha * x
template <IndexableRange X>
void axpy(double alpha, const X& x, std::span<double> y) {
  detail::require_same_dim(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * double(x[i]);
}

/// Elementwise product.
template <class A, class B>
auto hadamard(const Vector<A>& a, const Vector<B>& b) {
  detail::require_same_dim(a.dim(), b.dim(), "hadamard");
  using R = std::common_type_t<A, B>;
  Vector<R> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = R(a[i]) * R(b[i]);
  return out;
}

inline constexpr double kDefaultLeakySlope = 0.01;

template <class T>
Vector<T> leaky_relu(const Vector<T>& x, double slope = kDefaultLeakySlope) {
  Vector<T> out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] >= T{0} ? x[i] : T(slope * double(x[i]));
  return out;
}

/// Adjoint of leaky_relu; `pre` is the pre-activation input.
inline Vec64 leaky_relu_backward(const Vec64& pre, const Vec64& dy, double slope = kDefaultLeakySlope) {
  detail::require_same_dim(pre.dim(), dy.dim(), "leaky_relu_backward");
  Vec64 dx(pre.dim());
  for (std::size_t i = 0; i < pre.dim(); ++i) dx[i] = pre[i] >= 0.0 ? dy[i] : slope * dy[i];
  return dx;
}

template <class T>
Vector<T> tanh_act(const Vector<T>& x) {
  Vector<T> out(x.dim());
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

/// Adjoint of tanh_act; `out` is the activation output.
inline Vec64 tanh_backward(const Vec64& out, const Vec64& dy) {
  detail::require_same_dim(out.dim(), dy.dim(), "tanh_backward");
  Vec64 dx(out.dim());
  for (std::size_t i = 0; i < out.dim(); ++i) dx[i] = (1.0 - out[i] * out[i]) * dy[i];
  return dx;
}

inline double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// d sigmoid / dx expressed through the output.
inline double sigmoid_backward(double out, double dy) { return out * (1.0 - out) * dy; }

/// Max-shifted softmax. Throws on empty input.
inline std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

/// Adjoint of softmax given its output y: dx_i = y_i (dy_i - sum_j y_j dy_j).
inline std::vector<double> softmax_backward(std::span<const double> y, std::span<const double> dy) {
  detail::require_same_dim(y.size(), dy.size(), "softmax_backward");
  double inner = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) inner += y[i] * dy[i];
  std::vector<double> dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = y[i] * (dy[i] - inner);
  return dx;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

struct GradientCheck {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;
  /// First coordinate whose probe produced a non-finite value (valid when !finite).
  std::size_t nonfinite_index = 0;

  bool passed(double tol) const { return finite && max_rel_error < tol; }
};

/// Compares an analytic gradient against central differences.
///
/// `f` maps a parameter vector (span<const float>) to a double; `analytic`
/// is the gradient of `f` at `point`. Each coordinate is probed at
/// point[i] +/- eps, and the quotient uses the perturbation actually
/// representable in float. The error per coordinate is
/// |analytic - numeric| / max(1, |analytic|).
template <class F>
GradientCheck check_gradient(F&& f, std::span<const double> analytic, std::span<const float> point, float eps) {
  if (!(eps > 0.0f)) throw std::invalid_argument("check_gradient: eps must be positive");
  detail::require_same_dim(analytic.size(), point.size(), "check_gradient");
  std::vector<float> probe(point.begin(), point.end());
  GradientCheck out;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const float x0 = probe[i];
    const float hi = x0 + eps;
    const float lo = x0 - eps;
    probe[i] = hi;
    const double fhi = f(std::span<const float>(probe));
    probe[i] = lo;
    const double flo = f(std::span<const float>(probe));
    probe[i] = x0;
    if (!std::isfinite(fhi) || !std::isfinite(flo) || !std::isfinite(analytic[i])) {
      out.finite = false;
      out.nonfinite_index = i;
      out.max_rel_error = std::numeric_limits<double>::infinity();
      out.worst_index = i;
      return out;
    }
    const double numeric = (fhi - flo) / (double(hi) - double(lo));
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > out.max_rel_error) {
      out.max_rel_error = err;
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace kgln
