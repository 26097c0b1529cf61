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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "kgln/errors.hpp"
#include "kgln/tensor.hpp"

namespace kgln {
namespace {

TEST(Matvec, IdentityZerosAndHandProduct) {
  const DenseVector x{3.0f, 4.0f};
  EXPECT_EQ(matvec(DenseMatrix::identity(2), x).values(), (std::vector<double>{3, 4}));
  EXPECT_EQ(matvec(DenseMatrix::zeros(2, 2), x).values(), (std::vector<double>{0, 0}));
  const DenseMatrix m{{1, 2}, {3, 4}};
  EXPECT_EQ(matvec(m, DenseVector{1.0f, 1.0f}).values(), (std::vector<double>{3, 7}));
}

TEST(Matvec, ShapeMismatchThrows) {
  const DenseMatrix m(2, 3);
  EXPECT_THROW(matvec(m, DenseVector{1.0f, 2.0f}), ShapeError);
}

TEST(LeakyRelu, Examples) {
  EXPECT_EQ(leaky_relu(Vec64{2.0, 0.0}).values(), (std::vector<double>{2, 0}));
  EXPECT_DOUBLE_EQ(leaky_relu(Vec64{-1.0}, 0.01)[0], -0.01);
  const auto y = leaky_relu(Vec64{-2.0, 3.0}, 0.2);
  EXPECT_DOUBLE_EQ(y[0], -0.4);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(LeakyRelu, PositivelyHomogeneous) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1), c(0.01, 10);
  for (int t = 0; t < 200; ++t) {
    Vec64 x(5);
    for (auto& v : x) v = u(rng);
    const double k = c(rng);
    Vec64 kx(5);
    for (std::size_t i = 0; i < 5; ++i) kx[i] = k * x[i];
    const auto a = leaky_relu(kx), b = leaky_relu(x);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i], k * b[i], 1e-6);
  }
}

TEST(Tanh, Examples) {
  EXPECT_EQ(tanh_act(Vec64{0.0, 0.0}).values(), (std::vector<double>{0, 0}));
  EXPECT_NEAR(tanh_act(Vec64{1e6})[0], 1.0, 1e-6);
  // Series oracle: tanh(1) = (e^2 - 1) / (e^2 + 1) with e^2 by its Taylor sum.
  double e2 = 0.0, term = 1.0;
  for (int n = 0; n < 30; ++n) {
    e2 += term;
    term *= 2.0 / (n + 1);
  }
  EXPECT_NEAR(tanh_act(Vec64{1.0})[0], (e2 - 1) / (e2 + 1), 1e-5);
  EXPECT_NEAR(tanh_act(Vec64{1.0})[0], 0.761594, 1e-5);
}

TEST(Sigmoid, Examples) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(2.0), 0.880797, 1e-5);
  for (double x : {-800.0, -30.0, -1.5, 0.1, 7.0, 800.0}) {
    EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-7);
    EXPECT_GT(sigmoid(x), 0.0 - 1e-300);
  }
  EXPECT_LT(sigmoid(-1.0), sigmoid(1.0));
}

TEST(Softmax, Examples) {
  for (double w : softmax(std::vector<double>{2.5, 2.5, 2.5, 2.5})) EXPECT_DOUBLE_EQ(w, 0.25);
  const auto y = softmax(std::vector<double>{0.0, std::log(2.0)});
  EXPECT_NEAR(y[0], 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(y[1], 2.0 / 3.0, 1e-12);
  const auto big = softmax(std::vector<double>{1000.0, 0.0});
  EXPECT_NEAR(big[0], 1.0, 1e-12);
  EXPECT_NEAR(big[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(big[0]));
  EXPECT_THROW(softmax(std::vector<double>{}), ShapeError);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(1 + t % 7);
    for (auto& v : x) v = n(rng);
    const auto y = softmax(x);
    EXPECT_NEAR(std::accumulate(y.begin(), y.end(), 0.0), 1.0, 1e-9);
    auto shifted = x;
    for (auto& v : shifted) v += 123.0;
    const auto z = softmax(shifted);
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], z[i], 1e-6);
  }
}

TEST(Hadamard, Examples) {
  EXPECT_EQ(hadamard(Vec64{1, 2}, Vec64{3, 4}).values(), (std::vector<double>{3, 8}));
  const Vec64 x{0.5, -2, 7};
  EXPECT_EQ(hadamard(x, Vec64::ones(3)).values(), x.values());
  EXPECT_EQ(hadamard(x, Vec64::zeros(3)).values(), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(hadamard(Vec64{1}, Vec64{1, 2}), ShapeError);
}

TEST(CheckGradient, QuadraticAndConstant) {
  const std::vector<float> point{1.0f, 2.0f};
  auto sq = [](std::span<const float> x) { return double(x[0]) * x[0] + double(x[1]) * x[1]; };
  const std::vector<double> grad{2.0, 4.0};
  EXPECT_LT(check_gradient(sq, grad, point, 1e-3f).max_rel_error, 1e-4);

  auto constant = [](std::span<const float>) { return 3.0; };
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_EQ(check_gradient(constant, zero, point, 1e-3f).max_rel_error, 0.0);
}

TEST(CheckGradient, ReportsNonFiniteCoordinate) {
  const std::vector<float> point{1.0f, 0.0f};
  auto f = [](std::span<const float> x) { return x[0] + (x[1] > 0.0f ? std::log(-double(x[1])) : 0.0); };
  const std::vector<double> grad{1.0, 1.0};
  const auto r = check_gradient(f, grad, point, 1e-3f);
  EXPECT_FALSE(r.finite);
  EXPECT_EQ(r.nonfinite_index, 1u);
  EXPECT_FALSE(r.passed(1e-3));
}

// Every adjoint against central differences on random inputs in [-1, 1].
TEST(Adjoints, MatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  const std::size_t n = 4;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> w(n * n + n);
    for (auto& v : w) v = u(rng);
    std::vector<double> probe(n);
    for (auto& v : probe) v = u(rng);
    // f(W, x) = probe . act(W x), act in {leaky_relu, tanh}; softmax via probe . softmax(x)
    for (int kind = 0; kind < 3; ++kind) {
      auto f = [&](std::span<const float> p) {
        DenseMatrix W(n, n, std::vector<float>(p.begin(), p.begin() + n * n));
        Vec64 x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = p[n * n + i];
        if (kind == 2) return dot(probe, softmax(x.span()));
        const auto pre = matvec(W, x);
        return dot(probe, kind == 0 ? leaky_relu(pre, 0.2) : tanh_act(pre));
      };
      DenseMatrix W(n, n, std::vector<float>(w.begin(), w.begin() + n * n));
      Vec64 x(n);
      for (std::size_t i = 0; i < n; ++i) x[i] = w[n * n + i];
      std::vector<double> grad(n * n + n, 0.0);
      if (kind == 2) {
        const auto y = softmax(x.span());
        const auto dx = softmax_backward(y, probe);
        std::copy(dx.begin(), dx.end(), grad.begin() + n * n);
      } else {
        const auto pre = matvec(W, x);
        const Vec64 dy(probe);
        const auto dpre = kind == 0 ? leaky_relu_backward(pre, dy, 0.2) : tanh_backward(tanh_act(pre), dy);
        Mat64 dW(n, n);
        add_outer(dW, dpre, x);
        std::copy(dW.flat().begin(), dW.flat().end(), grad.begin());
        const auto dx = matvec_transposed(W, dpre);
        std::copy(dx.begin(), dx.end(), grad.begin() + n * n);
      }
      EXPECT_LT(check_gradient(f, grad, w, 1e-3f).max_rel_error, 1e-3) << "kind " << kind;
    }
  }
}

TEST(Sigmoid, BackwardMatchesDifference) {
  for (double x : {-3.0, -0.2, 0.0, 0.9, 4.0}) {
    const double h = 1e-6;
    const double numeric = (sigmoid(x + h) - sigmoid(x - h)) / (2 * h);
    EXPECT_NEAR(sigmoid_backward(sigmoid(x), 1.0), numeric, 1e-8);
  }
}

}  // namespace
}  // namespace kgln
