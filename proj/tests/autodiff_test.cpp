//
// Copyright 2026 The lastmile Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "lastmile/autodiff.hpp"
#include "lastmile/kernels.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace {

using lastmile::ContractError;
using lastmile::NumericError;
using lastmile::ShapeError;
using T = lastmile::ad::Tensor<double>;
namespace ad = lastmile::ad;

T param(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(r * c);
  for (auto& x : v) x = d(rng);
  return T::from_values(r, c, v, true);
}

// Runs f on a fresh tape and backpropagates.
template <class F>
void backprop(F&& f) {
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  tape.backward(f());
}

TEST(Autodiff, MatmulSmall) {
  T a = T::from_values(1, 2, {1, 2});
  T b = T::from_values(2, 1, {3, 4});
  EXPECT_EQ(ad::matmul(a, b).item(), 11.0);
}

TEST(Autodiff, SoftmaxRowsSumToOne) {
  T x = param(5, 7, 1, 3.0);
  T s = ad::softmax_rows(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 7; ++c) sum += s(r, c);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Autodiff, LayerNormOfOneTwoThree) {
  T x = T::from_values(1, 3, {1, 2, 3});
  T g = T::from_values(1, 3, {1, 1, 1});
  T b = T::from_values(1, 3, {0, 0, 0});
  T y = ad::layer_norm(x, g, b, 0.0);
  double mean = (y(0, 0) + y(0, 1) + y(0, 2)) / 3;
  double var = 0;
  for (int i = 0; i < 3; ++i) var += (y(0, i) - mean) * (y(0, i) - mean) / 3;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-12);
  // Direct formula: (x - 2) / sqrt(2/3).
  EXPECT_NEAR(y(0, 0), -1.0 / std::sqrt(2.0 / 3.0), 1e-12);
}

TEST(Autodiff, ShapeErrorNamesPrimitive) {
  T a = T::zeros(2, 3), b = T::zeros(2, 2);
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
  EXPECT_THROW(ad::add(a, b), ShapeError);
}

TEST(Autodiff, GradOfSum) {
  T x = T::from_values(1, 3, {4, 5, 6}, true);
  backprop([&] { return ad::sum(x); });
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()),
            (std::vector<double>{1, 1, 1}));
}

TEST(Autodiff, GradOfSumOfSquares) {
  T x = T::from_values(1, 2, {1, 2}, true);
  backprop([&] { return ad::sum(ad::mul(x, x)); });
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Autodiff, NonScalarLossIsContractError) {
  T x = T::from_values(1, 2, {1, 2}, true);
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  T y = ad::scale(x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Autodiff, BackwardClearsTape) {
  T x = T::from_values(1, 2, {1, 2}, true);
  ad::Tape<double> tape;
  ad::TapeScope<double> scope(tape);
  T loss = ad::sum(ad::exp(x));
  EXPECT_FALSE(tape.empty());
  tape.backward(loss);
  EXPECT_TRUE(tape.empty());
}

TEST(Autodiff, NoTapeRecordsNothing) {
  T x = T::from_values(1, 2, {1, 2}, true);
  T y = ad::sum(ad::mul(x, x));
  EXPECT_EQ(y.item(), 5.0);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Autodiff, TwoLayerNetworkMatchesFiniteDifferences) {
  T x = param(4, 5, 1);
  T w1 = param(5, 6, 2, 0.5), b1 = param(1, 6, 3, 0.1);
  T w2 = param(6, 3, 4, 0.5), b2 = param(1, 3, 5, 0.1);
  auto f = [&] {
    T h = ad::tanh(ad::linear(x, w1, b1));
    T logits = ad::linear(h, w2, b2);
    std::vector<std::int32_t> labels = {0, 2, 1, 2};
    return ad::scale(ad::sum(ad::gather(ad::log_softmax_rows(logits), labels)), -0.25);
  };
  EXPECT_LT(ad::grad_check<double>(f, {w1, b1, w2, b2}, 1e-5), 1e-4);
}

TEST(Autodiff, EveryPrimitiveMatchesFiniteDifferences) {
  T a = param(3, 4, 10), b = param(3, 4, 11), row = param(1, 4, 12);
  T g = param(1, 4, 13), beta = param(1, 4, 14);
  T table = param(6, 4, 15);
  T sq = param(4, 4, 16);
  const std::vector<std::int32_t> ids = {5, 0, 3};
  const std::vector<std::uint8_t> mask = {1, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0};
  auto f = [&] {
    T pos = ad::exp(ad::scale(a, 0.3));
    std::vector<T> parts;
    parts.push_back(ad::log(pos));
    parts.push_back(ad::gelu(ad::sub(a, b)));
    parts.push_back(ad::add_row(ad::mul(a, b), row));
    parts.push_back(ad::layer_norm(a, g, beta, 1e-5));
    parts.push_back(ad::embedding(table, ids));
    parts.push_back(ad::masked_fill(ad::tanh(b), mask, 0.5));
    parts.push_back(ad::clamp(a, -0.5, 0.5));
    parts.push_back(ad::minimum(a, b));
    T cat = ad::concat_rows(parts);
    T wide = ad::concat_cols(std::vector<T>{ad::slice_cols(cat, 0, 2), ad::slice_cols(cat, 2, 4)});
    T att = ad::softmax_rows(ad::causal_mask(ad::matmul(sq, ad::transpose(sq))));
    T mixed = ad::matmul(att, ad::slice_rows(wide, 0, 4));
    return ad::add(ad::mean(ad::mul(wide, wide)), ad::sum(mixed));
  };
  EXPECT_LT(ad::grad_check<double>(f, {a, b, row, g, beta, table, sq}, 1e-6), 1e-4);
}

TEST(Autodiff, LinearityOfBackward) {
  T x = param(2, 3, 20);
  auto grads = [&](double ca, double cb) {
    x.zero_grad();
    backprop([&] {
      return ad::add(ad::scale(ad::sum(ad::exp(x)), ca), ad::scale(ad::sum(ad::mul(x, x)), cb));
    });
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const auto f = grads(1, 0), g = grads(0, 1), h = grads(2.5, -1.5);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(h[i], 2.5 * f[i] - 1.5 * g[i], 1e-12);
}

TEST(Autodiff, GradCheckClosedForm) {
  T x = T::from_values(1, 1, {3.0}, true);
  EXPECT_LT(ad::grad_check<double>([&] { return ad::mul(x, x); }, {x}, 1e-5), 1e-8);
}

TEST(Autodiff, GradCheckConstantFunctionIsZero) {
  T x = T::from_values(1, 2, {3.0, 1.0}, true);
  EXPECT_EQ(ad::grad_check<double>([&] { return T::scalar(7.0); }, {x}, 1e-5), 0.0);
}

TEST(Autodiff, GradCheckRejectsBadEpsAndNonFinite) {
  T x = T::from_values(1, 1, {-1.0}, true);
  EXPECT_THROW(ad::grad_check<double>([&] { return ad::sum(x); }, {x}, 1e-2), ContractError);
  EXPECT_THROW(ad::grad_check<double>([&] { return ad::sum(ad::log(x)); }, {x}, 1e-5),
               NumericError);
}

TEST(Autodiff, ForwardIsBitwiseDeterministic) {
  T a = param(8, 8, 30), b = param(8, 8, 31);
  auto run = [&] { return ad::softmax_rows(ad::matmul(a, b)); };
  const T y1 = run(), y2 = run();
  EXPECT_TRUE(std::equal(y1.values().begin(), y1.values().end(), y2.values().begin()));
}

TEST(Autodiff, SinglePrecisionMode) {
  using F = ad::Tensor<float>;
  F x = F::from_values(1, 2, {1.0f, 2.0f}, true);
  ad::Tape<float> tape;
  ad::TapeScope<float> scope(tape);
  tape.backward(ad::sum(ad::mul(x, x)));
  EXPECT_FLOAT_EQ(x.grad()[1], 4.0f);
}

// The tiled double kernels must reproduce the plain loops bit for bit, edge
// tiles included.
TEST(Autodiff, TiledKernelsMatchPlainLoops) {
  namespace k = lastmile::kernels;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  auto rnd = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = nd(rng);
    return v;
  };
  auto same = [](const std::vector<double>& a, const std::vector<double>& b) {
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  };
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng() % 40, kk = 1 + rng() % 70, n = 1 + rng() % 90;
    const auto a = rnd(m * kk), b = rnd(kk * n), g = rnd(m * n);
    auto o1 = rnd(m * n), o2 = o1;
    k::matmul_acc<double>(a.data(), b.data(), o1.data(), m, kk, n);
    k::matmul_acc(a.data(), b.data(), o2.data(), m, kk, n);
    ASSERT_TRUE(same(o1, o2)) << m << "x" << kk << "x" << n;
    auto q1 = rnd(m * kk), q2 = q1;
    k::matmul_nt_acc<double>(g.data(), b.data(), q1.data(), m, n, kk);
    k::matmul_nt_acc(g.data(), b.data(), q2.data(), m, n, kk);
    ASSERT_TRUE(same(q1, q2)) << m << "x" << kk << "x" << n;
    auto r1 = rnd(kk * n), r2 = r1;
    k::matmul_tn_acc<double>(a.data(), g.data(), r1.data(), m, kk, n);
    k::matmul_tn_acc(a.data(), g.data(), r2.data(), m, kk, n);
    ASSERT_TRUE(same(r1, r2)) << m << "x" << kk << "x" << n;
  }
}

}  // namespace
