// Copyright 2026 The fusedrive Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fusedrive/ops.hpp"
#include "fusedrive/tensor.hpp"
#include "support.hpp"

using namespace fusedrive;
using testing::Random;

namespace {

// Plain triple loop, independent of the library's blocked kernel.
std::vector<double> NaiveMatmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(m * q, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < q; ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < p; ++r) acc += a.at(i, r) * b.at(r, j);
      out[i * q + j] = acc;
    }
  return out;
}

}  // namespace

TEST_CASE("tensor construction checks element count") {
  CHECK(testing::KindOf([] { Tensor::FromData({2, 3}, std::vector<double>(5)); }) ==
        ErrorKind::kShape);
  Tensor t = Tensor::Full({2, 2}, 3.0);
  CHECK(t.size() == 4);
  CHECK(t.at(1, 1) == 3.0);
  CHECK_FALSE(t.has_grad());
}

TEST_CASE("clone shares no storage and drops graph state") {
  Tensor t = Tensor::Full({3}, 1.0, true);
  t.grad_buffer()[0] = 5.0;
  Tensor c = t.clone();
  CHECK_FALSE(c.same_storage(t));
  CHECK_FALSE(c.has_grad());
  c.mutable_data()[0] = 9.0;
  CHECK(t[0] == 1.0);
}

TEST_CASE("matmul: identity, zeros and a naive oracle") {
  Rng rng(1);
  Tensor m = Random({2, 3}, rng);
  Tensor eye = Tensor::FromData({2, 2}, {1, 0, 0, 1});
  CHECK(testing::BitEqual(matmul(eye, m), m));
  Tensor z = matmul(Tensor::Zeros({3, 4}), Random({4, 2}, rng));
  for (double v : z.data()) CHECK(v == 0.0);

  Tensor a = Random({5, 7}, rng), b = Random({7, 3}, rng);
  const std::vector<double> oracle = NaiveMatmul(a, b);
  Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(c[i] == doctest::Approx(oracle[i]).epsilon(1e-12));
  CHECK(testing::KindOf([&] { matmul(a, a); }) == ErrorKind::kShape);
}

TEST_CASE("matmul gradient matches central differences") {
  Rng rng(2);
  Tensor a = Random({5, 7}, rng, 1.0, true);
  Tensor b = Random({7, 3}, rng, 1.0, true);
  Tensor w = Random({15, 1}, rng);
  const double err = testing::FiniteDifferenceError(
      [&](Tape* t) { return testing::Project(matmul(a, b, t), w, t); }, {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("rowwise softmax values") {
  Tensor eq = rowwise_softmax(Tensor::Full({1, 4}, 0.7));
  for (double v : eq.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  Tensor two = rowwise_softmax(Tensor::FromData({1, 2}, {1.0, 2.0}));
  const double e = std::exp(1.0);
  CHECK(std::abs(two[0] - 1.0 / (1.0 + e)) < 1e-15);
  CHECK(std::abs(two[1] - e / (1.0 + e)) < 1e-15);

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = Random({4, 6}, rng, 3.0);
    Tensor shifted = Tensor::FromData(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
    for (double& v : shifted.mutable_data()) v += 123.25;
    Tensor p = rowwise_softmax(x);
    CHECK(testing::MaxAbsDiff(p, rowwise_softmax(shifted)) < 1e-12);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(p.at(r, c) > 0.0);
        CHECK(p.at(r, c) < 1.0);
        total += p.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
  Tensor big = rowwise_softmax(Tensor::FromData({1, 3}, {1000.0, 999.0, -1000.0}));
  for (double v : big.data()) CHECK(std::isfinite(v));
}

TEST_CASE("elementwise and reduction ops") {
  Tensor r = relu(Tensor::FromData({2}, {-1.0, 2.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 2.0);
  Tensor c = Tensor::Full({3, 5}, 2.5);
  const Tensor col_means = mean_over_axis(c, 0);
  const Tensor row_means = mean_over_axis(c, 1);
  for (double v : col_means.data()) CHECK(v == 2.5);
  for (double v : row_means.data()) CHECK(v == 2.5);
  CHECK(mean_over_axis(Tensor::Full({4}, -1.5), 0).item() == -1.5);
  CHECK(sum(c).item() == doctest::Approx(37.5));
  CHECK(scale(c, -2.0)[7] == -5.0);

  Tensor a = Tensor::FromData({2, 2}, {1, 2, 3, 4});
  Tensor row = Tensor::FromData({2}, {10, 20});
  Tensor s = add(a, row);
  CHECK(s.at(1, 0) == 13.0);
  CHECK(s.at(1, 1) == 24.0);
  CHECK(testing::KindOf([&] { add(a, Tensor::Zeros({3})); }) == ErrorKind::kShape);
  Tensor tr = transpose(Tensor::FromData({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(tr.shape() == Shape{3, 2});
  CHECK(tr.at(2, 1) == 6.0);
}

TEST_CASE("elementwise and reduction gradients match central differences") {
  Rng rng(4);
  for (int point = 0; point < 10; ++point) {
    Tensor x = Random({3, 4}, rng, 1.0, true);
    Tensor y = Random({3, 4}, rng, 1.0, true);
    Tensor row = Random({4}, rng, 1.0, true);
    Tensor w12 = Random({12, 1}, rng);
    Tensor w4 = Random({4, 1}, rng);
    Tensor w3 = Random({3, 1}, rng);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(relu(x, t), w12, t); }, {x}) < 1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(add(x, y, t), w12, t); }, {x, y}) < 1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(add(x, row, t), w12, t); }, {x, row}) <
          1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(scale(x, -0.3, t), w12, t); }, {x}) < 1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(mean_over_axis(x, 0, t), w4, t); }, {x}) <
          1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(mean_over_axis(x, 1, t), w3, t); }, {x}) <
          1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(transpose(x, t), w12, t); }, {x}) < 1e-6);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(rowwise_softmax(x, t), w12, t); }, {x}) <
          1e-6);
  }
}

TEST_CASE("affine gradient matches central differences") {
  Rng rng(5);
  Tensor x = Random({4, 3}, rng, 1.0, true);
  Tensor w = Random({3, 5}, rng, 1.0, true);
  Tensor b = Random({5}, rng, 1.0, true);
  Tensor proj = Random({20, 1}, rng);
  CHECK(testing::FiniteDifferenceError(
            [&](Tape* t) { return testing::Project(affine(x, w, b, t), proj, t); }, {x, w, b}) <
        1e-6);
}

TEST_CASE("layer norm") {
  Tensor gain = Tensor::Full({4}, 1.0);
  Tensor bias = Tensor::Zeros({4});
  Tensor constant = layer_norm(Tensor::Full({1, 4}, 7.0), gain, bias);
  for (double v : constant.data()) CHECK(v == 0.0);

  Rng rng(6);
  Tensor x = Random({5, 4}, rng, 2.0);
  Tensor y = layer_norm(x, gain, bias);
  for (std::size_t r = 0; r < 5; ++r) {
    double mean = 0.0, var = 0.0, xm = 0.0, xv = 0.0;
    for (std::size_t c = 0; c < 4; ++c) xm += x.at(r, c) / 4.0;
    for (std::size_t c = 0; c < 4; ++c) xv += (x.at(r, c) - xm) * (x.at(r, c) - xm) / 4.0;
    for (std::size_t c = 0; c < 4; ++c) {
      const double expected = (x.at(r, c) - xm) / std::sqrt(xv + kLayerNormEps);
      CHECK(std::abs(y.at(r, c) - expected) < 1e-12);
      mean += y.at(r, c) / 4.0;
    }
    for (std::size_t c = 0; c < 4; ++c) var += y.at(r, c) * y.at(r, c) / 4.0;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }

  for (int point = 0; point < 10; ++point) {
    Tensor xg = Random({3, 6}, rng, 1.0, true);
    Tensor g = Random({6}, rng, 1.0, true);
    Tensor b = Random({6}, rng, 1.0, true);
    Tensor w = Random({18, 1}, rng);
    CHECK(testing::FiniteDifferenceError(
              [&](Tape* t) { return testing::Project(layer_norm(xg, g, b, kLayerNormEps, t), w, t); },
              {xg, g, b}) < 1e-5);
  }
}

TEST_CASE("dropout") {
  Rng rng(7);
  Tensor x = Random({100, 1000}, rng);
  Rng a(1);
  CHECK(testing::BitEqual(dropout(x, 0.0, true, a), x));
  CHECK(testing::BitEqual(dropout(x, 0.7, false, a), x));

  Rng b(2);
  Tensor y = dropout(x, 0.7, true, b);
  std::size_t zeros = 0;
  bool scaled = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else if (std::abs(y[i] - x[i] / 0.3) > 1e-12 * std::abs(x[i] / 0.3)) {
      scaled = false;
    }
  }
  CHECK(scaled);
  const double fraction = static_cast<double>(zeros) / static_cast<double>(x.size());
  CHECK(fraction > 0.69);
  CHECK(fraction < 0.71);

  CHECK(testing::KindOf([&] { dropout(x, 1.0, true, b); }) == ErrorKind::kConfig);
  CHECK(testing::KindOf([&] { dropout(x, -0.1, true, b); }) == ErrorKind::kConfig);

  // Gradient flows to survivors only, with the same scale.
  Tensor v = Random({50}, rng, 1.0, true);
  Tape tape;
  Rng c(3);
  Tensor d = dropout(v, 0.5, true, c, &tape);
  Tensor loss = sum(d, &tape);
  tape.backward(loss);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v.grad()[i] == (d[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("backward semantics") {
  Tensor x = Tensor::FromData({3}, {1, 2, 3}, true);
  {
    Tape tape;
    Tensor l = sum(x, &tape);
    tape.backward(l);
    for (double g : x.grad()) CHECK(g == 1.0);
    CHECK(tape.empty());
  }
  x.zero_grad();
  {
    Tape tape;
    Tensor l = sum(scale(x, 0.0, &tape), &tape);
    tape.backward(l);
    for (double g : x.grad()) CHECK(g == 0.0);
  }
  x.zero_grad();
  {
    // Fan-out accumulates: d/dx sum(x + x) = 2.
    Tape tape;
    Tensor l = sum(add(x, x, &tape), &tape);
    tape.backward(l);
    for (double g : x.grad()) CHECK(g == 2.0);
  }
  {
    Tape tape;
    Tensor nonscalar = scale(x, 2.0, &tape);
    CHECK(testing::KindOf([&] { tape.backward(nonscalar); }) == ErrorKind::kUsage);
  }
  {
    Tape tape;
    Tensor c = Tensor::FromData({3}, {1, 2, 3});
    sum(c, &tape);
    CHECK(tape.empty());
  }
}

TEST_CASE("ops never mutate inputs and are deterministic") {
  Rng rng(8);
  Tensor x = Random({4, 4}, rng, 1.0, true);
  Tensor snapshot = x.clone();
  Tensor g = Tensor::Full({4}, 1.0), b = Tensor::Zeros({4});
  Tape tape;
  Tensor y1 = layer_norm(rowwise_softmax(relu(x, &tape), &tape), g, b, kLayerNormEps, &tape);
  Tensor y2 = layer_norm(rowwise_softmax(relu(x)), g, b);
  CHECK(testing::BitEqual(x, snapshot));
  CHECK(testing::BitEqual(y1, y2));
}
