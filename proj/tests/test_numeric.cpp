// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mamkit/gradcheck.hpp"
#include "mamkit/ops.hpp"
#include "mamkit/optim.hpp"
#include "mamkit/rng.hpp"
#include "test_util.hpp"

using namespace mamkit;
using mamkit::testing::random_tensor;

TEST_CASE("tensor shape and value count agree") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.values().size() == 24);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
}

TEST_CASE("gradient has the shape of its tensor") {
  RngStream rng(1, "t");
  Tensor a = random_tensor({3, 4}, rng, true);
  sum_all(mul(a, a)).backward();
  REQUIRE(a.has_grad());
  CHECK(a.grad().size() == a.numel());
}

TEST_CASE("matmul identity and hand arithmetic") {
  RngStream rng(2, "m");
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor m = random_tensor({3, 3}, rng);
  const auto r = matmul(eye, m);
  for (std::size_t i = 0; i < 9; ++i) CHECK(r.at(i) == m.at(i));

  const auto p = matmul(Tensor({2, 2}, {1, 2, 3, 4}), Tensor({2, 1}, {1, 1}));
  CHECK(p.shape() == Shape{2, 1});
  CHECK(p.at(0) == 3.0);
  CHECK(p.at(1) == 7.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor({2, 3}), Tensor({4, 5}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
    CHECK(msg.find("5") != std::string::npos);
  }
}

TEST_CASE("matmul gradient against finite differences") {
  RngStream rng(3, "mg");
  Tensor a = random_tensor({5, 4}, rng, true);
  Tensor b = random_tensor({4, 3}, rng, true);
  Tensor w = random_tensor({5, 3}, rng);
  const auto r = grad_check_leaves([&] { return sum_all(mul(matmul(a, b), w)); }, {a, b});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("softmax analytic values") {
  const auto s = softmax(Tensor({2}, {0.0, 0.0}), 0);
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  const auto t = softmax(Tensor({2}, {std::log(1.0), std::log(3.0)}), 0);
  CHECK(t.at(0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(t.at(1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax slices sum to one and gradient matches") {
  RngStream rng(4, "s");
  Tensor x = random_tensor({3, 7, 5}, rng);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const auto s = softmax(scale(x, 10.0), axis);
    const auto total = sum(s, axis);
    for (double v : total.values()) CHECK(std::abs(v - 1.0) < 1e-12);
    for (double v : s.values()) CHECK(v > 0.0);
  }
  Tensor v = random_tensor({6}, rng);
  Tensor w = random_tensor({6}, rng);
  const auto r = grad_check([&](const Tensor& p) { return sum_all(mul(softmax(p, 0), w)); }, v);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("cross entropy saturated, uniform, and direct oracle") {
  const int zero = 0;
  CHECK(cross_entropy_from_logits(Tensor({4}, {20, 0, 0, 0}), {&zero, 1}).item() < 1e-8);
  for (int c = 0; c < 4; ++c) {
    CHECK(cross_entropy_from_logits(Tensor({4}, {0.3, 0.3, 0.3, 0.3}), {&c, 1}).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
  }

  Tensor logits = Tensor::parameter({4}, {1, 2, 3, 4});
  const int two = 2;
  const auto loss = cross_entropy_from_logits(logits, {&two, 1});
  loss.backward();
  double z = 0.0;
  for (int k = 1; k <= 4; ++k) z += std::exp(static_cast<double>(k));
  CHECK(loss.item() == doctest::Approx(-std::log(std::exp(3.0) / z)).epsilon(1e-14));
  for (int k = 0; k < 4; ++k) {
    const double p = std::exp(static_cast<double>(k + 1)) / z;
    CHECK(logits.grad()[k] == doctest::Approx(p - (k == 2 ? 1.0 : 0.0)).epsilon(1e-13));
  }

  const int bad = 4;
  CHECK_THROWS_AS(cross_entropy_from_logits(Tensor({4}), {&bad, 1}), LabelError);
}

TEST_CASE("gumbel noise determinism, mean, and analytic point") {
  RngStream a(9, "g"), b(9, "g");
  const auto x = gumbel_noise({4, 5}, a);
  const auto y = gumbel_noise({4, 5}, b);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.at(i) == y.at(i));

  RngStream rng(10, "g/mean");
  const auto big = gumbel_noise({1000000}, rng);
  double mean = 0.0;
  for (double v : big.values()) mean += v;
  mean /= 1e6;
  CHECK(std::abs(mean - std::numbers::egamma) < 0.01);

  CHECK(std::abs(gumbel_from_uniform(std::exp(-1.0))) < 1e-15);
  CHECK(std::isfinite(gumbel_from_uniform(0.0)));
  CHECK(std::isfinite(gumbel_from_uniform(1.0)));
}

TEST_CASE("grad_check on exact cases") {
  RngStream rng(5, "gc");
  Tensor p = random_tensor({7}, rng);
  CHECK(grad_check([](const Tensor& x) { return sum_all(mul(x, x)); }, p).max_relative_error < 1e-8);
  CHECK(grad_check([](const Tensor& x) { return select(x, 0, 0); }, p, 1e-5).max_relative_error < 1e-10);
}

TEST_CASE("grad_check reports non-finite evaluations") {
  Tensor p({2}, {1.0, -1.0});
  CHECK_THROWS_AS(grad_check([](const Tensor& x) { return sum_all(div(Tensor({2}, 1.0), add_scalar(x, 1.0))); }, p),
                  NumericError);
}

TEST_CASE("rng streams are reproducible and label-separated") {
  RngStream a(42, "x"), b(42, "x"), c(42, "y");
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto u = a.next_u64();
    CHECK(u == b.next_u64());
    differs |= u != c.next_u64();
  }
  CHECK(differs);
  RngStream d(42, "x");
  for (int i = 0; i < 1000; ++i) {
    const int v = d.uniform_int(3, 7);
    CHECK(v >= 3);
    CHECK(v <= 7);
  }
}

TEST_CASE("gradients accumulate until zeroed") {
  Tensor a = Tensor::parameter({2}, {1.0, 2.0});
  sum_all(a).backward();
  sum_all(a).backward();
  CHECK(a.grad()[0] == 2.0);
  a.zero_grad();
  sum_all(scale(a, 3.0)).backward();
  CHECK(a.grad()[1] == 3.0);
}

TEST_CASE("adam with zero learning rate leaves parameters unchanged") {
  RngStream rng(6, "adam");
  Tensor a = random_tensor({10}, rng, true);
  const std::vector<double> before(a.values().begin(), a.values().end());
  Adam opt;
  opt.add_group({a}, 0.0);
  for (int i = 0; i < 3; ++i) {
    sum_all(mul(a, a)).backward();
    opt.step();
    opt.zero_grad();
  }
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(a.at(i) == before[i]);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  Tensor a = Tensor::parameter({3}, {1.0, -2.0, 0.5});
  Adam opt;
  opt.add_group({a}, 0.1);
  sum_all(mul(a, a)).backward();
  opt.step();
  CHECK(a.at(0) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(a.at(1) == doctest::Approx(-1.9).epsilon(1e-9));
  CHECK(a.at(2) == doctest::Approx(0.4).epsilon(1e-9));
}
