// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "attmerge/tensor.hpp"
#include "support.hpp"

using namespace attmerge;
using testing::random_tensor;

namespace {

Tensor loop_matmul(const Tensor &a, const Tensor &b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

} // namespace

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 1.5);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), ShapeError);
}

TEST_CASE("matmul identity and zero cases") {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  CHECK(matmul(id, b) == b);
  const Tensor z({2, 2});
  CHECK(matmul(z, Tensor::matrix({{1, 2, 3}, {4, 5, 6}})) == Tensor({2, 3}));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected ShapeError");
  } catch (const ShapeError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul variants match the triple loop") {
  auto rng = testing::rng_for("matmul");
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4, 2}, rng);
    CHECK(max_abs_diff(matmul(a, b), loop_matmul(a, b)) <= 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), loop_matmul(a, b)) <= 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), loop_matmul(a, b)) <= 1e-12);
  }
}

TEST_CASE("matmul is associative on random triples") {
  auto rng = testing::rng_for("assoc");
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({3, 5}, rng);
    const Tensor b = random_tensor({5, 4}, rng);
    const Tensor c = random_tensor({4, 2}, rng);
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      CHECK(std::abs(left[i] - right[i]) <= 1e-9 * std::max(1.0, std::abs(left[i])));
    }
  }
}

TEST_CASE("swish values") {
  CHECK(swish(0.0) == 0.0);
  CHECK(swish(2.0) == doctest::Approx(1.7615941559557649).epsilon(1e-15));
  const double far_left = swish(-1000.0);
  CHECK(std::isfinite(far_left));
  CHECK(std::abs(far_left) < 1e-300);
}

TEST_CASE("sigmoid is stable and symmetric") {
  CHECK(sigmoid(0.0) == 0.5);
  for (double x : {-50.0, -700.0}) {
    const double y = sigmoid(x);
    CHECK(y > 0.0);
    CHECK(y <= 1e-12);
  }
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK_FALSE(std::isnan(sigmoid(-1000.0)));
  for (double x : {0.1, 1.0, 3.7, 20.0}) CHECK(sigmoid(x) + sigmoid(-x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("softplus does not overflow") {
  CHECK(softplus(1000.0) == 1000.0);
  CHECK(softplus(-1000.0) >= 0.0);
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("mean_over_axis") {
  CHECK(mean_over_axis(Tensor::matrix({{1, 3}, {5, 7}}), 0) == Tensor::vector({3, 5}));
  const Tensor single({1, 3}, std::vector<double>{1, 2, 3});
  CHECK(mean_over_axis(single, 0) == Tensor::vector({1, 2, 3}));

  auto rng = testing::rng_for("mean");
  const Tensor x = random_tensor({3, 4, 5}, rng);
  const Tensor m = mean_over_axis(x, 1);
  REQUIRE(m.shape() == Shape{3, 5});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < 4; ++j) s += x.at(i, j, k);
      CHECK(std::abs(m.at(i, k) - s / 4.0) <= 1e-12);
    }
  CHECK_THROWS_AS(mean_over_axis(x, 3), ShapeError);
}
