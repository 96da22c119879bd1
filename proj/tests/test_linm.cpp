// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "attmerge/gradcheck.hpp"
#include "attmerge/linm.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace attmerge;
using testing::random_tensor;

TEST_CASE("uniform initialisation gives 1/L per layer") {
  for (std::size_t L : {1, 2, 6, 24}) {
    const LinMParams p = LinMParams::uniform(L);
    CHECK(p.layers() == L);
    const Tensor w = p.effective_weights();
    for (double v : w.data()) CHECK(v == doctest::Approx(1.0 / L).epsilon(1e-12));
  }
}

TEST_CASE("inverse_softplus round-trips") {
  for (double w : {1e-6, 0.01, 0.5, 1.0, 3.0, 50.0}) CHECK(softplus(inverse_softplus(w)) == doctest::Approx(w).epsilon(1e-12));
}

TEST_CASE("uniform weights average the layers") {
  auto rng = testing::rng_for("linm-mean");
  const EmbeddingStack s{random_tensor({4, 3, 5}, rng), ""};
  const Tensor merged = linm_merge(s, LinMParams::uniform(5));
  CHECK(max_abs_diff(merged, mean_over_axis(s.data, 2)) <= 1e-12);
}

TEST_CASE("single layer with unit weight is the identity") {
  auto rng = testing::rng_for("linm-one");
  const EmbeddingStack s{random_tensor({4, 3, 1}, rng), ""};
  CHECK(max_abs_diff(linm_merge(s, LinMParams::uniform(1)), s.layer(0)) <= 1e-12);
}

TEST_CASE("oracle agreement on random instances") {
  auto rng = testing::rng_for("linm-oracle");
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t T = testing::uniform_int(rng, 1, 8);
    const std::size_t H = testing::uniform_int(rng, 1, 8);
    const std::size_t L = testing::uniform_int(rng, 1, 6);
    const EmbeddingStack s{random_tensor({T, H, L}, rng), ""};
    LinMParams p{random_tensor({L}, rng, 2.0)};
    CHECK(max_abs_diff(linm_merge(s, p), oracle::linm_merge(s.data, p.theta)) <= 1e-12);
  }
}

TEST_CASE("weights stay positive and normalise to one") {
  auto rng = testing::rng_for("linm-norm");
  for (int trial = 0; trial < 50; ++trial) {
    LinMParams p{random_tensor({6}, rng, 10.0)};
    double total = 0.0;
    const Tensor effective = p.effective_weights();
    const Tensor normalized = normalized_weights(p);
    for (double w : effective.data()) CHECK(w > 0.0);
    for (double w : normalized.data()) {
      CHECK(w > 0.0);
      total += w;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("mismatched theta is rejected") {
  const EmbeddingStack s{Tensor({2, 3, 4}), ""};
  CHECK_THROWS_AS(linm_merge(s, LinMParams::uniform(3)), ShapeError);
}

TEST_CASE("gradient check at three seeds") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto rng = testing::rng_for("linm-grad", seed);
    const Tensor stack = random_tensor({7, 8, 6}, rng);
    const Tensor r = random_tensor({7, 8}, rng);
    const Tensor params[] = {random_tensor({6}, rng)};
    const auto report = grad_check(
        [&](Tape &tape, std::span<const Var> v) {
          return sum(mul(linm_merge(tape.constant(stack), v[0]), tape.constant(r)));
        },
        params);
    CHECK(report.max_relative_error < 1e-4);
  }
}
