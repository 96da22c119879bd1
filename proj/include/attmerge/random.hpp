// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "attmerge/tensor.hpp"

namespace attmerge {

using Rng = std::mt19937_64;

/// Seed for the named sub-stream `name` of `seed`. Streams with different
/// names are decorrelated, so e.g. data generation and weight init can be
/// varied independently from one root seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, name, index));
}

Tensor uniform_tensor(Shape shape, double bound, Rng &rng);
Tensor normal_tensor(Shape shape, double stddev, Rng &rng);

} // namespace attmerge
