// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "attmerge/gradcheck.hpp"
#include "attmerge/model.hpp"
#include "attmerge/trainer.hpp"

namespace attmerge {

enum class Block { encoder, attm, linm, recurrent_head, pooling_head };

std::string_view to_string(Block block);

/// Dimensions used for gradient checking; small enough for exhaustive central
/// differences.
struct ToyDims {
  std::size_t frames = 7;
  std::size_t hidden = 8;
  std::size_t layers = 6;
  std::size_t heads = 2;
  std::size_t ffn = 16;
  std::size_t recurrent_hidden = 4;
  std::size_t pooling_dim = 4;
};

/// Blocks that receive gradient updates under `config` and `strategy`.
std::vector<Block> trainable_blocks(const ModelConfig &config, Strategy strategy);

/// Checks one block on a random input with a random linear read-out as the
/// loss. With `corrupt_backward` the AttM squeeze uses a swish whose backward
/// is wrong; other blocks ignore the flag.
GradCheckReport check_block(Block block, const ToyDims &dims, std::uint64_t seed,
                            bool corrupt_backward = false);

inline constexpr double kGradCheckTolerance = 1e-4;

} // namespace attmerge
