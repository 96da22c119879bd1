// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attmerge/attm.hpp"
#include "attmerge/encoder.hpp"
#include "attmerge/heads.hpp"
#include "attmerge/linm.hpp"

namespace attmerge {

enum class MergeMode { attm, linm, none };
enum class HeadKind { recurrent, pooling };

std::string_view to_string(MergeMode mode);
std::string_view to_string(HeadKind head);
std::string_view to_string(Readout readout);
std::optional<MergeMode> parse_merge_mode(std::string_view s);
std::optional<HeadKind> parse_head_kind(std::string_view s);
std::optional<Readout> parse_readout(std::string_view s);

/// Full countermeasure: stored stack → first K layers → per-layer encoder
/// blocks → merge → classifier.
struct ModelConfig {
  EncoderConfig encoder;
  MergeMode merge = MergeMode::attm;
  HeadKind head = HeadKind::recurrent;
  /// Number of leading layers used (K); 0 means all of them.
  std::size_t layer_cap = 0;
  std::size_t recurrent_hidden = 16;
  Readout readout = Readout::final_state;
  std::size_t pooling_dim = 16;

  std::size_t active_layers() const { return layer_cap == 0 ? encoder.num_layers : layer_cap; }
  void validate() const;
};

enum class ParamGroup { encoder, merge, head };

struct ModelParamRef {
  ParamRef ref; // name is prefixed: "encoder.", "attm.", "linm.", "head."
  ParamGroup group;
};

struct Model {
  ModelConfig config;
  EncoderParams encoder;
  AttMParams attm;                 // merge == attm
  LinMParams linm;                 // merge == linm
  RecurrentHeadParams recurrent;   // head == recurrent
  PoolingHeadParams pooling;       // head == pooling

  /// AttM/LinM are sized for K = active_layers().
  static Model init(const ModelConfig &config, std::uint64_t seed);

  /// Every parameter tensor the model owns, in a fixed order. Encoder blocks
  /// beyond K are included (they are part of the checkpoint) but never used.
  std::vector<ModelParamRef> params();
};

struct ForwardPass {
  Var logits;                  // 1×2
  std::optional<Var> attention; // 1×K, AttM only
  /// Leaves bound for params(), same order; encoder leaves are constants
  /// when the encoder is frozen.
  std::vector<Var> leaves;
};

/// Records one utterance on `tape`. Trainable groups are bound as parameters
/// when `with_grad` is set; a frozen encoder is always bound as constants.
ForwardPass forward(Tape &tape, Model &model, const Tensor &stack, bool with_grad);

Tensor logits(const Model &model, const EmbeddingStack &stack);
double score(const Model &model, const EmbeddingStack &stack);
/// AttM gates for one utterance; throws std::logic_error for other modes.
Tensor attention_weights(const Model &model, const EmbeddingStack &stack);

} // namespace attmerge
