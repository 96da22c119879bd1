// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attmerge/autodiff.hpp"
#include "attmerge/params.hpp"

namespace attmerge {

/// Toy transformer encoder dimensions. Defaults are desk-scale stand-ins for
/// a 24-layer, 1024-wide speech SSL model.
struct EncoderConfig {
  std::size_t num_layers = 6;
  std::size_t hidden_dim = 16;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 32;
  std::uint64_t seed = 0;
  bool positional_encoding = true;

  /// Throws std::invalid_argument when a dimension is zero or the head count
  /// does not divide hidden_dim.
  void validate() const;
};

/// Hidden embeddings of every encoder layer for one utterance, shape T×H×L.
/// Element (t, h, l) lives at flat index (t·H + h)·L + l.
struct EmbeddingStack {
  Tensor data;
  std::string utterance_id;

  std::size_t frames() const { return data.dim(0); }
  std::size_t hidden() const { return data.dim(1); }
  std::size_t layers() const { return data.dim(2); }

  /// T×H slice of layer `l` (0-based).
  Tensor layer(std::size_t l) const;

  /// Builds a stack from per-layer T×H slices.
  static EmbeddingStack from_layers(std::span<const Tensor> layers, std::string id = {});
};

/// Pre-norm block: h = x + MHA(LN1(x)); y = h + W2·gelu(W1·LN2(h)).
struct EncoderLayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Tensor ln2_gain, ln2_bias;
  Tensor w_ff1, b_ff1, w_ff2, b_ff2;

  static constexpr std::size_t kTensorCount = 16;

  template <class Self, class F> static void each(Self &p, F &&f) {
    f("ln1_gain", p.ln1_gain);
    f("ln1_bias", p.ln1_bias);
    f("w_q", p.w_q);
    f("b_q", p.b_q);
    f("w_k", p.w_k);
    f("b_k", p.b_k);
    f("w_v", p.w_v);
    f("b_v", p.b_v);
    f("w_o", p.w_o);
    f("b_o", p.b_o);
    f("ln2_gain", p.ln2_gain);
    f("ln2_bias", p.ln2_bias);
    f("w_ff1", p.w_ff1);
    f("b_ff1", p.b_ff1);
    f("w_ff2", p.w_ff2);
    f("b_ff2", p.b_ff2);
  }
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;
  /// Frozen parameters are bound as constants: they receive no gradient and
  /// the optimizer skips them.
  bool frozen = false;

  /// Weights and biases uniform in (-1/sqrt(H), 1/sqrt(H)) from the config
  /// seed; layer-norm gains 1, biases 0.
  static EncoderParams init(const EncoderConfig &config);

  /// All tensors, layer by layer, named "layer<l>.<tensor>".
  std::vector<ParamRef> refs();
};

void set_frozen(EncoderParams &params, bool frozen);

struct EncoderLayerVars {
  Var ln1_gain, ln1_bias;
  Var w_q, b_q, w_k, b_k, w_v, b_v, w_o, b_o;
  Var ln2_gain, ln2_bias;
  Var w_ff1, b_ff1, w_ff2, b_ff2;

  /// From EncoderLayerParams::kTensorCount variables in `each` order.
  static EncoderLayerVars from(std::span<const Var> vars);
};

/// Per-layer variables from a flat list in EncoderParams::refs() order.
std::vector<EncoderLayerVars> encoder_vars(std::span<const Var> flat);

/// Binds the parameters on `tape`; frozen params are bound as constants.
std::vector<EncoderLayerVars> bind_encoder(Tape &tape, EncoderParams &params);

/// Sinusoidal positional table, T×H.
Tensor sinusoidal_positions(std::size_t frames, std::size_t hidden);

/// One encoder block applied to a T×H sequence.
Var encoder_layer(Var x, const EncoderLayerVars &layer, std::size_t num_heads);

/// Runs the full stack on a T×H input and returns all layer outputs as
/// T×H×L. Positional encodings are added to the input when enabled.
Var encode(Var input, const EncoderConfig &config, std::span<const EncoderLayerVars> layers);

EmbeddingStack encode(const Tensor &input, const EncoderConfig &config,
                      const EncoderParams &params, std::string utterance_id = {});

/// Applies block l independently to layer slice l of a precomputed T×H×K
/// stack (K <= number of blocks). Used when training on stored stacks: the
/// stored slices are the frozen front-end output and each block adapts its
/// own layer.
Var refine_layers(Var stack, std::span<const EncoderLayerVars> layers, std::size_t num_heads);

/// First K layers of the stack.
EmbeddingStack truncate(const EmbeddingStack &stack, std::size_t k);

/// T×H slice `l` of a T×H×L variable.
Var layer_slice(Var stack, std::size_t l);

} // namespace attmerge
