// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attmerge/autodiff.hpp"
#include "attmerge/encoder.hpp"
#include "attmerge/params.hpp"

namespace attmerge {

/// Attentive merging of a T×H×L embedding stack into a T×H sequence.
///
/// The stack is squeezed to one scalar per layer (time average, projection
/// over H, swish), excited into per-layer gates in (0, 1) through an L→s→L
/// bottleneck, used to rescale the stack, and finally merged frame by frame
/// through three bias-free linear maps (H·L)→i→i→H.
///
/// Frame flattening for the merge is layer-major: element (h, l) of a frame
/// goes to position h + H·l of the concatenated vector. Serialized W_L1
/// weights rely on this order.

/// floor(L/2), at least 1.
std::size_t excitation_dim(std::size_t layers);
/// floor(H·L/4), at least 1.
std::size_t bottleneck_dim(std::size_t hidden, std::size_t layers);

struct AttMParams {
  Tensor w_sq;  // H×1
  Tensor w_ex1; // L×s
  Tensor w_ex2; // s×L
  Tensor w_l1;  // (H·L)×i
  Tensor w_l2;  // i×i
  Tensor w_l3;  // i×H

  /// Uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)) per matrix.
  static AttMParams init(std::size_t hidden, std::size_t layers, std::uint64_t seed);

  std::size_t hidden() const { return w_sq.dim(0); }
  std::size_t layers() const { return w_ex1.dim(0); }

  /// Throws ShapeError unless every tensor has the shape implied by (H, L).
  void validate() const;

  template <class Self, class F> static void each(Self &p, F &&f) {
    f("w_sq", p.w_sq);
    f("w_ex1", p.w_ex1);
    f("w_ex2", p.w_ex2);
    f("w_l1", p.w_l1);
    f("w_l2", p.w_l2);
    f("w_l3", p.w_l3);
  }

  std::vector<ParamRef> refs();
};

struct AttMVars {
  Var w_sq, w_ex1, w_ex2, w_l1, w_l2, w_l3;

  static AttMVars from(std::span<const Var> vars);
};

AttMVars bind_attm(Tape &tape, AttMParams &params, bool trainable = true);

/// Per-layer attention gates, each strictly inside (0, 1).
struct AttentionWeights {
  Tensor values; // 1×L
};

// Differentiable forms. `stack` is a T×H×L variable.

/// 1×L squeezed descriptor: swish(mean_t(X) projected by w_sq).
Var squeeze(Var stack, Var w_sq);
/// 1×L gates: sigmoid(swish(x_sq · W_ex1) · W_ex2).
Var excite(Var x_sq, Var w_ex1, Var w_ex2);
/// X ∘ w along the layer axis.
Var reweight(Var stack, Var weights);
/// T×H merged sequence: flatten(X_att) · W_L1 · W_L2 · W_L3.
Var merge_projection(Var reweighted, Var w_l1, Var w_l2, Var w_l3);

struct AttMOutput {
  Var merged;  // T×H
  Var weights; // 1×L
};

AttMOutput attm_forward(Var stack, const AttMVars &params);

// Value-level forms.

Tensor squeeze(const EmbeddingStack &stack, const Tensor &w_sq);
AttentionWeights excite(const Tensor &x_sq, const Tensor &w_ex1, const Tensor &w_ex2);
Tensor reweight(const EmbeddingStack &stack, const AttentionWeights &weights);
Tensor merge_projection(const Tensor &reweighted, const Tensor &w_l1, const Tensor &w_l2,
                        const Tensor &w_l3);

struct AttMResult {
  Tensor merged;
  AttentionWeights weights;
};

AttMResult attm_forward(const EmbeddingStack &stack, const AttMParams &params);

} // namespace attmerge
