// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attmerge/autodiff.hpp"
#include "attmerge/params.hpp"

namespace attmerge {

/// Logit index of each class. detection_score is logit(bonafide) - logit(spoof).
inline constexpr std::size_t kBonafideLogit = 0;
inline constexpr std::size_t kSpoofLogit = 1;

class EmptySequenceError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class Readout { final_state, mean_state };

/// Single-layer LSTM over frames followed by an r→2 projection.
/// Gate columns are ordered [input | forget | cell | output], r each.
struct RecurrentHeadParams {
  Tensor w_x;   // H×4r
  Tensor w_h;   // r×4r
  Tensor b;     // 4r
  Tensor w_out; // r×2
  Tensor b_out; // 2

  static RecurrentHeadParams init(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);
  static RecurrentHeadParams zeros(std::size_t input_dim, std::size_t hidden);

  std::size_t input_dim() const { return w_x.dim(0); }
  std::size_t hidden() const { return w_h.dim(0); }

  template <class Self, class F> static void each(Self &p, F &&f) {
    f("w_x", p.w_x);
    f("w_h", p.w_h);
    f("b", p.b);
    f("w_out", p.w_out);
    f("b_out", p.b_out);
  }
  std::vector<ParamRef> refs();
};

struct RecurrentHeadVars {
  Var w_x, w_h, b, w_out, b_out;
  static RecurrentHeadVars from(std::span<const Var> vars);
};

/// Attentive statistics pooling classifier, a reduced ECAPA-style head:
/// z_t = swish(x_t·W_f + b_f), α = softmax_t(z_t·v + c), then
/// [Σ α_t z_t, sqrt(Σ α_t (z_t - μ)²)] · W_out + b_out.
struct PoolingHeadParams {
  Tensor w_frame; // H×p
  Tensor b_frame; // p
  Tensor w_att;   // p×1
  Tensor b_att;   // 1
  Tensor w_out;   // 2p×2
  Tensor b_out;   // 2

  static PoolingHeadParams init(std::size_t input_dim, std::size_t pooled, std::uint64_t seed);

  std::size_t input_dim() const { return w_frame.dim(0); }

  template <class Self, class F> static void each(Self &p, F &&f) {
    f("w_frame", p.w_frame);
    f("b_frame", p.b_frame);
    f("w_att", p.w_att);
    f("b_att", p.b_att);
    f("w_out", p.w_out);
    f("b_out", p.b_out);
  }
  std::vector<ParamRef> refs();
};

struct PoolingHeadVars {
  Var w_frame, b_frame, w_att, b_att, w_out, b_out;
  static PoolingHeadVars from(std::span<const Var> vars);
};

/// x is T×H with T >= 1; returns 1×2 logits.
Var recurrent_head(Var x, const RecurrentHeadVars &params, Readout readout = Readout::final_state);
Var pooling_head(Var x, const PoolingHeadVars &params);

Tensor recurrent_head(const Tensor &x, const RecurrentHeadParams &params,
                      Readout readout = Readout::final_state);
Tensor pooling_head(const Tensor &x, const PoolingHeadParams &params);

/// Pooled statistics [μ | σ] (1×2p) before the output projection.
Var pooling_statistics(Var x, const PoolingHeadVars &params);

double detection_score(const Tensor &logits);

} // namespace attmerge
