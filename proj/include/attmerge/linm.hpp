// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "attmerge/autodiff.hpp"
#include "attmerge/encoder.hpp"
#include "attmerge/params.hpp"

namespace attmerge {

/// Linear merging: one positive weight per layer, X_LinM = Σ_l w_l · X_l.
/// Weights are stored unconstrained as theta and mapped through softplus.
struct LinMParams {
  Tensor theta; // L

  /// theta chosen so that every effective weight starts at 1/L.
  static LinMParams uniform(std::size_t layers);

  std::size_t layers() const { return theta.size(); }
  /// softplus(theta), every entry > 0.
  Tensor effective_weights() const;

  std::vector<ParamRef> refs() { return {ParamRef{"theta", &theta}}; }
};

/// Inverse of softplus, for building theta from desired positive weights.
double inverse_softplus(double w);

Var linm_merge(Var stack, Var theta);
Tensor linm_merge(const EmbeddingStack &stack, const LinMParams &params);

/// w_l / Σ w: positive entries summing to one.
Tensor normalized_weights(const LinMParams &params);

} // namespace attmerge
