// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "attmerge/autodiff.hpp"

namespace attmerge {

/// Non-owning reference to a named trainable tensor.
struct ParamRef {
  std::string name;
  Tensor *tensor;
};

/// Leaf variables for `refs`, in order.
inline std::vector<Var> bind_leaves(Tape &tape, std::span<const ParamRef> refs, bool trainable) {
  std::vector<Var> vars;
  vars.reserve(refs.size());
  for (const auto &r : refs) vars.push_back(tape.leaf(*r.tensor, trainable));
  return vars;
}

/// Copies of the referenced tensors, in order.
inline std::vector<Tensor> snapshot(std::span<const ParamRef> refs) {
  std::vector<Tensor> out;
  out.reserve(refs.size());
  for (const auto &r : refs) out.push_back(*r.tensor);
  return out;
}

inline void prefix_names(std::vector<ParamRef> &refs, const std::string &prefix) {
  for (auto &r : refs) r.name = prefix + r.name;
}

} // namespace attmerge
