// SPDX-License-Identifier: Apache-2.0
#include "attmerge/linm.hpp"

#include <cmath>
#include <stdexcept>

namespace attmerge {

double inverse_softplus(double w) {
  if (!(w > 0.0)) throw std::domain_error("inverse_softplus: weight must be positive");
  // log(e^w - 1), rearranged to stay accurate for large w.
  return w + std::log(-std::expm1(-w));
}

LinMParams LinMParams::uniform(std::size_t layers) {
  if (layers == 0) throw std::invalid_argument("LinM needs at least one layer");
  return LinMParams{Tensor({layers}, inverse_softplus(1.0 / static_cast<double>(layers)))};
}

Tensor LinMParams::effective_weights() const {
  Tensor w = theta;
  for (auto &v : w.data()) v = softplus(v);
  return w;
}

Var linm_merge(Var stack, Var theta) {
  const Shape &s = stack.shape();
  if (s.size() != 3 || theta.value().size() != s[2]) {
    throw ShapeError("linm_merge: " + std::to_string(theta.value().size()) +
                     " layer weights for stack " + to_string(s));
  }
  Var w = reshape(softplus(theta), {s[2], 1});
  return reshape(matmul(reshape(stack, {s[0] * s[1], s[2]}), w), {s[0], s[1]});
}

Tensor linm_merge(const EmbeddingStack &stack, const LinMParams &params) {
  Tape tape;
  return linm_merge(tape.constant(stack.data), tape.constant(params.theta)).value();
}

Tensor normalized_weights(const LinMParams &params) {
  Tensor w = params.effective_weights();
  double total = 0.0;
  for (double v : w.data()) total += v;
  for (auto &v : w.data()) v /= total;
  return w;
}

} // namespace attmerge
