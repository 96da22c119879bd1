// SPDX-License-Identifier: Apache-2.0
#include "attmerge/attm.hpp"

#include <algorithm>
#include <cmath>

#include "attmerge/random.hpp"

namespace attmerge {

std::size_t excitation_dim(std::size_t layers) { return std::max<std::size_t>(1, layers / 2); }

std::size_t bottleneck_dim(std::size_t hidden, std::size_t layers) {
  return std::max<std::size_t>(1, hidden * layers / 4);
}

AttMParams AttMParams::init(std::size_t hidden, std::size_t layers, std::uint64_t seed) {
  const std::size_t s = excitation_dim(layers);
  const std::size_t i = bottleneck_dim(hidden, layers);
  Rng rng = make_rng(seed, "attm");
  auto init = [&](std::size_t fan_in, std::size_t fan_out) {
    return uniform_tensor({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
  };
  AttMParams p;
  p.w_sq = init(hidden, 1);
  p.w_ex1 = init(layers, s);
  p.w_ex2 = init(s, layers);
  p.w_l1 = init(hidden * layers, i);
  p.w_l2 = init(i, i);
  p.w_l3 = init(i, hidden);
  return p;
}

void AttMParams::validate() const {
  const std::size_t h = w_sq.rank() == 2 ? w_sq.dim(0) : 0;
  const std::size_t l = w_ex1.rank() == 2 ? w_ex1.dim(0) : 0;
  const std::size_t s = excitation_dim(l);
  const std::size_t i = bottleneck_dim(h, l);
  const std::pair<const Tensor *, Shape> expected[] = {
      {&w_sq, {h, 1}}, {&w_ex1, {l, s}}, {&w_ex2, {s, l}},
      {&w_l1, {h * l, i}}, {&w_l2, {i, i}}, {&w_l3, {i, h}},
  };
  for (const auto &[t, shape] : expected) {
    if (h == 0 || l == 0 || t->shape() != shape) {
      throw ShapeError("AttM parameter has shape " + to_string(t->shape()) + ", expected " +
                       to_string(shape) + " for H=" + std::to_string(h) + ", L=" + std::to_string(l));
    }
  }
}

std::vector<ParamRef> AttMParams::refs() {
  std::vector<ParamRef> out;
  each(*this, [&](const char *name, Tensor &t) { out.push_back(ParamRef{name, &t}); });
  return out;
}

AttMVars AttMVars::from(std::span<const Var> v) {
  if (v.size() != 6) throw std::invalid_argument("AttM expects 6 parameter tensors");
  return AttMVars{v[0], v[1], v[2], v[3], v[4], v[5]};
}

AttMVars bind_attm(Tape &tape, AttMParams &params, bool trainable) {
  params.validate();
  const auto refs = params.refs();
  return AttMVars::from(bind_leaves(tape, refs, trainable));
}

namespace {

void require_stack(const Var &stack, const char *op) {
  if (stack.shape().size() != 3) {
    throw ShapeError(std::string(op) + ": expected a T×H×L stack, got " + to_string(stack.shape()));
  }
}

} // namespace

Var squeeze(Var stack, Var w_sq) {
  require_stack(stack, "squeeze");
  const std::size_t hidden = stack.shape()[1];
  if (w_sq.shape() != Shape{hidden, 1}) {
    throw ShapeError("squeeze: w_sq " + to_string(w_sq.shape()) + " does not match stack " +
                     to_string(stack.shape()));
  }
  Var time_mean = mean_over_axis(stack, 0); // H×L
  return swish(matmul(transpose(w_sq), time_mean));
}

Var excite(Var x_sq, Var w_ex1, Var w_ex2) {
  const std::size_t layers = x_sq.value().size();
  if (x_sq.shape() != Shape{1, layers}) x_sq = reshape(x_sq, {1, layers});
  if (w_ex1.shape().size() != 2 || w_ex1.shape()[0] != layers || w_ex2.shape().size() != 2 ||
      w_ex2.shape()[0] != w_ex1.shape()[1] || w_ex2.shape()[1] != layers) {
    throw ShapeError("excite: x_sq " + to_string(x_sq.shape()) + ", W_ex1 " +
                     to_string(w_ex1.shape()) + ", W_ex2 " + to_string(w_ex2.shape()) +
                     " do not conform");
  }
  return sigmoid(matmul(swish(matmul(x_sq, w_ex1)), w_ex2));
}

Var reweight(Var stack, Var weights) {
  require_stack(stack, "reweight");
  if (weights.value().size() != stack.shape()[2]) {
    throw ShapeError("reweight: " + std::to_string(weights.value().size()) +
                     " weights for a stack of shape " + to_string(stack.shape()));
  }
  return scale_last_axis(stack, weights);
}

Var merge_projection(Var reweighted, Var w_l1, Var w_l2, Var w_l3) {
  require_stack(reweighted, "merge_projection");
  const std::size_t t = reweighted.shape()[0];
  const std::size_t h = reweighted.shape()[1];
  const std::size_t l = reweighted.shape()[2];
  if (w_l1.shape().size() != 2 || w_l1.shape()[0] != h * l || w_l3.shape().size() != 2 ||
      w_l3.shape()[1] != h) {
    throw ShapeError("merge_projection: stack " + to_string(reweighted.shape()) + " with W_L1 " +
                     to_string(w_l1.shape()) + " and W_L3 " + to_string(w_l3.shape()));
  }
  // [t][h][l] -> [t][l][h] so each frame flattens to index h + H·l.
  Var frames = reshape(swap_last_axes(reweighted), {t, l * h});
  return matmul(matmul(matmul(frames, w_l1), w_l2), w_l3);
}

AttMOutput attm_forward(Var stack, const AttMVars &p) {
  Var x_sq = squeeze(stack, p.w_sq);
  Var weights = excite(x_sq, p.w_ex1, p.w_ex2);
  Var reweighted = reweight(stack, weights);
  return AttMOutput{merge_projection(reweighted, p.w_l1, p.w_l2, p.w_l3), weights};
}

Tensor squeeze(const EmbeddingStack &stack, const Tensor &w_sq) {
  Tape tape;
  return squeeze(tape.constant(stack.data), tape.constant(w_sq)).value().reshaped({stack.layers()});
}

AttentionWeights excite(const Tensor &x_sq, const Tensor &w_ex1, const Tensor &w_ex2) {
  Tape tape;
  Var w = excite(tape.constant(x_sq), tape.constant(w_ex1), tape.constant(w_ex2));
  return AttentionWeights{w.value()};
}

Tensor reweight(const EmbeddingStack &stack, const AttentionWeights &weights) {
  Tape tape;
  return reweight(tape.constant(stack.data), tape.constant(weights.values)).value();
}

Tensor merge_projection(const Tensor &reweighted, const Tensor &w_l1, const Tensor &w_l2,
                        const Tensor &w_l3) {
  Tape tape;
  return merge_projection(tape.constant(reweighted), tape.constant(w_l1), tape.constant(w_l2),
                          tape.constant(w_l3))
      .value();
}

AttMResult attm_forward(const EmbeddingStack &stack, const AttMParams &params) {
  params.validate();
  if (stack.hidden() != params.hidden() || stack.layers() != params.layers()) {
    throw ShapeError("attm_forward: stack " + to_string(stack.data.shape()) +
                     " does not match AttM parameters for H=" + std::to_string(params.hidden()) +
                     ", L=" + std::to_string(params.layers()));
  }
  Tape tape;
  AttMVars vars{tape.constant(params.w_sq), tape.constant(params.w_ex1), tape.constant(params.w_ex2),
                tape.constant(params.w_l1), tape.constant(params.w_l2), tape.constant(params.w_l3)};
  AttMOutput out = attm_forward(tape.constant(stack.data), vars);
  return AttMResult{out.merged.value(), AttentionWeights{out.weights.value()}};
}

} // namespace attmerge
