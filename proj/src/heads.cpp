// SPDX-License-Identifier: Apache-2.0
#include "attmerge/heads.hpp"

#include <cmath>

#include "attmerge/random.hpp"

namespace attmerge {

RecurrentHeadParams RecurrentHeadParams::init(std::size_t input_dim, std::size_t hidden,
                                              std::uint64_t seed) {
  Rng rng = make_rng(seed, "head.recurrent");
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  RecurrentHeadParams p;
  p.w_x = uniform_tensor({input_dim, 4 * hidden}, bound, rng);
  p.w_h = uniform_tensor({hidden, 4 * hidden}, bound, rng);
  p.b = uniform_tensor({4 * hidden}, bound, rng);
  p.w_out = uniform_tensor({hidden, 2}, bound, rng);
  p.b_out = Tensor({2});
  return p;
}

RecurrentHeadParams RecurrentHeadParams::zeros(std::size_t input_dim, std::size_t hidden) {
  return RecurrentHeadParams{Tensor({input_dim, 4 * hidden}), Tensor({hidden, 4 * hidden}),
                             Tensor({4 * hidden}), Tensor({hidden, 2}), Tensor({2})};
}

std::vector<ParamRef> RecurrentHeadParams::refs() {
  std::vector<ParamRef> out;
  each(*this, [&](const char *name, Tensor &t) { out.push_back(ParamRef{name, &t}); });
  return out;
}

RecurrentHeadVars RecurrentHeadVars::from(std::span<const Var> v) {
  if (v.size() != 5) throw std::invalid_argument("recurrent head expects 5 parameter tensors");
  return RecurrentHeadVars{v[0], v[1], v[2], v[3], v[4]};
}

PoolingHeadParams PoolingHeadParams::init(std::size_t input_dim, std::size_t pooled,
                                          std::uint64_t seed) {
  Rng rng = make_rng(seed, "head.pooling");
  auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  PoolingHeadParams p;
  p.w_frame = uniform_tensor({input_dim, pooled}, bound(input_dim), rng);
  p.b_frame = uniform_tensor({pooled}, bound(input_dim), rng);
  p.w_att = uniform_tensor({pooled, 1}, bound(pooled), rng);
  p.b_att = Tensor({1});
  p.w_out = uniform_tensor({2 * pooled, 2}, bound(2 * pooled), rng);
  p.b_out = Tensor({2});
  return p;
}

std::vector<ParamRef> PoolingHeadParams::refs() {
  std::vector<ParamRef> out;
  each(*this, [&](const char *name, Tensor &t) { out.push_back(ParamRef{name, &t}); });
  return out;
}

PoolingHeadVars PoolingHeadVars::from(std::span<const Var> v) {
  if (v.size() != 6) throw std::invalid_argument("pooling head expects 6 parameter tensors");
  return PoolingHeadVars{v[0], v[1], v[2], v[3], v[4], v[5]};
}

namespace {

void require_sequence(const Var &x, std::size_t input_dim, const char *op) {
  const Shape &s = x.shape();
  if (s.empty() || s[0] == 0) throw EmptySequenceError(std::string(op) + ": empty sequence");
  if (s.size() != 2 || s[1] != input_dim) {
    throw ShapeError(std::string(op) + ": input " + to_string(s) + " does not have " +
                     std::to_string(input_dim) + " features per frame");
  }
}

} // namespace

Var recurrent_head(Var x, const RecurrentHeadVars &p, Readout readout) {
  require_sequence(x, p.w_x.shape()[0], "recurrent_head");
  const std::size_t frames = x.shape()[0];
  const std::size_t r = p.w_h.shape()[0];
  Tape &tape = *x.tape;

  Var pre = add_row(matmul(x, p.w_x), p.b); // T×4r
  Var h = tape.constant(Tensor({1, r}));
  Var c = tape.constant(Tensor({1, r}));
  std::vector<Var> states;
  for (std::size_t t = 0; t < frames; ++t) {
    Var gates = t == 0 ? slice(pre, 0, 0, 1) : add(slice(pre, 0, t, 1), matmul(h, p.w_h));
    Var in_gate = sigmoid(slice(gates, 1, 0, r));
    Var forget_gate = sigmoid(slice(gates, 1, r, r));
    Var candidate = tanh(slice(gates, 1, 2 * r, r));
    Var out_gate = sigmoid(slice(gates, 1, 3 * r, r));
    c = t == 0 ? mul(in_gate, candidate) : add(mul(forget_gate, c), mul(in_gate, candidate));
    h = mul(out_gate, tanh(c));
    if (readout == Readout::mean_state) states.push_back(h);
  }
  Var summary = h;
  if (readout == Readout::mean_state) {
    summary = frames == 1 ? h : reshape(mean_over_axis(concat(states, 0), 0), {1, r});
  }
  return add_row(matmul(summary, p.w_out), p.b_out);
}

Var pooling_statistics(Var x, const PoolingHeadVars &p) {
  require_sequence(x, p.w_frame.shape()[0], "pooling_head");
  const std::size_t frames = x.shape()[0];
  Tape &tape = *x.tape;

  Var z = swish(add_row(matmul(x, p.w_frame), p.b_frame));   // T×p
  Var alpha = softmax(add_row(matmul(z, p.w_att), p.b_att), 0); // T×1, sums to 1 over T
  Var alpha_t = transpose(alpha);
  Var mu = matmul(alpha_t, z); // 1×p
  Var ones = tape.constant(Tensor({frames, 1}, 1.0));
  Var centered = sub(z, matmul(ones, mu));
  Var sigma = safe_sqrt(matmul(alpha_t, mul(centered, centered)));
  const Var parts[] = {mu, sigma};
  return concat(parts, 1);
}

Var pooling_head(Var x, const PoolingHeadVars &p) {
  return add_row(matmul(pooling_statistics(x, p), p.w_out), p.b_out);
}

namespace {

std::vector<Var> constants(Tape &tape, std::span<const ParamRef> refs) {
  return bind_leaves(tape, refs, false);
}

} // namespace

Tensor recurrent_head(const Tensor &x, const RecurrentHeadParams &params, Readout readout) {
  if (x.empty()) throw EmptySequenceError("recurrent_head: empty sequence");
  Tape tape;
  auto refs = const_cast<RecurrentHeadParams &>(params).refs();
  auto vars = RecurrentHeadVars::from(constants(tape, refs));
  return recurrent_head(tape.constant(x), vars, readout).value().reshaped({2});
}

Tensor pooling_head(const Tensor &x, const PoolingHeadParams &params) {
  if (x.empty()) throw EmptySequenceError("pooling_head: empty sequence");
  Tape tape;
  auto refs = const_cast<PoolingHeadParams &>(params).refs();
  auto vars = PoolingHeadVars::from(constants(tape, refs));
  return pooling_head(tape.constant(x), vars).value().reshaped({2});
}

double detection_score(const Tensor &logits) {
  if (logits.size() != 2) {
    throw ShapeError("detection_score: expected 2 logits, got " + to_string(logits.shape()));
  }
  return logits[kBonafideLogit] - logits[kSpoofLogit];
}

} // namespace attmerge
