// SPDX-License-Identifier: Apache-2.0
#include "attmerge/gradcheck_suite.hpp"

#include "attmerge/random.hpp"

namespace attmerge {

namespace {

// Loss = Σ out ∘ R with R fixed, so every output entry contributes.
Var readout_loss(Var out, const Tensor &r) {
  Tape &tape = *out.tape;
  return sum(mul(out, tape.constant(r)));
}

template <class P> std::vector<Tensor> flatten(P &params) {
  std::vector<Tensor> out;
  P::each(params, [&](const char *, Tensor &t) { out.push_back(t); });
  return out;
}

} // namespace

std::string_view to_string(Block block) {
  switch (block) {
  case Block::encoder: return "encoder";
  case Block::attm: return "attm";
  case Block::linm: return "linm";
  case Block::recurrent_head: return "recurrent_head";
  case Block::pooling_head: return "pooling_head";
  }
  return "?";
}

std::vector<Block> trainable_blocks(const ModelConfig &config, Strategy strategy) {
  std::vector<Block> out;
  if (strategy == Strategy::fine_tuned) out.push_back(Block::encoder);
  if (config.merge == MergeMode::attm) out.push_back(Block::attm);
  if (config.merge == MergeMode::linm) out.push_back(Block::linm);
  out.push_back(config.head == HeadKind::recurrent ? Block::recurrent_head : Block::pooling_head);
  return out;
}

GradCheckReport check_block(Block block, const ToyDims &d, std::uint64_t seed, bool corrupt_backward) {
  Rng rng = make_rng(seed, "gradcheck", static_cast<std::uint64_t>(block));
  const Tensor stack = normal_tensor({d.frames, d.hidden, d.layers}, 1.0, rng);
  const Tensor sequence = normal_tensor({d.frames, d.hidden}, 1.0, rng);

  switch (block) {
  case Block::encoder: {
    EncoderConfig cfg;
    cfg.num_layers = d.layers;
    cfg.hidden_dim = d.hidden;
    cfg.num_heads = d.heads;
    cfg.ffn_dim = d.ffn;
    cfg.seed = seed;
    EncoderParams enc = EncoderParams::init(cfg);
    // Non-trivial layer-norm parameters so their gradients are exercised.
    for (auto &layer : enc.layers) {
      layer.ln1_gain = normal_tensor(layer.ln1_gain.shape(), 0.5, rng);
      layer.ln1_bias = normal_tensor(layer.ln1_bias.shape(), 0.5, rng);
      layer.ln2_gain = normal_tensor(layer.ln2_gain.shape(), 0.5, rng);
      layer.ln2_bias = normal_tensor(layer.ln2_bias.shape(), 0.5, rng);
    }
    std::vector<Tensor> params = snapshot(enc.refs());
    const Tensor r = normal_tensor({d.frames, d.hidden, d.layers}, 1.0, rng);
    const std::size_t heads = d.heads;
    return grad_check(
        [&](Tape &tape, std::span<const Var> vars) {
          Var x = tape.constant(stack);
          return readout_loss(refine_layers(x, encoder_vars(vars), heads), r);
        },
        params);
  }
  case Block::attm: {
    AttMParams p = AttMParams::init(d.hidden, d.layers, seed);
    std::vector<Tensor> params = flatten(p);
    const Tensor r = normal_tensor({d.frames, d.hidden}, 1.0, rng);
    const Tensor rw = normal_tensor({1, d.layers}, 1.0, rng);
    return grad_check(
        [&](Tape &tape, std::span<const Var> vars) {
          const AttMVars v = AttMVars::from(vars);
          Var x = tape.constant(stack);
          Var merged;
          Var weights;
          if (corrupt_backward) {
            Var x_sq = diagnostics::swish_with_faulty_backward(
                matmul(transpose(v.w_sq), mean_over_axis(x, 0)));
            weights = excite(x_sq, v.w_ex1, v.w_ex2);
            merged = merge_projection(reweight(x, weights), v.w_l1, v.w_l2, v.w_l3);
          } else {
            AttMOutput out = attm_forward(x, v);
            merged = out.merged;
            weights = out.weights;
          }
          return add(readout_loss(merged, r), readout_loss(weights, rw));
        },
        params);
  }
  case Block::linm: {
    // Non-uniform theta so the normalisation is not at a symmetric point.
    std::vector<Tensor> params{normal_tensor({d.layers}, 1.0, rng)};
    const Tensor r = normal_tensor({d.frames, d.hidden}, 1.0, rng);
    return grad_check(
        [&](Tape &tape, std::span<const Var> vars) {
          return readout_loss(linm_merge(tape.constant(stack), vars[0]), r);
        },
        params);
  }
  case Block::recurrent_head: {
    RecurrentHeadParams p = RecurrentHeadParams::init(d.hidden, d.recurrent_hidden, seed);
    std::vector<Tensor> params = flatten(p);
    return grad_check(
        [&](Tape &tape, std::span<const Var> vars) {
          Var logits = recurrent_head(tape.constant(sequence), RecurrentHeadVars::from(vars));
          return cross_entropy(logits, kSpoofLogit);
        },
        params);
  }
  case Block::pooling_head: {
    PoolingHeadParams p = PoolingHeadParams::init(d.hidden, d.pooling_dim, seed);
    std::vector<Tensor> params = flatten(p);
    return grad_check(
        [&](Tape &tape, std::span<const Var> vars) {
          Var logits = pooling_head(tape.constant(sequence), PoolingHeadVars::from(vars));
          return cross_entropy(logits, kSpoofLogit);
        },
        params);
  }
  }
  throw std::invalid_argument("check_block: unknown block");
}

} // namespace attmerge
