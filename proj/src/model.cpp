// SPDX-License-Identifier: Apache-2.0
#include "attmerge/model.hpp"

#include <stdexcept>

namespace attmerge {

std::string_view to_string(MergeMode mode) {
  switch (mode) {
  case MergeMode::attm: return "attm";
  case MergeMode::linm: return "linm";
  case MergeMode::none: return "none";
  }
  return "?";
}

std::string_view to_string(HeadKind head) {
  return head == HeadKind::recurrent ? "recurrent" : "pooling";
}

std::string_view to_string(Readout readout) {
  return readout == Readout::final_state ? "final" : "mean";
}

std::optional<MergeMode> parse_merge_mode(std::string_view s) {
  if (s == "attm") return MergeMode::attm;
  if (s == "linm") return MergeMode::linm;
  if (s == "none") return MergeMode::none;
  return std::nullopt;
}

std::optional<HeadKind> parse_head_kind(std::string_view s) {
  if (s == "recurrent") return HeadKind::recurrent;
  if (s == "pooling") return HeadKind::pooling;
  return std::nullopt;
}

std::optional<Readout> parse_readout(std::string_view s) {
  if (s == "final") return Readout::final_state;
  if (s == "mean") return Readout::mean_state;
  return std::nullopt;
}

void ModelConfig::validate() const {
  encoder.validate();
  if (layer_cap > encoder.num_layers) {
    throw std::invalid_argument("layer cap K=" + std::to_string(layer_cap) + " exceeds L=" +
                                std::to_string(encoder.num_layers));
  }
  if (recurrent_hidden == 0 || pooling_dim == 0) {
    throw std::invalid_argument("head dimensions must be positive");
  }
}

Model Model::init(const ModelConfig &config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.config.encoder.seed = seed;
  m.encoder = EncoderParams::init(m.config.encoder);
  const std::size_t h = config.encoder.hidden_dim;
  const std::size_t k = config.active_layers();
  if (config.merge == MergeMode::attm) m.attm = AttMParams::init(h, k, seed);
  if (config.merge == MergeMode::linm) m.linm = LinMParams::uniform(k);
  if (config.head == HeadKind::recurrent) {
    m.recurrent = RecurrentHeadParams::init(h, config.recurrent_hidden, seed);
  } else {
    m.pooling = PoolingHeadParams::init(h, config.pooling_dim, seed);
  }
  return m;
}

std::vector<ModelParamRef> Model::params() {
  std::vector<ModelParamRef> out;
  auto append = [&](std::vector<ParamRef> refs, const std::string &prefix, ParamGroup group) {
    for (auto &r : refs) out.push_back(ModelParamRef{ParamRef{prefix + r.name, r.tensor}, group});
  };
  append(encoder.refs(), "encoder.", ParamGroup::encoder);
  if (config.merge == MergeMode::attm) append(attm.refs(), "attm.", ParamGroup::merge);
  if (config.merge == MergeMode::linm) append(linm.refs(), "linm.", ParamGroup::merge);
  if (config.head == HeadKind::recurrent) append(recurrent.refs(), "head.", ParamGroup::head);
  else append(pooling.refs(), "head.", ParamGroup::head);
  return out;
}

ForwardPass forward(Tape &tape, Model &model, const Tensor &stack, bool with_grad) {
  const ModelConfig &cfg = model.config;
  const std::size_t k = cfg.active_layers();
  const std::size_t hidden = cfg.encoder.hidden_dim;
  if (stack.rank() != 3 || stack.dim(1) != hidden || stack.dim(2) < k) {
    throw ShapeError("model expects a T×" + std::to_string(hidden) + "×L stack with L >= " +
                     std::to_string(k) + ", got " + to_string(stack.shape()));
  }

  ForwardPass pass;
  std::vector<Var> encoder_leaves, merge_leaves, head_leaves;
  for (auto &p : model.params()) {
    const bool trainable =
        with_grad && !(p.group == ParamGroup::encoder && model.encoder.frozen);
    Var leaf = tape.leaf(*p.ref.tensor, trainable);
    pass.leaves.push_back(leaf);
    switch (p.group) {
    case ParamGroup::encoder: encoder_leaves.push_back(leaf); break;
    case ParamGroup::merge: merge_leaves.push_back(leaf); break;
    case ParamGroup::head: head_leaves.push_back(leaf); break;
    }
  }

  Var x = tape.constant(stack);
  if (stack.dim(2) > k) x = slice(x, 2, 0, k);

  const auto blocks = encoder_vars(encoder_leaves);
  x = refine_layers(x, std::span(blocks).first(k), cfg.encoder.num_heads);

  Var merged;
  switch (cfg.merge) {
  case MergeMode::attm: {
    AttMOutput out = attm_forward(x, AttMVars::from(merge_leaves));
    merged = out.merged;
    pass.attention = out.weights;
    break;
  }
  case MergeMode::linm: merged = linm_merge(x, merge_leaves.at(0)); break;
  case MergeMode::none: merged = layer_slice(x, k - 1); break;
  }

  pass.logits = cfg.head == HeadKind::recurrent
                    ? recurrent_head(merged, RecurrentHeadVars::from(head_leaves), cfg.readout)
                    : pooling_head(merged, PoolingHeadVars::from(head_leaves));
  return pass;
}

Tensor logits(const Model &model, const EmbeddingStack &stack) {
  Tape tape;
  return forward(tape, const_cast<Model &>(model), stack.data, false).logits.value().reshaped({2});
}

double score(const Model &model, const EmbeddingStack &stack) {
  return detection_score(logits(model, stack));
}

Tensor attention_weights(const Model &model, const EmbeddingStack &stack) {
  if (model.config.merge != MergeMode::attm) {
    throw std::logic_error("attention weights exist only for AttM models");
  }
  Tape tape;
  ForwardPass pass = forward(tape, const_cast<Model &>(model), stack.data, false);
  return pass.attention->value().reshaped({model.config.active_layers()});
}

} // namespace attmerge
