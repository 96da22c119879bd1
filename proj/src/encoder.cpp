// SPDX-License-Identifier: Apache-2.0
#include "attmerge/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "attmerge/random.hpp"

namespace attmerge {

void EncoderConfig::validate() const {
  if (num_layers == 0 || hidden_dim == 0 || num_heads == 0 || ffn_dim == 0) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  if (hidden_dim % num_heads != 0) {
    throw std::invalid_argument("num_heads (" + std::to_string(num_heads) +
                                ") must divide hidden_dim (" + std::to_string(hidden_dim) + ")");
  }
}

Tensor EmbeddingStack::layer(std::size_t l) const {
  if (l >= layers()) {
    throw std::out_of_range("layer " + std::to_string(l) + " of a " + std::to_string(layers()) +
                            "-layer stack");
  }
  const std::size_t t_count = frames(), h_count = hidden(), l_count = layers();
  Tensor out({t_count, h_count});
  for (std::size_t i = 0; i < t_count * h_count; ++i) out[i] = data[i * l_count + l];
  return out;
}

EmbeddingStack EmbeddingStack::from_layers(std::span<const Tensor> layers, std::string id) {
  if (layers.empty()) throw ShapeError("from_layers: no layers");
  const Shape &first = layers[0].shape();
  if (first.size() != 2) throw ShapeError("from_layers: layers must be T×H, got " + to_string(first));
  const std::size_t l_count = layers.size();
  Tensor data({first[0], first[1], l_count});
  for (std::size_t l = 0; l < l_count; ++l) {
    if (layers[l].shape() != first) {
      throw ShapeError("from_layers: layer shape " + to_string(layers[l].shape()) + " differs from " +
                       to_string(first));
    }
    for (std::size_t i = 0; i < layers[l].size(); ++i) data[i * l_count + l] = layers[l][i];
  }
  return EmbeddingStack{std::move(data), std::move(id)};
}

EncoderParams EncoderParams::init(const EncoderConfig &config) {
  config.validate();
  const std::size_t h = config.hidden_dim, f = config.ffn_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(h));
  Rng rng = make_rng(config.seed, "encoder");
  EncoderParams params;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    EncoderLayerParams p;
    p.ln1_gain = Tensor({h}, 1.0);
    p.ln1_bias = Tensor({h});
    p.w_q = uniform_tensor({h, h}, bound, rng);
    p.b_q = uniform_tensor({h}, bound, rng);
    p.w_k = uniform_tensor({h, h}, bound, rng);
    p.b_k = uniform_tensor({h}, bound, rng);
    p.w_v = uniform_tensor({h, h}, bound, rng);
    p.b_v = uniform_tensor({h}, bound, rng);
    p.w_o = uniform_tensor({h, h}, bound, rng);
    p.b_o = uniform_tensor({h}, bound, rng);
    p.ln2_gain = Tensor({h}, 1.0);
    p.ln2_bias = Tensor({h});
    p.w_ff1 = uniform_tensor({h, f}, bound, rng);
    p.b_ff1 = uniform_tensor({f}, bound, rng);
    p.w_ff2 = uniform_tensor({f, h}, bound, rng);
    p.b_ff2 = uniform_tensor({h}, bound, rng);
    params.layers.push_back(std::move(p));
  }
  return params;
}

std::vector<ParamRef> EncoderParams::refs() {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    EncoderLayerParams::each(layers[l], [&](const char *name, Tensor &t) {
      out.push_back(ParamRef{prefix + name, &t});
    });
  }
  return out;
}

void set_frozen(EncoderParams &params, bool frozen) { params.frozen = frozen; }

EncoderLayerVars EncoderLayerVars::from(std::span<const Var> v) {
  if (v.size() != EncoderLayerParams::kTensorCount) {
    throw std::invalid_argument("encoder layer expects " +
                                std::to_string(EncoderLayerParams::kTensorCount) + " tensors");
  }
  return EncoderLayerVars{v[0], v[1], v[2],  v[3],  v[4],  v[5],  v[6],  v[7],
                          v[8], v[9], v[10], v[11], v[12], v[13], v[14], v[15]};
}

std::vector<EncoderLayerVars> encoder_vars(std::span<const Var> flat) {
  constexpr std::size_t n = EncoderLayerParams::kTensorCount;
  if (flat.size() % n != 0) throw std::invalid_argument("encoder_vars: ragged parameter list");
  std::vector<EncoderLayerVars> out;
  for (std::size_t i = 0; i < flat.size(); i += n) out.push_back(EncoderLayerVars::from(flat.subspan(i, n)));
  return out;
}

std::vector<EncoderLayerVars> bind_encoder(Tape &tape, EncoderParams &params) {
  const auto refs = params.refs();
  const auto flat = bind_leaves(tape, refs, !params.frozen);
  return encoder_vars(flat);
}

Tensor sinusoidal_positions(std::size_t frames, std::size_t hidden) {
  Tensor pe({frames, hidden});
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < hidden; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(hidden));
      const double angle = static_cast<double>(t) * rate;
      pe.at(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Var encoder_layer(Var x, const EncoderLayerVars &p, std::size_t num_heads) {
  const std::size_t hidden = x.shape().at(1);
  if (p.w_q.shape() != Shape{hidden, hidden}) {
    throw ShapeError("encoder_layer: input " + to_string(x.shape()) + " does not match weights " +
                     to_string(p.w_q.shape()));
  }
  const std::size_t head_dim = hidden / num_heads;
  const double score_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var normed = layer_norm(x, p.ln1_gain, p.ln1_bias);
  Var q = add_row(matmul(normed, p.w_q), p.b_q);
  Var k = add_row(matmul(normed, p.w_k), p.b_k);
  Var v = add_row(matmul(normed, p.w_v), p.b_v);

  std::vector<Var> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    Var qh = slice(q, 1, h * head_dim, head_dim);
    Var kh = slice(k, 1, h * head_dim, head_dim);
    Var vh = slice(v, 1, h * head_dim, head_dim);
    Var scores = scale(matmul(qh, transpose(kh)), score_scale);
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  Var attended = num_heads == 1 ? heads[0] : concat(heads, 1);
  Var h1 = add(x, add_row(matmul(attended, p.w_o), p.b_o));

  Var normed2 = layer_norm(h1, p.ln2_gain, p.ln2_bias);
  Var ff = add_row(matmul(gelu(add_row(matmul(normed2, p.w_ff1), p.b_ff1)), p.w_ff2), p.b_ff2);
  return add(h1, ff);
}

Var encode(Var input, const EncoderConfig &config, std::span<const EncoderLayerVars> layers) {
  config.validate();
  const Shape &shape = input.shape();
  if (shape.size() != 2 || shape[1] != config.hidden_dim) {
    throw ShapeError("encode: input " + to_string(shape) + " does not have hidden dim " +
                     std::to_string(config.hidden_dim));
  }
  if (layers.size() != config.num_layers) {
    throw std::invalid_argument("encode: " + std::to_string(layers.size()) +
                                " layer parameter sets for " + std::to_string(config.num_layers) +
                                " layers");
  }
  Var x = input;
  if (config.positional_encoding) {
    x = add(x, input.tape->constant(sinusoidal_positions(shape[0], shape[1])));
  }
  std::vector<Var> outputs;
  outputs.reserve(layers.size());
  for (const auto &layer : layers) {
    x = encoder_layer(x, layer, config.num_heads);
    outputs.push_back(x);
  }
  return stack_last_axis(outputs);
}

EmbeddingStack encode(const Tensor &input, const EncoderConfig &config, const EncoderParams &params,
                      std::string utterance_id) {
  Tape tape;
  auto &mutable_params = const_cast<EncoderParams &>(params);
  const auto refs = mutable_params.refs();
  const auto flat = bind_leaves(tape, refs, false);
  const auto layers = encoder_vars(flat);
  Var out = encode(tape.constant(input), config, layers);
  return EmbeddingStack{out.value(), std::move(utterance_id)};
}

Var layer_slice(Var stack, std::size_t l) {
  const Shape &s = stack.shape();
  if (s.size() != 3) throw ShapeError("layer_slice: expected T×H×L, got " + to_string(s));
  return reshape(slice(stack, 2, l, 1), {s[0], s[1]});
}

Var refine_layers(Var stack, std::span<const EncoderLayerVars> layers, std::size_t num_heads) {
  const Shape &s = stack.shape();
  if (s.size() != 3) throw ShapeError("refine_layers: expected T×H×L, got " + to_string(s));
  if (s[2] > layers.size()) {
    throw ShapeError("refine_layers: stack has " + std::to_string(s[2]) + " layers but only " +
                     std::to_string(layers.size()) + " encoder blocks exist");
  }
  std::vector<Var> refined;
  refined.reserve(s[2]);
  for (std::size_t l = 0; l < s[2]; ++l) {
    refined.push_back(encoder_layer(layer_slice(stack, l), layers[l], num_heads));
  }
  return stack_last_axis(refined);
}

EmbeddingStack truncate(const EmbeddingStack &stack, std::size_t k) {
  const std::size_t l_count = stack.layers();
  if (k < 1 || k > l_count) {
    throw std::out_of_range("truncate: K=" + std::to_string(k) + " outside [1, " +
                            std::to_string(l_count) + "]");
  }
  if (k == l_count) return stack;
  const std::size_t rows = stack.frames() * stack.hidden();
  Tensor data({stack.frames(), stack.hidden(), k});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t l = 0; l < k; ++l) data[i * k + l] = stack.data[i * l_count + l];
  return EmbeddingStack{std::move(data), stack.utterance_id};
}

} // namespace attmerge
