// SPDX-License-Identifier: Apache-2.0
#include "attmerge/checkpoint.hpp"

#include <charconv>

namespace attmerge {

namespace {

std::size_t meta_size(const TensorContainer &c, const std::string &key) {
  auto v = c.meta(key);
  if (!v) throw FormatError("checkpoint lacks metadata '" + key + "'");
  std::size_t out = 0;
  const auto [end, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || end != v->data() + v->size()) {
    throw FormatError("checkpoint metadata '" + key + "' is not an integer: " + *v);
  }
  return out;
}

std::string meta_string(const TensorContainer &c, const std::string &key) {
  auto v = c.meta(key);
  if (!v) throw FormatError("checkpoint lacks metadata '" + key + "'");
  return *v;
}

} // namespace

TensorContainer to_container(Model &model, std::vector<std::pair<std::string, std::string>> extra) {
  const ModelConfig &cfg = model.config;
  TensorContainer c;
  c.metadata = {
      {"encoder.layers", std::to_string(cfg.encoder.num_layers)},
      {"encoder.hidden", std::to_string(cfg.encoder.hidden_dim)},
      {"encoder.heads", std::to_string(cfg.encoder.num_heads)},
      {"encoder.ffn", std::to_string(cfg.encoder.ffn_dim)},
      {"encoder.seed", std::to_string(cfg.encoder.seed)},
      {"encoder.positional_encoding", cfg.encoder.positional_encoding ? "1" : "0"},
      {"model.merge", std::string(to_string(cfg.merge))},
      {"model.head", std::string(to_string(cfg.head))},
      {"model.layer_cap", std::to_string(cfg.active_layers())},
      {"model.recurrent_hidden", std::to_string(cfg.recurrent_hidden)},
      {"model.readout", std::string(to_string(cfg.readout))},
      {"model.pooling_dim", std::to_string(cfg.pooling_dim)},
  };
  for (auto &e : extra) c.metadata.push_back(std::move(e));
  for (auto &p : model.params()) c.tensors.emplace_back(p.ref.name, *p.ref.tensor);
  return c;
}

Model from_container(const TensorContainer &c) {
  ModelConfig cfg;
  cfg.encoder.num_layers = meta_size(c, "encoder.layers");
  cfg.encoder.hidden_dim = meta_size(c, "encoder.hidden");
  cfg.encoder.num_heads = meta_size(c, "encoder.heads");
  cfg.encoder.ffn_dim = meta_size(c, "encoder.ffn");
  cfg.encoder.positional_encoding = meta_string(c, "encoder.positional_encoding") == "1";
  const auto merge = parse_merge_mode(meta_string(c, "model.merge"));
  const auto head = parse_head_kind(meta_string(c, "model.head"));
  const auto readout = parse_readout(meta_string(c, "model.readout"));
  if (!merge || !head || !readout) throw FormatError("checkpoint has an unknown model kind");
  cfg.merge = *merge;
  cfg.head = *head;
  cfg.readout = *readout;
  cfg.layer_cap = meta_size(c, "model.layer_cap");
  cfg.recurrent_hidden = meta_size(c, "model.recurrent_hidden");
  cfg.pooling_dim = meta_size(c, "model.pooling_dim");
  try {
    cfg.validate();
  } catch (const std::invalid_argument &e) {
    throw FormatError(std::string("checkpoint configuration invalid: ") + e.what());
  }

  Model model = Model::init(cfg, meta_size(c, "encoder.seed"));
  for (auto &p : model.params()) {
    const Tensor *stored = c.find(p.ref.name);
    if (!stored) throw FormatError("checkpoint lacks tensor " + p.ref.name);
    if (stored->shape() != p.ref.tensor->shape()) {
      throw FormatError("checkpoint tensor " + p.ref.name + " has shape " + to_string(stored->shape()) +
                        ", expected " + to_string(p.ref.tensor->shape()));
    }
    *p.ref.tensor = *stored;
  }
  return model;
}

void save_model(const fs::path &path, Model &model, std::vector<std::pair<std::string, std::string>> extra) {
  write_container(path, to_container(model, std::move(extra)));
}

Model load_model(const fs::path &path) { return from_container(read_container(path)); }

} // namespace attmerge
