// SPDX-License-Identifier: Apache-2.0
#include "attmerge/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace attmerge {

namespace {

std::string trim(const std::string &s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

template <class T> T parse_integer(const std::string &key, const std::string &value) {
  T out{};
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string &key, const std::string &value) {
  double out = 0.0;
  const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

using Setter = std::function<void(RunConfig &, const std::string &key, const std::string &value)>;

const std::map<std::string, Setter> &setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](RunConfig &c, auto &k, auto &v) { c.seed = parse_integer<std::uint64_t>(k, v); };

    t["encoder.layers"] = [](RunConfig &c, auto &k, auto &v) { c.model.encoder.num_layers = parse_integer<std::size_t>(k, v); };
    t["encoder.hidden"] = [](RunConfig &c, auto &k, auto &v) { c.model.encoder.hidden_dim = parse_integer<std::size_t>(k, v); };
    t["encoder.heads"] = [](RunConfig &c, auto &k, auto &v) { c.model.encoder.num_heads = parse_integer<std::size_t>(k, v); };
    t["encoder.ffn"] = [](RunConfig &c, auto &k, auto &v) { c.model.encoder.ffn_dim = parse_integer<std::size_t>(k, v); };
    t["encoder.positional_encoding"] = [](RunConfig &c, auto &k, auto &v) { c.model.encoder.positional_encoding = parse_bool(k, v); };

    t["model.merge"] = [](RunConfig &c, auto &k, auto &v) {
      auto m = parse_merge_mode(v);
      if (!m) throw ConfigError(k + ": expected attm, linm or none, got '" + v + "'");
      c.model.merge = *m;
    };
    t["model.head"] = [](RunConfig &c, auto &k, auto &v) {
      auto h = parse_head_kind(v);
      if (!h) throw ConfigError(k + ": expected recurrent or pooling, got '" + v + "'");
      c.model.head = *h;
    };
    t["model.readout"] = [](RunConfig &c, auto &k, auto &v) {
      auto r = parse_readout(v);
      if (!r) throw ConfigError(k + ": expected final or mean, got '" + v + "'");
      c.model.readout = *r;
    };
    t["model.layer_cap"] = [](RunConfig &c, auto &k, auto &v) { c.model.layer_cap = parse_integer<std::size_t>(k, v); };
    t["model.recurrent_hidden"] = [](RunConfig &c, auto &k, auto &v) { c.model.recurrent_hidden = parse_integer<std::size_t>(k, v); };
    t["model.pooling_dim"] = [](RunConfig &c, auto &k, auto &v) { c.model.pooling_dim = parse_integer<std::size_t>(k, v); };

    t["train.strategy"] = [](RunConfig &c, auto &k, auto &v) {
      auto s = parse_strategy(v);
      if (!s) throw ConfigError(k + ": expected fine-tuned or fixed, got '" + v + "'");
      c.train.strategy = *s;
    };
    t["train.warmup_epochs"] = [](RunConfig &c, auto &k, auto &v) { c.schedule.warmup_epochs = parse_integer<int>(k, v); };
    t["train.decay_rate"] = [](RunConfig &c, auto &k, auto &v) { c.schedule.decay_rate = parse_real(k, v); };
    t["train.unfreeze_epoch"] = [](RunConfig &c, auto &k, auto &v) { c.schedule.unfreeze_epoch = parse_integer<int>(k, v); };
    t["train.peak_lr"] = [](RunConfig &c, auto &k, auto &v) { c.schedule.peak_lr = parse_real(k, v); };
    t["train.total_epochs"] = [](RunConfig &c, auto &k, auto &v) { c.schedule.total_epochs = parse_integer<int>(k, v); };
    t["train.batch_size"] = [](RunConfig &c, auto &k, auto &v) { c.train.batch_size = parse_integer<std::size_t>(k, v); };
    t["train.max_grad_norm"] = [](RunConfig &c, auto &k, auto &v) { c.train.max_grad_norm = parse_real(k, v); };
    t["train.adam_beta1"] = [](RunConfig &c, auto &k, auto &v) { c.train.adam.beta1 = parse_real(k, v); };
    t["train.adam_beta2"] = [](RunConfig &c, auto &k, auto &v) { c.train.adam.beta2 = parse_real(k, v); };
    t["train.adam_eps"] = [](RunConfig &c, auto &k, auto &v) { c.train.adam.eps = parse_real(k, v); };

    t["data.utts_per_class"] = [](RunConfig &c, auto &k, auto &v) { c.data.utts_per_class = parse_integer<std::size_t>(k, v); };
    t["data.min_frames"] = [](RunConfig &c, auto &k, auto &v) { c.data.min_frames = parse_integer<std::size_t>(k, v); };
    t["data.max_frames"] = [](RunConfig &c, auto &k, auto &v) { c.data.max_frames = parse_integer<std::size_t>(k, v); };
    t["data.band_first"] = [](RunConfig &c, auto &k, auto &v) { c.data.band_first = parse_integer<std::size_t>(k, v); };
    t["data.band_last"] = [](RunConfig &c, auto &k, auto &v) { c.data.band_last = parse_integer<std::size_t>(k, v); };
    t["data.effect_size"] = [](RunConfig &c, auto &k, auto &v) { c.data.effect_size = parse_real(k, v); };
    t["data.noise_std"] = [](RunConfig &c, auto &k, auto &v) { c.data.noise_std = parse_real(k, v); };
    t["data.split"] = [](RunConfig &c, auto &k, auto &v) { c.data.split = parse_integer<std::uint64_t>(k, v); };

    t["paths.train"] = [](RunConfig &c, auto &, auto &v) { c.train_data = fs::path(v); };
    t["paths.dev"] = [](RunConfig &c, auto &, auto &v) { c.dev_data = fs::path(v); };
    t["paths.eval"] = [](RunConfig &c, auto &, auto &v) {
      c.eval_data.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) c.eval_data.emplace_back(item);
      }
    };
    return t;
  }();
  return table;
}

} // namespace

const std::vector<std::string> &RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto &[name, setter] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string &key, const std::string &value) {
  const auto &table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(*this, key, value);
}

RunConfig RunConfig::parse(std::istream &in, const std::string &source) {
  RunConfig config;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "expected 'key = value'");
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      config.set(key, value);
    } catch (const ConfigError &e) {
      throw ConfigError(where + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig RunConfig::load(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.string());
}

void RunConfig::validate() const {
  try {
    model.validate();
    schedule.validate();
    synthetic().validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (train.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (train.max_grad_norm < 0.0) throw ConfigError("train.max_grad_norm must be >= 0");
}

void RunConfig::require_paths() const {
  auto check = [](const fs::path &p, const char *key) {
    if (!fs::exists(p)) throw ConfigError(std::string(key) + ": path " + p.string() + " does not exist");
  };
  if (train_data) check(*train_data, "paths.train");
  if (dev_data) check(*dev_data, "paths.dev");
  for (const auto &p : eval_data) check(p, "paths.eval");
}

SyntheticSpec RunConfig::synthetic() const {
  SyntheticSpec spec = data;
  spec.hidden = model.encoder.hidden_dim;
  spec.layers = model.encoder.num_layers;
  spec.seed = seed;
  return spec;
}

} // namespace attmerge
