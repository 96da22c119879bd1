// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "attmerge/dataio.hpp"
#include "attmerge/model.hpp"
#include "attmerge/trainer.hpp"

namespace attmerge {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration.
///
/// Text grammar: one `key = value` per line; `#` starts a comment that runs
/// to the end of the line; blank lines are ignored. Keys are case-sensitive,
/// each may appear once, and unknown keys are rejected. See
/// RunConfig::known_keys() for the accepted set.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  Schedule schedule;
  TrainOptions train;
  SyntheticSpec data;
  std::optional<fs::path> train_data;
  std::optional<fs::path> dev_data;
  std::vector<fs::path> eval_data;

  static const std::vector<std::string> &known_keys();

  static RunConfig parse(std::istream &in, const std::string &source = "<config>");
  static RunConfig load(const fs::path &path);

  /// Sets one key; used by the parser and by command-line overrides.
  void set(const std::string &key, const std::string &value);

  /// Cross-field checks: encoder dims, K <= L, schedule and synthetic spec.
  void validate() const;
  /// Throws ConfigError for any configured dataset path that does not exist.
  void require_paths() const;

  /// Synthetic spec with H, L and seed taken from the encoder and run seed.
  SyntheticSpec synthetic() const;
};

} // namespace attmerge
