// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "attmerge/encoder.hpp"
#include "attmerge/eval.hpp"

namespace attmerge {

namespace fs = std::filesystem;

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public FormatError {
public:
  using FormatError::FormatError;
};
class VersionMismatchError : public FormatError {
public:
  using FormatError::FormatError;
};
/// File shorter than its header declares.
class TruncatedPayloadError : public FormatError {
public:
  using FormatError::FormatError;
};
/// File longer than its header declares.
class TrailingDataError : public FormatError {
public:
  using FormatError::FormatError;
};
class InvalidHeaderError : public FormatError {
public:
  using FormatError::FormatError;
};

class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class DuplicateIdError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};
class MissingIdsError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Embedding stack files
//
//   offset  size  field
//   0       4     magic "EMBS"
//   4       4     version, u32 LE, = 1
//   8       4     T, u32 LE
//   12      4     H, u32 LE
//   16      4     L, u32 LE
//   20      4·L·T·H  float32 LE payload in [l][t][h] order
//
// The layer-major payload makes reading the first K layers a prefix read.

struct StackFileHeader {
  static constexpr std::array<char, 4> kMagic{'E', 'M', 'B', 'S'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kSize = 20;

  std::uint32_t frames = 0;
  std::uint32_t hidden = 0;
  std::uint32_t layers = 0;

  std::uint64_t payload_bytes() const {
    return 4ULL * frames * hidden * layers;
  }
};

std::vector<std::uint8_t> encode_stack(const EmbeddingStack &stack);
/// Validates magic, version, dimensions, exact length and finiteness.
EmbeddingStack decode_stack(std::span<const std::uint8_t> bytes, std::string utterance_id,
                            std::optional<std::size_t> max_layers = std::nullopt);

/// Atomic: writes a sibling temp file and renames it into place.
void write_stack(const fs::path &path, const EmbeddingStack &stack);
/// The utterance id is the file stem.
EmbeddingStack read_stack(const fs::path &path, std::optional<std::size_t> max_layers = std::nullopt);

// ---------------------------------------------------------------------------
// Key and score files: one "<id> <token>" record per line, single space.

using KeyMap = std::map<std::string, Label>;
using ScoreMap = std::map<std::string, double>;

KeyMap parse_key(std::istream &in, const std::string &source = "<key>");
ScoreMap parse_scores(std::istream &in, const std::string &source = "<scores>");
KeyMap read_key_file(const fs::path &path);
ScoreMap read_score_file(const fs::path &path);

void write_key_file(const fs::path &path, std::span<const std::pair<std::string, Label>> entries);
void write_score_file(const fs::path &path, const ScoreSet &scores);

/// Pairs every key entry with its score. Throws MissingIdsError listing ids
/// present in the key but absent from the scores (and vice versa).
ScoreSet join_scores(const KeyMap &key, const ScoreMap &scores);

// ---------------------------------------------------------------------------
// Tensor container (parameters and checkpoints)
//
//   magic "TCNT", version u32 = 1,
//   u32 metadata count, then per entry: u32 len + key bytes, u32 len + value bytes,
//   u32 tensor count, then per tensor: u32 len + name bytes, u32 rank,
//   rank × u32 dims, float64 LE payload (row-major).

struct TensorContainer {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor *find(const std::string &name) const;
  std::optional<std::string> meta(const std::string &key) const;
};

std::vector<std::uint8_t> encode_container(const TensorContainer &c);
TensorContainer decode_container(std::span<const std::uint8_t> bytes);
void write_container(const fs::path &path, const TensorContainer &c);
TensorContainer read_container(const fs::path &path);

// ---------------------------------------------------------------------------
// Synthetic layer-band data

struct LabeledStack {
  EmbeddingStack stack;
  Label label;
};

/// Both classes are N(0, noise_std²) per entry; spoof stacks additionally get
/// effect_size along one fixed random unit direction in H, on every frame of
/// layers band_first..band_last (1-based, inclusive).
struct SyntheticSpec {
  std::size_t utts_per_class = 200;
  std::size_t min_frames = 8;
  std::size_t max_frames = 16;
  std::size_t hidden = 16;
  std::size_t layers = 6;
  std::size_t band_first = 1;
  std::size_t band_last = 2;
  double effect_size = 5.0;
  double noise_std = 1.0;
  /// Root seed; the planted direction depends on it alone.
  std::uint64_t seed = 0;
  /// Selects an independent sample of the same distribution (train, dev and
  /// evaluation sets share seed and differ in split).
  std::uint64_t split = 0;

  void validate() const;
};

/// Unit vector of length H along which spoof stacks are shifted.
Tensor planted_direction(const SyntheticSpec &spec);

/// utts_per_class bona fide stacks followed by utts_per_class spoof stacks,
/// ids "<prefix>_000000"... in that order.
std::vector<LabeledStack> generate_synthetic(const SyntheticSpec &spec,
                                             const std::string &id_prefix = "utt");

// ---------------------------------------------------------------------------
// Dataset directories: <id>.embs stack files, key.txt and manifest.txt.

inline constexpr const char *kKeyFileName = "key.txt";
inline constexpr const char *kManifestFileName = "manifest.txt";
inline constexpr const char *kStackExtension = ".embs";

class PathExistsError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Runs `fill` on a fresh temporary sibling of `dir`, then renames it to
/// `dir`. Nothing is left behind when `fill` throws. Throws PathExistsError
/// when `dir` exists and `force` is false.
void publish_directory(const fs::path &dir, bool force,
                       const std::function<void(const fs::path &staging)> &fill);

/// Stack files, key and manifest, published with publish_directory.
void write_dataset(const fs::path &dir, std::span<const LabeledStack> data,
                   const std::string &manifest, bool force);

/// Loads every utterance listed in the key file, in key order.
std::vector<LabeledStack> read_dataset(const fs::path &dir,
                                       std::optional<std::size_t> max_layers = std::nullopt);

/// Writes `bytes` to `path` through a temp file + rename.
void write_file_atomic(const fs::path &path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const fs::path &path, const std::string &text);
std::vector<std::uint8_t> read_file(const fs::path &path);

} // namespace attmerge
