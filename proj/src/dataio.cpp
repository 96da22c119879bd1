// SPDX-License-Identifier: Apache-2.0
#include "attmerge/dataio.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "attmerge/random.hpp"

namespace attmerge {

namespace {

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char *what) {
  if (v > UINT32_MAX) throw FormatError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

/// Bounds-checked little-endian reader for the container format.
class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw TruncatedPayloadError("container ends unexpectedly");
  }
  std::uint32_t u32() {
    need(4);
    auto v = get_u32(bytes_, pos_);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    auto v = get_u64(bytes_, pos_);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_str(std::vector<std::uint8_t> &out, const std::string &s) {
  put_u32(out, checked_u32(s.size(), "string length"));
  out.insert(out.end(), s.begin(), s.end());
}

} // namespace

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> encode_stack(const EmbeddingStack &stack) {
  if (stack.data.rank() != 3) {
    throw ShapeError("encode_stack: expected T×H×L, got " + to_string(stack.data.shape()));
  }
  const std::size_t t_count = stack.frames(), h_count = stack.hidden(), l_count = stack.layers();
  std::vector<std::uint8_t> out;
  out.reserve(StackFileHeader::kSize + 4 * stack.data.size());
  out.insert(out.end(), StackFileHeader::kMagic.begin(), StackFileHeader::kMagic.end());
  put_u32(out, StackFileHeader::kVersion);
  put_u32(out, checked_u32(t_count, "T"));
  put_u32(out, checked_u32(h_count, "H"));
  put_u32(out, checked_u32(l_count, "L"));
  for (std::size_t l = 0; l < l_count; ++l) {
    for (std::size_t t = 0; t < t_count; ++t) {
      for (std::size_t h = 0; h < h_count; ++h) {
        const auto value = static_cast<float>(stack.data.at(t, h, l));
        if (!std::isfinite(value)) {
          throw FormatError("stack " + stack.utterance_id + " holds a value not representable as float32");
        }
        put_u32(out, std::bit_cast<std::uint32_t>(value));
      }
    }
  }
  return out;
}

EmbeddingStack decode_stack(std::span<const std::uint8_t> bytes, std::string utterance_id,
                            std::optional<std::size_t> max_layers) {
  if (bytes.size() < StackFileHeader::kSize) {
    throw TruncatedPayloadError("stack file " + utterance_id + " is shorter than its header");
  }
  if (!std::equal(StackFileHeader::kMagic.begin(), StackFileHeader::kMagic.end(), bytes.begin())) {
    throw BadMagicError("stack file " + utterance_id + " does not start with EMBS");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != StackFileHeader::kVersion) {
    throw VersionMismatchError("stack file " + utterance_id + " has version " +
                               std::to_string(version) + ", expected 1");
  }
  StackFileHeader header{get_u32(bytes, 8), get_u32(bytes, 12), get_u32(bytes, 16)};
  if (header.frames == 0 || header.hidden == 0 || header.layers == 0) {
    throw InvalidHeaderError("stack file " + utterance_id + " declares a zero dimension");
  }
  const std::uint64_t expected = StackFileHeader::kSize + header.payload_bytes();
  if (bytes.size() < expected) {
    throw TruncatedPayloadError("stack file " + utterance_id + " has " + std::to_string(bytes.size()) +
                                " bytes, header requires " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw TrailingDataError("stack file " + utterance_id + " has " + std::to_string(bytes.size()) +
                            " bytes, header requires " + std::to_string(expected));
  }
  const std::size_t t_count = header.frames, h_count = header.hidden;
  std::size_t l_count = header.layers;
  if (max_layers) {
    if (*max_layers == 0) throw std::invalid_argument("decode_stack: max_layers must be positive");
    l_count = std::min(l_count, *max_layers);
  }
  Tensor data({t_count, h_count, l_count});
  std::size_t offset = StackFileHeader::kSize;
  for (std::size_t l = 0; l < l_count; ++l) {
    for (std::size_t t = 0; t < t_count; ++t) {
      for (std::size_t h = 0; h < h_count; ++h) {
        const float value = std::bit_cast<float>(get_u32(bytes, offset));
        offset += 4;
        if (!std::isfinite(value)) {
          throw FormatError("stack file " + utterance_id + " holds a non-finite value");
        }
        data.at(t, h, l) = value;
      }
    }
  }
  return EmbeddingStack{std::move(data), std::move(utterance_id)};
}

std::vector<std::uint8_t> read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const fs::path &path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp-" + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path &path, const std::string &text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t *>(text.data()), text.size()));
}

void write_stack(const fs::path &path, const EmbeddingStack &stack) {
  write_file_atomic(path, encode_stack(stack));
}

EmbeddingStack read_stack(const fs::path &path, std::optional<std::size_t> max_layers) {
  return decode_stack(read_file(path), path.stem().string(), max_layers);
}

// ---------------------------------------------------------------------------

namespace {

/// Splits "<id> <token>" at its single space.
std::pair<std::string, std::string> split_record(std::string line, std::size_t line_no,
                                                 const std::string &source) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto space = line.find(' ');
  if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
      line.find(' ', space + 1) != std::string::npos || line.find('\t') != std::string::npos) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": malformed line '" + line +
                     "', expected '<id> <value>'");
  }
  return {line.substr(0, space), line.substr(space + 1)};
}

template <class Map, class ParseValue>
Map parse_records(std::istream &in, const std::string &source, ParseValue parse_value) {
  Map out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto [id, token] = split_record(line, line_no, source);
    auto value = parse_value(token, line_no);
    if (!out.emplace(id, value).second) {
      throw DuplicateIdError(source + ":" + std::to_string(line_no) + ": duplicate id " + id);
    }
  }
  return out;
}

std::ifstream open_text(const fs::path &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

} // namespace

KeyMap parse_key(std::istream &in, const std::string &source) {
  return parse_records<KeyMap>(in, source, [&](const std::string &token, std::size_t line_no) {
    auto label = parse_label(token);
    if (!label) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": unknown label '" + token +
                       "' (expected bonafide or spoof)");
    }
    return *label;
  });
}

ScoreMap parse_scores(std::istream &in, const std::string &source) {
  return parse_records<ScoreMap>(in, source, [&](const std::string &token, std::size_t line_no) {
    double value = 0.0;
    const auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || end != token.data() + token.size() || !std::isfinite(value)) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": invalid score '" + token + "'");
    }
    return value;
  });
}

KeyMap read_key_file(const fs::path &path) {
  auto in = open_text(path);
  return parse_key(in, path.string());
}

ScoreMap read_score_file(const fs::path &path) {
  auto in = open_text(path);
  return parse_scores(in, path.string());
}

void write_key_file(const fs::path &path, std::span<const std::pair<std::string, Label>> entries) {
  std::string text;
  for (const auto &[id, label] : entries) {
    text += id;
    text += ' ';
    text += to_string(label);
    text += '\n';
  }
  write_text_atomic(path, text);
}

void write_score_file(const fs::path &path, const ScoreSet &scores) {
  std::string text;
  char buf[64];
  for (const auto &r : scores.records()) {
    std::snprintf(buf, sizeof buf, " %.17g\n", r.score);
    text += r.utterance_id;
    text += buf;
  }
  write_text_atomic(path, text);
}

ScoreSet join_scores(const KeyMap &key, const ScoreMap &scores) {
  std::string missing, unknown;
  for (const auto &[id, label] : key)
    if (!scores.count(id)) missing += (missing.empty() ? "" : ", ") + id;
  for (const auto &[id, score] : scores)
    if (!key.count(id)) unknown += (unknown.empty() ? "" : ", ") + id;
  if (!missing.empty()) throw MissingIdsError("scores missing for ids: " + missing);
  if (!unknown.empty()) throw MissingIdsError("scores for ids absent from the key: " + unknown);
  ScoreSet set;
  for (const auto &[id, label] : key) set.add(ScoreRecord{id, label, scores.at(id)});
  return set;
}

// ---------------------------------------------------------------------------

const Tensor *TensorContainer::find(const std::string &name) const {
  for (const auto &[n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::optional<std::string> TensorContainer::meta(const std::string &key) const {
  for (const auto &[k, v] : metadata)
    if (k == key) return v;
  return std::nullopt;
}

namespace {
constexpr std::array<char, 4> kContainerMagic{'T', 'C', 'N', 'T'};
constexpr std::uint32_t kContainerVersion = 1;
} // namespace

std::vector<std::uint8_t> encode_container(const TensorContainer &c) {
  std::vector<std::uint8_t> out(kContainerMagic.begin(), kContainerMagic.end());
  put_u32(out, kContainerVersion);
  put_u32(out, checked_u32(c.metadata.size(), "metadata count"));
  for (const auto &[k, v] : c.metadata) {
    put_str(out, k);
    put_str(out, v);
  }
  put_u32(out, checked_u32(c.tensors.size(), "tensor count"));
  for (const auto &[name, t] : c.tensors) {
    put_str(out, name);
    put_u32(out, checked_u32(t.rank(), "rank"));
    for (auto d : t.shape()) put_u32(out, checked_u32(d, "dimension"));
    for (double v : t.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorContainer decode_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw TruncatedPayloadError("container is shorter than its header");
  if (!std::equal(kContainerMagic.begin(), kContainerMagic.end(), bytes.begin())) {
    throw BadMagicError("container does not start with TCNT");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion) {
    throw VersionMismatchError("container version " + std::to_string(version) + ", expected 1");
  }
  TensorContainer c;
  const std::uint32_t n_meta = r.u32();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string k = r.str();
    std::string v = r.str();
    c.metadata.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t n_tensors = r.u32();
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw InvalidHeaderError("tensor " + name + " has invalid rank");
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32();
      if (dim == 0) throw InvalidHeaderError("tensor " + name + " has a zero dimension");
      shape.push_back(dim);
      count *= dim;
      if (count > bytes.size()) throw TruncatedPayloadError("tensor " + name + " exceeds the file");
    }
    auto payload = r.take(static_cast<std::size_t>(count * 8));
    std::vector<double> values(static_cast<std::size_t>(count));
    for (std::size_t j = 0; j < values.size(); ++j) values[j] = std::bit_cast<double>(get_u64(payload, 8 * j));
    c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw TrailingDataError("container has trailing bytes");
  return c;
}

void write_container(const fs::path &path, const TensorContainer &c) {
  write_file_atomic(path, encode_container(c));
}

TensorContainer read_container(const fs::path &path) { return decode_container(read_file(path)); }

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (utts_per_class == 0) throw std::invalid_argument("synthetic: utts_per_class must be positive");
  if (min_frames == 0 || min_frames > max_frames) {
    throw std::invalid_argument("synthetic: need 1 <= min_frames <= max_frames");
  }
  if (hidden == 0 || layers == 0) throw std::invalid_argument("synthetic: H and L must be positive");
  if (band_first < 1 || band_first > band_last || band_last > layers) {
    throw std::invalid_argument("synthetic: invalid band [" + std::to_string(band_first) + ", " +
                                std::to_string(band_last) + "] for L=" + std::to_string(layers));
  }
  if (!(effect_size >= 0.0) || !std::isfinite(effect_size)) {
    throw std::invalid_argument("synthetic: effect size must be a finite value >= 0");
  }
  if (!(noise_std > 0.0) || !std::isfinite(noise_std)) {
    throw std::invalid_argument("synthetic: noise_std must be positive");
  }
}

Tensor planted_direction(const SyntheticSpec &spec) {
  Rng rng = make_rng(spec.seed, "synthetic.direction");
  Tensor u = normal_tensor({spec.hidden}, 1.0, rng);
  double norm = 0.0;
  for (double v : u.data()) norm += v * v;
  norm = std::sqrt(norm);
  for (auto &v : u.data()) v /= norm;
  return u;
}

std::vector<LabeledStack> generate_synthetic(const SyntheticSpec &spec, const std::string &id_prefix) {
  spec.validate();
  const Tensor u = planted_direction(spec);
  Rng rng = make_rng(spec.seed, "synthetic.data", spec.split);
  std::uniform_int_distribution<std::size_t> frames_dist(spec.min_frames, spec.max_frames);
  std::normal_distribution<double> noise(0.0, spec.noise_std);

  std::vector<LabeledStack> out;
  out.reserve(2 * spec.utts_per_class);
  char id[64];
  for (std::size_t i = 0; i < 2 * spec.utts_per_class; ++i) {
    const Label label = i < spec.utts_per_class ? Label::bonafide : Label::spoof;
    const std::size_t frames = frames_dist(rng);
    Tensor data({frames, spec.hidden, spec.layers});
    for (auto &v : data.data()) v = noise(rng);
    if (label == Label::spoof) {
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t h = 0; h < spec.hidden; ++h)
          for (std::size_t l = spec.band_first - 1; l < spec.band_last; ++l)
            data.at(t, h, l) += spec.effect_size * u[h];
    }
    std::snprintf(id, sizeof id, "%s_%06zu", id_prefix.c_str(), i);
    out.push_back(LabeledStack{EmbeddingStack{std::move(data), id}, label});
  }
  return out;
}

// ---------------------------------------------------------------------------

void publish_directory(const fs::path &dir, bool force,
                       const std::function<void(const fs::path &staging)> &fill) {
  if (fs::exists(dir) && !force) {
    throw PathExistsError(dir.string() + " already exists (use --force to replace it)");
  }
  fs::path tmp = dir;
  tmp += ".tmp-" + std::to_string(::getpid());
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    fill(tmp);
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::rename(tmp, dir);
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
}

void write_dataset(const fs::path &dir, std::span<const LabeledStack> data, const std::string &manifest,
                   bool force) {
  publish_directory(dir, force, [&](const fs::path &tmp) {
    std::vector<std::pair<std::string, Label>> key;
    for (const auto &item : data) {
      const auto bytes = encode_stack(item.stack);
      std::ofstream out(tmp / (item.stack.utterance_id + kStackExtension), std::ios::binary);
      out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw std::runtime_error("failed writing stack " + item.stack.utterance_id);
      key.emplace_back(item.stack.utterance_id, item.label);
    }
    write_key_file(tmp / kKeyFileName, key);
    write_text_atomic(tmp / kManifestFileName, manifest);
  });
}

std::vector<LabeledStack> read_dataset(const fs::path &dir, std::optional<std::size_t> max_layers) {
  const fs::path key_path = dir / kKeyFileName;
  if (!fs::exists(key_path)) throw std::runtime_error("missing key file " + key_path.string());
  const KeyMap key = read_key_file(key_path);
  std::vector<LabeledStack> out;
  out.reserve(key.size());
  for (const auto &[id, label] : key) {
    out.push_back(LabeledStack{read_stack(dir / (id + kStackExtension), max_layers), label});
  }
  return out;
}

} // namespace attmerge
