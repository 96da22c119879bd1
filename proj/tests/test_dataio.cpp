// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "attmerge/dataio.hpp"
#include "support.hpp"

using namespace attmerge;
using testing::random_tensor;

namespace {

EmbeddingStack sample_stack(std::size_t T, std::size_t H, std::size_t L, const char *tag = "stack") {
  auto rng = testing::rng_for(tag);
  return EmbeddingStack{random_tensor({T, H, L}, rng), "utt"};
}

void put_u32(std::vector<std::uint8_t> &b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Largest gap between neighbouring float32 values near |x|.
double float32_quantum(double x) {
  const float f = static_cast<float>(std::abs(x));
  return static_cast<double>(std::nextafter(f, INFINITY) - f);
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.utts_per_class = 6;
  s.min_frames = 3;
  s.max_frames = 5;
  s.hidden = 4;
  s.layers = 4;
  s.seed = 7;
  return s;
}

} // namespace

TEST_CASE("stack header layout") {
  const auto s = sample_stack(3, 2, 4);
  const auto bytes = encode_stack(s);
  REQUIRE(bytes.size() == 20 + 4 * 3 * 2 * 4);
  CHECK(std::memcmp(bytes.data(), "EMBS", 4) == 0);
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 2);
  CHECK(bytes[16] == 4);
  // The first payload float is (t=0, h=0, l=0), the second (t=0, h=1, l=0).
  float first, second;
  std::memcpy(&first, bytes.data() + 20, 4);
  std::memcpy(&second, bytes.data() + 24, 4);
  CHECK(first == static_cast<float>(s.data.at(0, 0, 0)));
  CHECK(second == static_cast<float>(s.data.at(0, 1, 0)));
}

TEST_CASE("stack round-trip within float32 rounding") {
  const auto s = sample_stack(5, 4, 3);
  const auto back = decode_stack(encode_stack(s), "utt");
  REQUIRE(back.data.shape() == s.data.shape());
  for (std::size_t i = 0; i < s.data.size(); ++i)
    CHECK(std::abs(back.data[i] - s.data[i]) <= float32_quantum(s.data[i]));
  CHECK(encode_stack(back) == encode_stack(s));
}

TEST_CASE("prefix read returns the first layers") {
  const auto s = sample_stack(4, 3, 5);
  const auto bytes = encode_stack(s);
  const auto full = decode_stack(bytes, "u");
  const auto head = decode_stack(bytes, "u", 2);
  REQUIRE(head.layers() == 2);
  CHECK(head.layer(0) == full.layer(0));
  CHECK(head.layer(1) == full.layer(1));
  CHECK(decode_stack(bytes, "u", 9).layers() == 5);
}

TEST_CASE("stack files: id from the stem, atomic write") {
  testing::TempDir dir("stack");
  const auto s = sample_stack(2, 2, 2);
  write_stack(dir / "LA_0001.embs", s);
  const auto back = read_stack(dir / "LA_0001.embs");
  CHECK(back.utterance_id == "LA_0001");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto &e : fs::directory_iterator(dir.path())) ++files;
  CHECK(files == 1);
}

TEST_CASE("distinct header errors") {
  const auto good = encode_stack(sample_stack(2, 3, 2));
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_stack(bad, "u"), BadMagicError);
  bad = good;
  put_u32(bad, 4, 2);
  CHECK_THROWS_AS(decode_stack(bad, "u"), VersionMismatchError);
  bad = good;
  bad.pop_back();
  CHECK_THROWS_AS(decode_stack(bad, "u"), TruncatedPayloadError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_stack(bad, "u"), TrailingDataError);
  bad = good;
  put_u32(bad, 8, 0);
  CHECK_THROWS_AS(decode_stack(bad, "u"), InvalidHeaderError);
  CHECK_THROWS_AS(decode_stack(std::vector<std::uint8_t>(10), "u"), TruncatedPayloadError);
  bad = good;
  const float nan = NAN;
  std::memcpy(bad.data() + 20, &nan, 4);
  CHECK_THROWS_AS(decode_stack(bad, "u"), FormatError);
}

TEST_CASE("file size must equal header plus payload") {
  const auto good = encode_stack(sample_stack(2, 3, 2));
  auto bad = good;
  put_u32(bad, 16, 3); // claims an extra layer
  CHECK_THROWS_AS(decode_stack(bad, "u"), TruncatedPayloadError);
  put_u32(bad, 16, 1);
  CHECK_THROWS_AS(decode_stack(bad, "u"), TrailingDataError);
}

TEST_CASE("header and length corruptions are all rejected") {
  const auto good = encode_stack(sample_stack(3, 4, 2));
  auto rng = testing::rng_for("fuzz");
  std::size_t rejected = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto bad = good;
    switch (trial % 3) {
    case 0: { // flip one header byte to a different value
      const std::size_t at = testing::uniform_int(rng, 0, StackFileHeader::kSize - 1);
      bad[at] ^= static_cast<std::uint8_t>(testing::uniform_int(rng, 1, 255));
      break;
    }
    case 1:
      bad.resize(testing::uniform_int(rng, 0, good.size() - 1));
      break;
    default:
      bad.resize(good.size() + testing::uniform_int(rng, 1, 16), 0);
    }
    try {
      decode_stack(bad, "u");
    } catch (const FormatError &) {
      ++rejected;
    }
  }
  CHECK(rejected == 200);
}

TEST_CASE("key files") {
  std::istringstream in("LA_0001 bonafide\nLA_0002 spoof\n");
  const KeyMap key = parse_key(in);
  CHECK(key.size() == 2);
  CHECK(key.at("LA_0001") == Label::bonafide);

  std::istringstream dup("a bonafide\na spoof\n");
  try {
    parse_key(dup);
    FAIL("duplicate accepted");
  } catch (const DuplicateIdError &e) {
    CHECK(std::string(e.what()).find(" a") != std::string::npos);
  }
  std::istringstream blank("a bonafide\n\nb spoof\n");
  CHECK_THROWS_AS(parse_key(blank), ParseError);
  std::istringstream unknown("a human\n");
  CHECK_THROWS_AS(parse_key(unknown), ParseError);
  std::istringstream malformed("a bonafide\na  spoof\n");
  try {
    parse_key(malformed, "k.txt");
    FAIL("malformed accepted");
  } catch (const ParseError &e) {
    CHECK(std::string(e.what()).find("k.txt:2") != std::string::npos);
  }
}

TEST_CASE("score files") {
  std::istringstream in("a 0.5\nb -1e3\n");
  const ScoreMap scores = parse_scores(in);
  CHECK(scores.at("b") == -1000.0);
  std::istringstream bad("a nope\n");
  CHECK_THROWS_AS(parse_scores(bad), ParseError);
  std::istringstream nan("a nan\n");
  CHECK_THROWS_AS(parse_scores(nan), ParseError);

  testing::TempDir dir("scores");
  ScoreSet set;
  set.add({"x", Label::bonafide, 0.125});
  set.add({"y", Label::spoof, -2.0});
  write_score_file(dir / "s.txt", set);
  const ScoreMap back = read_score_file(dir / "s.txt");
  CHECK(back.at("x") == 0.125);
  CHECK(back.at("y") == -2.0);
}

TEST_CASE("joining scores with a key") {
  const KeyMap key{{"a", Label::bonafide}, {"b", Label::spoof}, {"c", Label::spoof}};
  const ScoreSet joined = join_scores(key, {{"a", 1.0}, {"b", 0.0}, {"c", -1.0}});
  CHECK(joined.size() == 3);
  try {
    join_scores(key, {{"a", 1.0}});
    FAIL("missing ids accepted");
  } catch (const MissingIdsError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("b") != std::string::npos);
    CHECK(msg.find("c") != std::string::npos);
  }
  CHECK_THROWS_AS(join_scores(key, {{"a", 1.0}, {"b", 0.0}, {"c", -1.0}, {"d", 2.0}}), MissingIdsError);
}

TEST_CASE("container round-trip and errors") {
  TensorContainer c;
  c.metadata = {{"model.merge", "attm"}, {"note", ""}};
  auto rng = testing::rng_for("container");
  c.tensors = {{"w", random_tensor({3, 2}, rng)}, {"b", random_tensor({2}, rng)}};
  const auto bytes = encode_container(c);
  const TensorContainer back = decode_container(bytes);
  CHECK(back.meta("model.merge") == "attm");
  CHECK_FALSE(back.meta("missing").has_value());
  REQUIRE(back.find("w") != nullptr);
  CHECK(*back.find("w") == c.tensors[0].second);
  CHECK(back.find("x") == nullptr);

  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_container(bad), BadMagicError);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(decode_container(bad), VersionMismatchError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_container(bad), TruncatedPayloadError);
  bad = bytes;
  bad.push_back(1);
  CHECK_THROWS_AS(decode_container(bad), TrailingDataError);
}

TEST_CASE("container truncations never crash") {
  TensorContainer c;
  c.metadata = {{"k", "v"}};
  c.tensors = {{"w", Tensor({2, 2}, 1.5)}};
  const auto bytes = encode_container(c);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK_THROWS_AS(decode_container(cut), FormatError);
  }
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s = small_spec();
  s.band_first = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.band_last = 5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.band_first = 3;
  s.band_last = 2;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.effect_size = -1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = small_spec();
  s.noise_std = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_NOTHROW(small_spec().validate());
}

TEST_CASE("synthetic data: counts, ids, frame range, determinism") {
  const auto a = generate_synthetic(small_spec());
  REQUIRE(a.size() == 12);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == (i < 6 ? Label::bonafide : Label::spoof));
    CHECK(a[i].stack.frames() >= 3);
    CHECK(a[i].stack.frames() <= 5);
  }
  CHECK(a[0].stack.utterance_id == "utt_000000");
  const auto b = generate_synthetic(small_spec());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].stack.data == b[i].stack.data);

  SyntheticSpec other = small_spec();
  other.split = 1;
  const auto c = generate_synthetic(other);
  CHECK_FALSE(a[0].stack.data == c[0].stack.data);
  CHECK(planted_direction(other) == planted_direction(small_spec()));
}

TEST_CASE("planted direction is a unit vector") {
  const Tensor u = planted_direction(small_spec());
  double n = 0.0;
  for (double v : u.data()) n += v * v;
  CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("class means differ only inside the band") {
  SyntheticSpec s;
  s.utts_per_class = 300;
  s.min_frames = 4;
  s.max_frames = 4;
  s.hidden = 8;
  s.layers = 6;
  s.band_first = 2;
  s.band_last = 3;
  s.effect_size = 0.5;
  s.seed = 3;
  const auto data = generate_synthetic(s);
  const Tensor u = planted_direction(s);
  // Per utterance, the projection of the time-mean onto u; z-test per layer.
  for (std::size_t l = 0; l < s.layers; ++l) {
    double sum[2] = {0, 0}, sq[2] = {0, 0};
    for (const auto &item : data) {
      double proj = 0.0;
      for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t h = 0; h < 8; ++h) proj += item.stack.data.at(t, h, l) * u[h] / 4.0;
      const int k = item.label == Label::bonafide ? 0 : 1;
      sum[k] += proj;
      sq[k] += proj * proj;
    }
    const double n = 300.0;
    const double m0 = sum[0] / n, m1 = sum[1] / n;
    const double v0 = sq[0] / n - m0 * m0, v1 = sq[1] / n - m1 * m1;
    const double z = (m1 - m0) / std::sqrt(v0 / n + v1 / n);
    const bool in_band = l + 1 >= 2 && l + 1 <= 3;
    if (in_band) {
      CHECK(z > 5.0);
    } else {
      CHECK(std::abs(z) < 4.0);
    }
  }
}

TEST_CASE("dataset directories") {
  testing::TempDir root("dataset");
  const auto data = generate_synthetic(small_spec());
  const fs::path dir = root / "train";
  write_dataset(dir, data, "utterances 12\n", false);
  CHECK(fs::exists(dir / kKeyFileName));
  CHECK(fs::exists(dir / kManifestFileName));
  std::size_t stacks = 0;
  for (const auto &e : fs::directory_iterator(dir)) stacks += e.path().extension() == kStackExtension;
  CHECK(stacks == 12);

  const auto back = read_dataset(dir, 2);
  REQUIRE(back.size() == 12);
  CHECK(back[0].stack.layers() == 2);
  CHECK(back[11].label == Label::spoof);

  CHECK_THROWS_AS(write_dataset(dir, data, "", false), PathExistsError);
  CHECK_NOTHROW(write_dataset(dir, data, "", true));
}

TEST_CASE("a failed publish leaves nothing behind") {
  testing::TempDir root("publish");
  const fs::path dir = root / "out";
  CHECK_THROWS_AS(publish_directory(dir, false, [](const fs::path &) { throw std::runtime_error("boom"); }),
                  std::runtime_error);
  CHECK_FALSE(fs::exists(dir));
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto &e : fs::directory_iterator(root.path())) ++entries;
  CHECK(entries == 0);
}

TEST_CASE("same seed gives byte-identical dataset trees") {
  testing::TempDir root("identical");
  const auto data = generate_synthetic(small_spec());
  write_dataset(root / "a", data, "m\n", false);
  write_dataset(root / "b", generate_synthetic(small_spec()), "m\n", false);
  for (const auto &e : fs::directory_iterator(root / "a")) {
    const fs::path other = root / "b" / e.path().filename();
    REQUIRE(fs::exists(other));
    CHECK(read_file(e.path()) == read_file(other));
  }
}
