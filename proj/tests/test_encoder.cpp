// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "attmerge/encoder.hpp"
#include "attmerge/gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace attmerge;
using testing::random_tensor;

namespace {

EncoderConfig toy(std::size_t layers = 3, std::size_t hidden = 8, std::uint64_t seed = 5) {
  EncoderConfig c;
  c.num_layers = layers;
  c.hidden_dim = hidden;
  c.num_heads = 2;
  c.ffn_dim = 12;
  c.seed = seed;
  return c;
}

oracle::BlockWeights weights_of(const EncoderLayerParams &p) {
  return {&p.ln1_gain, &p.ln1_bias, &p.w_q, &p.b_q, &p.w_k, &p.b_k, &p.w_v, &p.b_v,
          &p.w_o,      &p.b_o,      &p.ln2_gain, &p.ln2_bias, &p.w_ff1, &p.b_ff1, &p.w_ff2, &p.b_ff2};
}

Tensor permute_rows(const Tensor &x, const std::vector<std::size_t> &perm) {
  Tensor out(x.shape());
  const std::size_t row = x.size() / x.dim(0);
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(x.raw() + perm[i] * row, row, out.raw() + i * row);
  return out;
}

} // namespace

TEST_CASE("config validation") {
  EncoderConfig c = toy();
  c.num_heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = toy();
  c.num_layers = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_NOTHROW(toy().validate());
}

TEST_CASE("encode matches a loop implementation layer by layer") {
  const EncoderConfig cfg = toy(3, 8);
  EncoderParams params = EncoderParams::init(cfg);
  auto rng = testing::rng_for("encode-oracle");
  // Randomise the layer norms so they are not the identity.
  for (auto &layer : params.layers) {
    layer.ln1_gain = random_tensor({8}, rng);
    layer.ln2_bias = random_tensor({8}, rng);
  }
  const Tensor input = random_tensor({5, 8}, rng);
  const EmbeddingStack stack = encode(input, cfg, params);
  REQUIRE(stack.data.shape() == Shape{5, 8, 3});

  Tensor x = input;
  const Tensor pe = sinusoidal_positions(5, 8);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += pe[i];
  for (std::size_t l = 0; l < 3; ++l) {
    x = oracle::encoder_block(x, weights_of(params.layers[l]), cfg.num_heads);
    CHECK(max_abs_diff(stack.layer(l), x) <= 1e-12);
  }
}

TEST_CASE("single-layer encoder") {
  const EncoderConfig cfg = toy(1, 8);
  const EncoderParams params = EncoderParams::init(cfg);
  auto rng = testing::rng_for("single");
  const EmbeddingStack s = encode(random_tensor({4, 8}, rng), cfg, params);
  CHECK(s.layers() == 1);
  CHECK(s.frames() == 4);
}

TEST_CASE("zero input with zero output projections keeps the residual path") {
  EncoderConfig cfg = toy(2, 8);
  cfg.positional_encoding = false;
  EncoderParams params = EncoderParams::init(cfg);
  for (auto &layer : params.layers) {
    layer.w_o = Tensor(layer.w_o.shape());
    layer.b_o = Tensor(layer.b_o.shape());
    layer.w_ff2 = Tensor(layer.w_ff2.shape());
    layer.b_ff2 = Tensor(layer.b_ff2.shape());
  }
  const EmbeddingStack s = encode(Tensor({3, 8}), cfg, params);
  CHECK(s.data.shape() == Shape{3, 8, 2});
  CHECK(s.data == Tensor({3, 8, 2}));
}

TEST_CASE("encode is deterministic for a fixed seed") {
  const EncoderConfig cfg = toy(3, 8, 11);
  auto rng = testing::rng_for("determinism");
  const Tensor input = random_tensor({6, 8}, rng);
  const EmbeddingStack a = encode(input, cfg, EncoderParams::init(cfg));
  const EmbeddingStack b = encode(input, cfg, EncoderParams::init(cfg));
  CHECK(a.data == b.data);
  const EmbeddingStack c = encode(input, cfg, EncoderParams::init(toy(3, 8, 12)));
  CHECK_FALSE(a.data == c.data);
}

TEST_CASE("frame permutation: equivariant without positions, not with them") {
  EncoderConfig cfg = toy(2, 8);
  const EncoderParams params = EncoderParams::init(cfg);
  auto rng = testing::rng_for("perm");
  const Tensor input = random_tensor({5, 8}, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};

  cfg.positional_encoding = false;
  const Tensor plain = encode(input, cfg, params).data;
  const Tensor plain_perm = encode(permute_rows(input, perm), cfg, params).data;
  CHECK(max_abs_diff(permute_rows(plain, perm), plain_perm) <= 1e-12);

  cfg.positional_encoding = true;
  const Tensor pos = encode(input, cfg, params).data;
  const Tensor pos_perm = encode(permute_rows(input, perm), cfg, params).data;
  CHECK(max_abs_diff(permute_rows(pos, perm), pos_perm) > 1e-6);
}

TEST_CASE("encode rejects a mismatched input width") {
  const EncoderConfig cfg = toy(2, 8);
  CHECK_THROWS_AS(encode(Tensor({3, 6}), cfg, EncoderParams::init(cfg)), ShapeError);
}

TEST_CASE("truncate") {
  auto rng = testing::rng_for("truncate");
  const EmbeddingStack s{random_tensor({4, 3, 6}, rng), "u"};
  CHECK(truncate(s, 6).data == s.data);
  const EmbeddingStack one = truncate(s, 1);
  CHECK(one.layers() == 1);
  CHECK(one.layer(0) == s.layer(0));
  for (std::size_t k1 = 1; k1 <= 6; ++k1)
    for (std::size_t k2 = 1; k2 <= k1; ++k2) CHECK(truncate(truncate(s, k1), k2).data == truncate(s, k2).data);
  CHECK_THROWS_AS(truncate(s, 0), std::out_of_range);
  CHECK_THROWS_AS(truncate(s, 7), std::out_of_range);
}

TEST_CASE("truncation of a 24-layer stack") {
  auto rng = testing::rng_for("truncate24");
  const EmbeddingStack s{random_tensor({2, 4, 24}, rng), "u"};
  for (std::size_t k : {6, 10, 12, 18, 24}) CHECK(truncate(s, k).data.shape() == Shape{2, 4, k});
}

TEST_CASE("stack layers round-trip through from_layers") {
  auto rng = testing::rng_for("from-layers");
  std::vector<Tensor> layers;
  for (int l = 0; l < 3; ++l) layers.push_back(random_tensor({4, 5}, rng));
  const EmbeddingStack s = EmbeddingStack::from_layers(layers, "x");
  for (std::size_t l = 0; l < 3; ++l) CHECK(s.layer(l) == layers[l]);
}

TEST_CASE("refine_layers keeps each block on its own slice") {
  const EncoderConfig cfg = toy(3, 8);
  EncoderParams params = EncoderParams::init(cfg);
  auto rng = testing::rng_for("refine");
  Tensor stack = random_tensor({4, 8, 3}, rng);
  auto run = [&](const Tensor &s) {
    Tape tape;
    auto vars = bind_encoder(tape, params);
    return refine_layers(tape.constant(s), vars, cfg.num_heads).value();
  };
  const Tensor base = run(stack);
  for (std::size_t l = 0; l < 3; ++l) {
    const Tensor slice = EmbeddingStack{base, ""}.layer(l);
    const Tensor expected = oracle::encoder_block(EmbeddingStack{stack, ""}.layer(l),
                                                  weights_of(params.layers[l]), cfg.num_heads);
    CHECK(max_abs_diff(slice, expected) <= 1e-12);
  }
  // Perturbing layer 1 changes only output slice 1.
  Tensor bumped = stack;
  for (std::size_t i = 1; i < bumped.size(); i += 3) bumped[i] += 0.5;
  const EmbeddingStack after{run(bumped), ""};
  CHECK(after.layer(0) == EmbeddingStack{base, ""}.layer(0));
  CHECK(after.layer(2) == EmbeddingStack{base, ""}.layer(2));
  CHECK_FALSE(after.layer(1) == EmbeddingStack{base, ""}.layer(1));
}

TEST_CASE("frozen parameters are bound as constants") {
  const EncoderConfig cfg = toy(2, 8);
  EncoderParams params = EncoderParams::init(cfg);
  set_frozen(params, true);
  Tape tape;
  auto vars = bind_encoder(tape, params);
  CHECK_FALSE(vars[0].w_q.requires_grad());
  set_frozen(params, false);
  Tape tape2;
  CHECK(bind_encoder(tape2, params)[0].w_q.requires_grad());
}

TEST_CASE("full encoder stack passes the gradient check") {
  EncoderConfig cfg = toy(3, 8);
  EncoderParams params = EncoderParams::init(cfg);
  auto rng = testing::rng_for("encoder-grad");
  const Tensor input = random_tensor({5, 8}, rng);
  const Tensor r = random_tensor({5, 8, 3}, rng);
  std::vector<Tensor> flat = snapshot(params.refs());
  const auto report = grad_check(
      [&](Tape &tape, std::span<const Var> v) {
        Var out = encode(tape.constant(input), cfg, encoder_vars(v));
        return sum(mul(out, tape.constant(r)));
      },
      flat);
  CHECK(report.max_relative_error < 1e-4);
}
