// SPDX-License-Identifier: Apache-2.0
#include "attmerge/random.hpp"

namespace attmerge {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  // FNV-1a over the stream name, then mixed with the root seed and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

Tensor uniform_tensor(Shape shape, double bound, Rng &rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto &v : t.data()) v = dist(rng);
  return t;
}

Tensor normal_tensor(Shape shape, double stddev, Rng &rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto &v : t.data()) v = dist(rng);
  return t;
}

} // namespace attmerge
