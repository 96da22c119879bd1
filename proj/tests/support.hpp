// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "attmerge/random.hpp"
#include "attmerge/tensor.hpp"

namespace testing {

using attmerge::Rng;
using attmerge::Shape;
using attmerge::Tensor;

inline Rng rng_for(std::string_view name, std::uint64_t index = 0) {
  return attmerge::make_rng(20240917, name, index);
}

inline Tensor random_tensor(Shape shape, Rng &rng, double stddev = 1.0) {
  return attmerge::normal_tensor(std::move(shape), stddev, rng);
}

inline std::size_t uniform_int(Rng &rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_abs_diff(const std::vector<double> &a, const std::vector<double> &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : 1e300;
}

inline std::vector<double> values(const Tensor &t) { return {t.data().begin(), t.data().end()}; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(std::string_view tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("attmerge-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
  std::filesystem::path path_;
};

} // namespace testing
