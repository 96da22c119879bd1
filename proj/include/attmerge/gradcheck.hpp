// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "attmerge/autodiff.hpp"

namespace attmerge {

/// Scalar loss built on `tape` from leaf variables bound to the parameters,
/// in the order the parameters were supplied.
using ScalarFunction = std::function<Var(Tape &tape, std::span<const Var> params)>;

class NonFiniteLossError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences
/// (f(p + h) - f(p - h)) / 2h over every entry of every parameter. The error
/// for one entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport grad_check(const ScalarFunction &f, std::span<const Tensor> params,
                           double h = 1e-5);

} // namespace attmerge
