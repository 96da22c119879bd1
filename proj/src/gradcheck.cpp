// SPDX-License-Identifier: Apache-2.0
#include "attmerge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace attmerge {

namespace {

double evaluate(const ScalarFunction &f, const std::vector<Tensor> &params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto &p : params) vars.push_back(tape.constant(p));
  const double loss = f(tape, vars).value().item();
  if (!std::isfinite(loss)) throw NonFiniteLossError("grad_check: loss is not finite");
  return loss;
}

} // namespace

GradCheckReport grad_check(const ScalarFunction &f, std::span<const Tensor> params, double h) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto &p : params) vars.push_back(tape.parameter(p));
    Var loss = f(tape, vars);
    if (!std::isfinite(loss.value().item())) {
      throw NonFiniteLossError("grad_check: loss is not finite");
    }
    tape.backward(loss);
    for (const Var &v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  std::vector<Tensor> probe(params.begin(), params.end());
  for (std::size_t p = 0; p < probe.size(); ++p) {
    for (std::size_t i = 0; i < probe[p].size(); ++i) {
      const double original = probe[p][i];
      probe[p][i] = original + h;
      const double up = evaluate(f, probe);
      probe[p][i] = original - h;
      const double down = evaluate(f, probe);
      probe[p][i] = original;

      const double numeric = (up - down) / (2.0 * h);
      const double exact = analytic[p][i];
      const double denom = std::max({1.0, std::abs(exact), std::abs(numeric)});
      const double err = std::abs(exact - numeric) / denom;
      if (err > report.max_relative_error || (p == 0 && i == 0)) {
        report = GradCheckReport{err, p, i, exact, numeric};
      }
    }
  }
  return report;
}

} // namespace attmerge
