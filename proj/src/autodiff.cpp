// SPDX-License-Identifier: Apache-2.0
#include "attmerge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace attmerge {

const Tensor &Var::value() const { return tape->value(*this); }
bool Var::requires_grad() const { return tape->requires_grad(*this); }

const Tensor &BackwardContext::output() const { return tape_.nodes_[node_].value; }
const Tensor &BackwardContext::output_grad() const { return tape_.nodes_[node_].grad; }

const Tensor &BackwardContext::input(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[k]].value;
}

bool BackwardContext::needs_grad(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs[k]].requires_grad;
}

Tensor &BackwardContext::input_grad(std::size_t k) {
  return tape_.grad_slot(tape_.nodes_[node_].inputs[k]);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                    [&](std::size_t i) { return nodes_[i].requires_grad; });
  if (!needs_grad) {
    inputs.clear();
    backward = nullptr;
  }
  nodes_.push_back(Node{std::move(value), {}, needs_grad, std::move(inputs), std::move(backward)});
  return Var{this, nodes_.size() - 1};
}

Tensor &Tape::grad_slot(std::size_t id) {
  Node &node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: variable belongs to another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward: loss must be a single value, got shape " +
                     to_string(nodes_[loss.id].value.shape()));
  }
  for (auto &node : nodes_) node.grad = Tensor();
  grad_slot(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node &node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    BackwardContext ctx(*this, i);
    node.backward(ctx);
  }
}

Tensor Tape::grad(Var v) const {
  const Node &node = nodes_[v.id];
  return node.grad.empty() ? Tensor(node.value.shape()) : node.grad;
}

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
}

void require_same_shape(const char *op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
}

void accumulate(Tensor &dst, const Tensor &src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Elementwise op where the local derivative is a function of (x, y).
template <class Forward, class Derivative>
Var unary(Var x, Forward f, Derivative df) {
  Tensor y = x.value();
  for (auto &v : y.data()) v = f(v);
  return x.tape->record(std::move(y), {x.id}, [df](BackwardContext &ctx) {
    const Tensor &xv = ctx.input(0);
    const Tensor &yv = ctx.output();
    const Tensor &g = ctx.output_grad();
    Tensor &gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xv[i], yv[i]);
  });
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape &shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

double swish_derivative(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

} // namespace

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tensor c = matmul(a.value(), b.value());
  return a.tape->record(std::move(c), {a.id, b.id}, [](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    if (ctx.needs_grad(0)) accumulate(ctx.input_grad(0), matmul_nt(g, ctx.input(1)));
    if (ctx.needs_grad(1)) accumulate(ctx.input_grad(1), matmul_tn(ctx.input(0), g));
  });
}

Var transpose(Var a) {
  return a.tape->record(transpose(a.value()), {a.id}, [](BackwardContext &ctx) {
    accumulate(ctx.input_grad(0), transpose(ctx.output_grad()));
  });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  require_same_shape("add", a, b);
  Tensor c = a.value();
  accumulate(c, b.value());
  return a.tape->record(std::move(c), {a.id, b.id}, [](BackwardContext &ctx) {
    for (std::size_t k = 0; k < 2; ++k)
      if (ctx.needs_grad(k)) accumulate(ctx.input_grad(k), ctx.output_grad());
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  require_same_shape("sub", a, b);
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b.value()[i];
  return a.tape->record(std::move(c), {a.id, b.id}, [](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    if (ctx.needs_grad(0)) accumulate(ctx.input_grad(0), g);
    if (ctx.needs_grad(1)) {
      Tensor &gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  require_same_shape("mul", a, b);
  Tensor c = a.value();
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b.value()[i];
  return a.tape->record(std::move(c), {a.id, b.id}, [](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.needs_grad(k)) continue;
      const Tensor &other = ctx.input(1 - k);
      Tensor &gk = ctx.input_grad(k);
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[i] * other[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor c = a.value();
  for (auto &v : c.data()) v *= factor;
  return a.tape->record(std::move(c), {a.id}, [factor](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    Tensor &ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i];
  });
}

Var add_row(Var a, Var row) {
  check_same_tape(a, row);
  const Tensor &av = a.value();
  const Tensor &rv = row.value();
  if (av.rank() != 2 || rv.size() != av.dim(1) || rv.rank() > 2 ||
      (rv.rank() == 2 && rv.dim(0) != 1)) {
    throw ShapeError("add_row: cannot broadcast " + to_string(rv.shape()) + " over rows of " +
                     to_string(av.shape()));
  }
  const std::size_t m = av.dim(0), n = av.dim(1);
  Tensor c = av;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += rv[j];
  return a.tape->record(std::move(c), {a.id, row.id}, [m, n](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    if (ctx.needs_grad(0)) accumulate(ctx.input_grad(0), g);
    if (ctx.needs_grad(1)) {
      Tensor &gr = ctx.input_grad(1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

Var scale_last_axis(Var x, Var w) {
  check_same_tape(x, w);
  const Tensor &xv = x.value();
  const std::size_t n = xv.shape().back();
  if (w.value().size() != n) {
    throw ShapeError("scale_last_axis: weights " + to_string(w.shape()) +
                     " do not match last axis of " + to_string(xv.shape()));
  }
  Tensor y = xv;
  const Tensor &wv = w.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= wv[i % n];
  return x.tape->record(std::move(y), {x.id, w.id}, [n](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    if (ctx.needs_grad(0)) {
      const Tensor &wv = ctx.input(1);
      Tensor &gx = ctx.input_grad(0);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * wv[i % n];
    }
    if (ctx.needs_grad(1)) {
      const Tensor &xv = ctx.input(0);
      Tensor &gw = ctx.input_grad(1);
      for (std::size_t i = 0; i < xv.size(); ++i) gw[i % n] += g[i] * xv[i];
    }
  });
}

Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

Var swish(Var x) {
  return unary(
      x, [](double v) { return swish(v); }, [](double v, double) { return swish_derivative(v); });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
}

Var softplus(Var x) {
  return unary(
      x, [](double v) { return softplus(v); }, [](double v, double) { return sigmoid(v); });
}

Var safe_sqrt(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? std::sqrt(v) : 0.0; },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var mean_over_axis(Var x, std::size_t axis) {
  Tensor y = mean_over_axis(x.value(), axis);
  const AxisSplit s = split_at(x.shape(), axis);
  return x.tape->record(std::move(y), {x.id}, [s](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    Tensor &gx = ctx.input_grad(0);
    const double scale = 1.0 / static_cast<double>(s.n);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t a = 0; a < s.n; ++a)
        for (std::size_t i = 0; i < s.inner; ++i)
          gx[(o * s.n + a) * s.inner + i] += g[o * s.inner + i] * scale;
  });
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape->record(Tensor::scalar(total), {x.id}, [](BackwardContext &ctx) {
    const double g = ctx.output_grad()[0];
    for (auto &v : ctx.input_grad(0).data()) v += g;
  });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(y), {x.id}, [](BackwardContext &ctx) {
    accumulate(ctx.input_grad(0), ctx.output_grad());
  });
}

Var swap_last_axes(Var x) {
  const Tensor &xv = x.value();
  if (xv.rank() != 3) throw ShapeError("swap_last_axes: expected rank 3, got " + to_string(xv.shape()));
  const std::size_t a = xv.dim(0), b = xv.dim(1), c = xv.dim(2);
  Tensor y({a, c, b});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) y.at(i, k, j) = xv.at(i, j, k);
  return x.tape->record(std::move(y), {x.id}, [a, b, c](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    Tensor &gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t k = 0; k < c; ++k) gx.at(i, j, k) += g.at(i, k, j);
  });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape &shape = x.shape();
  if (axis >= shape.size() || length == 0 || start + length > shape[axis]) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                     " invalid for " + to_string(shape));
  }
  const AxisSplit s = split_at(shape, axis);
  Shape out_shape = shape;
  out_shape[axis] = length;
  Tensor y(out_shape);
  const Tensor &xv = x.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.raw() + (o * s.n + start) * s.inner, length * s.inner,
                y.raw() + o * length * s.inner);
  return x.tape->record(std::move(y), {x.id}, [s, start, length](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    Tensor &gx = ctx.input_grad(0);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < length * s.inner; ++i)
        gx[(o * s.n + start) * s.inner + i] += g[o * length * s.inner + i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape &first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: invalid axis for " + to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const Var &p : parts) {
    check_same_tape(parts[0], p);
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw ShapeError("concat: rank mismatch " + to_string(probe));
    widths.push_back(probe[axis]);
    out_shape[axis] += probe[axis];
    probe[axis] = first[axis];
    if (probe != first) {
      throw ShapeError("concat: " + to_string(p.shape()) + " incompatible with " +
                       to_string(first) + " along axis " + std::to_string(axis));
    }
    ids.push_back(p.id);
  }
  const AxisSplit s = split_at(out_shape, axis);
  Tensor y(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor &pv = parts[k].value();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.raw() + o * widths[k] * s.inner, widths[k] * s.inner,
                  y.raw() + (o * s.n + offset) * s.inner);
    offset += widths[k];
  }
  return parts[0].tape->record(std::move(y), std::move(ids), [s, widths](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (ctx.needs_grad(k)) {
        Tensor &gk = ctx.input_grad(k);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < widths[k] * s.inner; ++i)
            gk[o * widths[k] * s.inner + i] += g[(o * s.n + offset) * s.inner + i];
      }
      offset += widths[k];
    }
  });
}

Var stack_last_axis(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("stack_last_axis: no inputs");
  const Shape &first = parts[0].shape();
  std::vector<std::size_t> ids;
  for (const Var &p : parts) {
    check_same_tape(parts[0], p);
    if (p.shape() != first) {
      throw ShapeError("stack_last_axis: " + to_string(p.shape()) + " differs from " +
                       to_string(first));
    }
    ids.push_back(p.id);
  }
  const std::size_t n = parts.size();
  const std::size_t count = shape_size(first);
  Shape out_shape = first;
  out_shape.push_back(n);
  Tensor y(out_shape);
  for (std::size_t p = 0; p < n; ++p) {
    const Tensor &pv = parts[p].value();
    for (std::size_t i = 0; i < count; ++i) y[i * n + p] = pv[i];
  }
  return parts[0].tape->record(std::move(y), std::move(ids), [n, count](BackwardContext &ctx) {
    const Tensor &g = ctx.output_grad();
    for (std::size_t p = 0; p < n; ++p) {
      if (!ctx.needs_grad(p)) continue;
      Tensor &gp = ctx.input_grad(p);
      for (std::size_t i = 0; i < count; ++i) gp[i] += g[i * n + p];
    }
  });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor &xv = x.value();
  if (xv.rank() != 2 || axis > 1) {
    throw ShapeError("softmax: expected rank-2 input and axis 0 or 1, got " + to_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  // Element (line, pos) addresses position `pos` within the line being normalised.
  const std::size_t lines = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  auto index = [=](std::size_t line, std::size_t pos) {
    return axis == 1 ? line * cols + pos : pos * cols + line;
  };
  Tensor y(xv.shape());
  for (std::size_t line = 0; line < lines; ++line) {
    double peak = xv[index(line, 0)];
    for (std::size_t p = 1; p < len; ++p) peak = std::max(peak, xv[index(line, p)]);
    double total = 0.0;
    for (std::size_t p = 0; p < len; ++p) {
      const double e = std::exp(xv[index(line, p)] - peak);
      y[index(line, p)] = e;
      total += e;
    }
    for (std::size_t p = 0; p < len; ++p) y[index(line, p)] /= total;
  }
  return x.tape->record(std::move(y), {x.id}, [lines, len, index](BackwardContext &ctx) {
    const Tensor &yv = ctx.output();
    const Tensor &g = ctx.output_grad();
    Tensor &gx = ctx.input_grad(0);
    for (std::size_t line = 0; line < lines; ++line) {
      double dot = 0.0;
      for (std::size_t p = 0; p < len; ++p) dot += g[index(line, p)] * yv[index(line, p)];
      for (std::size_t p = 0; p < len; ++p) {
        const std::size_t i = index(line, p);
        gx[i] += yv[i] * (g[i] - dot);
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Tensor &xv = x.value();
  if (xv.rank() != 2 || gain.value().size() != xv.dim(1) || bias.value().size() != xv.dim(1)) {
    throw ShapeError("layer_norm: input " + to_string(xv.shape()) + " with gain " +
                     to_string(gain.shape()) + " and bias " + to_string(bias.shape()));
  }
  const std::size_t m = xv.dim(0), n = xv.dim(1);
  // Normalised input and per-row inverse std, shared by forward and backward.
  auto normalise = [m, n, eps](const Tensor &in, Tensor &xhat, std::vector<double> &inv_std) {
    xhat = Tensor(in.shape());
    inv_std.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double *row = in.raw() + i * n;
      double mean = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean += row[j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<double>(n);
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < n; ++j) xhat[i * n + j] = (row[j] - mean) * inv_std[i];
    }
  };
  Tensor xhat;
  std::vector<double> inv_std;
  normalise(xv, xhat, inv_std);
  Tensor y = xhat;
  const Tensor &gv = gain.value();
  const Tensor &bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = y[i * n + j] * gv[j] + bv[j];

  return x.tape->record(std::move(y), {x.id, gain.id, bias.id}, [m, n, normalise](BackwardContext &ctx) {
    Tensor xhat;
    std::vector<double> inv_std;
    normalise(ctx.input(0), xhat, inv_std);
    const Tensor &g = ctx.output_grad();
    const Tensor &gv = ctx.input(1);
    if (ctx.needs_grad(1)) {
      Tensor &gg = ctx.input_grad(1);
      for (std::size_t i = 0; i < m * n; ++i) gg[i % n] += g[i] * xhat[i];
    }
    if (ctx.needs_grad(2)) {
      Tensor &gb = ctx.input_grad(2);
      for (std::size_t i = 0; i < m * n; ++i) gb[i % n] += g[i];
    }
    if (ctx.needs_grad(0)) {
      Tensor &gx = ctx.input_grad(0);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[i * n + j] * gv[j];
          sum_d += d;
          sum_dx += d * xhat[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double d = g[i * n + j] * gv[j];
          gx[i * n + j] += inv_std[i] * (d - inv_n * sum_d - xhat[i * n + j] * inv_n * sum_dx);
        }
      }
    }
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor &z = logits.value();
  if (label >= z.size()) {
    throw ShapeError("cross_entropy: label " + std::to_string(label) + " out of range for logits " +
                     to_string(z.shape()));
  }
  double peak = z[0];
  for (double v : z.data()) peak = std::max(peak, v);
  double total = 0.0;
  for (double v : z.data()) total += std::exp(v - peak);
  const double lse = peak + std::log(total);
  return logits.tape->record(Tensor::scalar(lse - z[label]), {logits.id},
                             [label, lse](BackwardContext &ctx) {
                               const Tensor &z = ctx.input(0);
                               const double g = ctx.output_grad()[0];
                               Tensor &gz = ctx.input_grad(0);
                               for (std::size_t i = 0; i < z.size(); ++i) {
                                 const double p = std::exp(z[i] - lse);
                                 gz[i] += g * (p - (i == label ? 1.0 : 0.0));
                               }
                             });
}

namespace diagnostics {

Var swish_with_faulty_backward(Var x) {
  return unary(
      x, [](double v) { return swish(v); },
      [](double v, double) { return 1.5 * swish_derivative(v); });
}

} // namespace diagnostics

} // namespace attmerge
