// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "attmerge/tensor.hpp"

namespace attmerge {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
struct Var {
  Tape *tape = nullptr;
  std::size_t id = 0;

  const Tensor &value() const;
  Shape shape() const { return value().shape(); }
  bool requires_grad() const;
};

/// Gives an op's backward function access to its inputs, its output, and the
/// incoming gradient. Input gradients are allocated on first use.
class BackwardContext {
public:
  const Tensor &output() const;
  const Tensor &output_grad() const;
  const Tensor &input(std::size_t k) const;
  bool needs_grad(std::size_t k) const;
  /// Accumulator for input k's gradient; only valid when needs_grad(k).
  Tensor &input_grad(std::size_t k);

private:
  friend class Tape;
  BackwardContext(Tape &tape, std::size_t node) : tape_(tape), node_(node) {}
  Tape &tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext &)>;

/// Ordered record of primitive operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node
/// list is a valid topological order. Ops whose inputs are all constants are
/// recorded without a backward function.
class Tape {
public:
  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Var constant(Tensor value);
  Var parameter(Tensor value);
  Var leaf(Tensor value, bool requires_grad) {
    return requires_grad ? parameter(std::move(value)) : constant(std::move(value));
  }

  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. `loss` must hold
  /// exactly one element.
  void backward(Var loss);

  const Tensor &value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient accumulated for v; a zero tensor when none flowed.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  Tensor &grad_slot(std::size_t id);

  std::vector<Node> nodes_;
};

// Differentiable primitives. Every op checks shapes and throws ShapeError
// naming the operands.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// m×n plus a 1×n (or n) row broadcast over rows.
Var add_row(Var a, Var row);
/// x[..., l] · w[l] for every leading index; w has length x.shape().back().
Var scale_last_axis(Var x, Var w);

Var sigmoid(Var x);
Var swish(Var x);
Var tanh(Var x);
Var gelu(Var x);
Var softplus(Var x);
/// sqrt(x) for x > 0, 0 otherwise (gradient 0 where the output is 0).
Var safe_sqrt(Var x);

Var mean_over_axis(Var x, std::size_t axis);
Var sum(Var x);

Var reshape(Var x, Shape shape);
/// Rank-3 [a][b][c] -> [a][c][b].
Var swap_last_axes(Var x);
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
Var concat(std::span<const Var> parts, std::size_t axis);
/// Stacks equally shaped tensors along a new trailing axis.
Var stack_last_axis(std::span<const Var> parts);

/// Softmax along `axis` of a rank-2 tensor.
Var softmax(Var x, std::size_t axis);
/// Layer normalisation over the last axis of a rank-2 tensor.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// -log softmax(logits)[label] for a logits tensor of n elements.
Var cross_entropy(Var logits, std::size_t label);

namespace diagnostics {
/// Swish whose backward pass is deliberately wrong by a factor of 1.5. Used
/// as a negative control for the gradient checker.
Var swish_with_faulty_backward(Var x);
} // namespace diagnostics

} // namespace attmerge
