// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace attmerge {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes do not conform. The message names every shape
/// involved.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape &shape);
std::size_t shape_size(const Shape &shape);

/// Dense row-major array of float64 values.
///
/// A tensor always satisfies `shape_size(shape()) == size()`. Rank-0 tensors
/// are not used; scalars are represented with shape {1}.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, double fill);

  /// 2-D tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor scalar(double value);

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double *raw() { return data_.data(); }
  const double *raw() const { return data_.data(); }

  double &operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double &at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double &at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  /// Same data viewed with a new shape of equal element count.
  Tensor reshaped(Shape shape) const &;
  Tensor reshaped(Shape shape) &&;

  /// Single value of a one-element tensor.
  double item() const;

  bool all_finite() const;

  friend bool operator==(const Tensor &, const Tensor &) = default;

private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor &a, const Tensor &b);

// Plain (non-differentiable) kernels. The differentiable overloads in
// autodiff.hpp forward to these.

Tensor matmul(const Tensor &a, const Tensor &b);
/// a · bᵀ
Tensor matmul_nt(const Tensor &a, const Tensor &b);
/// aᵀ · b
Tensor matmul_tn(const Tensor &a, const Tensor &b);
Tensor transpose(const Tensor &a);

double sigmoid(double x);
double swish(double x);
double softplus(double x);

Tensor sigmoid(const Tensor &x);
Tensor swish(const Tensor &x);

/// Arithmetic mean along `axis`; the result drops that axis (a rank-1 input
/// yields shape {1}).
Tensor mean_over_axis(const Tensor &x, std::size_t axis);

} // namespace attmerge
