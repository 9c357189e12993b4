// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace selafd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major float64 array of rank 1..4 with an optional gradient
/// buffer. Plain value type: copying a Tensor copies data and gradient.
///
/// Invariants: every dimension is positive, data().size() equals the
/// product of the shape, and grad (when present) has the same length.
/// A tensor with requires_grad() == false never accumulates gradient.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const { return !grad_.empty(); }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  /// Adds `delta` into the gradient buffer, allocating it on first use.
  /// No-op when requires_grad() is false. The gradient slot is bookkeeping
  /// beside the value, so this is callable on a const tensor.
  void accumulate_grad(std::span<const double> delta) const;
  void zero_grad();

  /// Same data viewed with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  mutable std::vector<double> grad_;
  bool requires_grad_ = false;
};

/// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Plain (non-recorded) matrix product, used by oracles and merge paths.
Tensor matmul_plain(const Tensor& a, const Tensor& b);
Tensor transpose_plain(const Tensor& a);
Tensor add_plain(const Tensor& a, const Tensor& b);

}  // namespace selafd
