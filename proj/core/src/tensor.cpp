// SPDX-License-Identifier: Apache-2.0
#include "selafd/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "kernels.hpp"
#include "selafd/error.hpp"

namespace selafd {

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4)
    throw DimensionError("tensor rank must be 1..4, got shape " + shape_string(shape));
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor& Tensor::set_requires_grad(bool flag) {
  requires_grad_ = flag;
  if (!flag) grad_.clear();
  return *this;
}

void Tensor::accumulate_grad(std::span<const double> delta) const {
  if (!requires_grad_) return;
  if (delta.size() != data_.size())
    throw DimensionError("gradient length " + std::to_string(delta.size()) + " does not match " +
                         shape_string(shape_));
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  for (std::size_t i = 0; i < delta.size(); ++i) grad_[i] += delta[i];
}

void Tensor::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("max_abs_diff shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor c({a.dim(0), b.dim(1)});
  kernels::gemm_nn(a.dim(0), a.dim(1), b.dim(1), a.data().data(), b.data().data(), c.data().data());
  return c;
}

Tensor transpose_plain(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose needs a matrix, got " + shape_string(a.shape()));
  Tensor t({a.dim(1), a.dim(0)});
  kernels::transpose(a.dim(0), a.dim(1), a.data().data(), t.data().data());
  return t;
}

Tensor add_plain(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

}  // namespace selafd
