// SPDX-License-Identifier: Apache-2.0
#include "selafd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "selafd/error.hpp"

namespace selafd {

namespace {

constexpr double kGeluC = 0.7978845608;
constexpr double kGeluA = 0.044715;

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

// Outer/axis/inner decomposition for reductions along one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kParam: return "param";
    case OpKind::kInput: return "input";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kLinear: return "linear";
    case OpKind::kAdd: return "add";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kScale: return "scale";
    case OpKind::kRelu: return "relu";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kRow: return "row";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

Var Graph::push(Node n) {
  if (backward_done_) throw ContractError("cannot record onto a graph after backward()");
  if (n.kind != OpKind::kParam && n.kind != OpKind::kInput) {
    n.needs_grad = std::any_of(n.inputs.begin(), n.inputs.end(),
                               [this](std::uint32_t id) { return nodes_[id].needs_grad; });
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = node(v);
  return n.kind == OpKind::kParam ? *n.param : n.value;
}

Var Graph::param(const Tensor& tensor) {
  Node n;
  n.kind = OpKind::kParam;
  n.param = &tensor;
  n.needs_grad = tensor.requires_grad();
  return push(std::move(n));
}

Var Graph::input(Tensor value) {
  Node n;
  n.kind = OpKind::kInput;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0))
    throw DimensionError("matmul shape mismatch: " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  Node n{OpKind::kMatMul, {a.id, b.id}};
  n.value = Tensor({av.dim(0), bv.dim(1)});
  kernels::gemm_nn(av.dim(0), av.dim(1), bv.dim(1), av.data().data(), bv.data().data(),
                   n.value.data().data());
  return push(std::move(n));
}

Var Graph::linear(Var x, Var weight, Var bias) {
  const Tensor& bv = value(bias);
  const Tensor& wv = value(weight);
  if (bv.rank() != 1 || wv.rank() != 2 || bv.dim(0) != wv.dim(0))
    throw DimensionError("linear bias " + shape_string(bv.shape()) + " does not match weight " +
                         shape_string(wv.shape()));
  Var y = linear(x, weight);
  Node& n = node(y);
  n.inputs.push_back(bias.id);
  n.needs_grad = n.needs_grad || node(bias).needs_grad;
  const std::size_t cols = bv.dim(0);
  auto out = n.value.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cols];
  return y;
}

Var Graph::linear(Var x, Var weight) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1))
    throw DimensionError("linear shape mismatch: input " + shape_string(xv.shape()) + " vs weight " +
                         shape_string(wv.shape()));
  Node n{OpKind::kLinear, {x.id, weight.id}};
  n.value = Tensor({xv.dim(0), wv.dim(0)});
  kernels::gemm_nt(xv.dim(0), xv.dim(1), wv.dim(0), xv.data().data(), wv.data().data(),
                   n.value.data().data());
  return push(std::move(n));
}

Var Graph::add(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.shape() != bv.shape())
    throw DimensionError("add shape mismatch: " + shape_string(av.shape()) + " vs " +
                         shape_string(bv.shape()));
  Node n{OpKind::kAdd, {a.id, b.id}};
  n.value = Tensor(av.shape(), std::vector<double>(av.data().begin(), av.data().end()));
  auto out = n.value.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(n));
}

Var Graph::add_bias(Var a, Var bias) {
  const Tensor& av = value(a);
  const Tensor& bv = value(bias);
  if (av.rank() != 2 || bv.rank() != 1 || bv.dim(0) != av.dim(1))
    throw DimensionError("add_bias shape mismatch: " + shape_string(av.shape()) + " + " +
                         shape_string(bv.shape()));
  Node n{OpKind::kAddBias, {a.id, bias.id}};
  n.value = Tensor(av.shape(), std::vector<double>(av.data().begin(), av.data().end()));
  const std::size_t cols = bv.dim(0);
  auto out = n.value.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % cols];
  return push(std::move(n));
}

Var Graph::scale(Var a, double factor) {
  const Tensor& av = value(a);
  Node n{OpKind::kScale, {a.id}};
  n.scalar = factor;
  n.value = Tensor(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = factor * av[i];
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  const Tensor& av = value(a);
  Node n{OpKind::kRelu, {a.id}};
  n.value = Tensor(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) n.value[i] = av[i] > 0.0 ? av[i] : 0.0;
  return push(std::move(n));
}

Var Graph::gelu(Var a) {
  const Tensor& av = value(a);
  Node n{OpKind::kGelu, {a.id}};
  n.value = Tensor(av.shape());
  n.saved.resize(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    n.saved[i] = t;
    n.value[i] = 0.5 * x * (1.0 + t);
  }
  return push(std::move(n));
}

Var Graph::softmax(Var a, std::size_t axis) {
  const Tensor& av = value(a);
  if (axis >= av.rank())
    throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " +
                         shape_string(av.shape()));
  Node n{OpKind::kSoftmax, {a.id}};
  n.index0 = axis;
  n.value = Tensor(av.shape());
  const AxisSplit s = split_axis(av.shape(), axis);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.len; ++k) mx = std::max(mx, av[base + k * s.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        const double e = std::exp(av[base + k * s.inner] - mx);
        n.value[base + k * s.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) n.value[base + k * s.inner] /= total;
    }
  }
  return push(std::move(n));
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = value(x);
  const Tensor& gv = value(gamma);
  const Tensor& bv = value(beta);
  const std::size_t width = xv.shape().back();
  if (gv.rank() != 1 || bv.rank() != 1 || gv.dim(0) != width || bv.dim(0) != width)
    throw DimensionError("layer_norm affine " + shape_string(gv.shape()) + "/" +
                         shape_string(bv.shape()) + " does not match input " +
                         shape_string(xv.shape()));
  Node n{OpKind::kLayerNorm, {x.id, gamma.id, beta.id}};
  n.scalar = eps;
  n.value = Tensor(xv.shape());
  const std::size_t rows = xv.size() / width;
  // saved: normalized x (rows*width) followed by 1/sigma per row
  n.saved.resize(rows * width + rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data().data() + r * width;
    double mu = 0.0;
    for (std::size_t j = 0; j < width; ++j) mu += xr[j];
    mu /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(width);
    const double rstd = 1.0 / std::sqrt(var + eps);
    n.saved[rows * width + r] = rstd;
    for (std::size_t j = 0; j < width; ++j) {
      const double xhat = (xr[j] - mu) * rstd;
      n.saved[r * width + j] = xhat;
      n.value[r * width + j] = gv[j] * xhat + bv[j];
    }
  }
  return push(std::move(n));
}

Var Graph::transpose(Var a) {
  const Tensor& av = value(a);
  require_matrix(av, "transpose");
  Node n{OpKind::kTranspose, {a.id}};
  n.value = transpose_plain(av);
  return push(std::move(n));
}

Var Graph::slice_cols(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = value(a);
  require_matrix(av, "slice_cols");
  if (count == 0 || begin + count > av.dim(1))
    throw DimensionError("slice_cols [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of range for " + shape_string(av.shape()));
  Node n{OpKind::kSliceCols, {a.id}};
  n.index0 = begin;
  n.index1 = count;
  const std::size_t rows = av.dim(0);
  n.value = Tensor({rows, count});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) n.value.at(r, c) = av.at(r, begin + c);
  return push(std::move(n));
}

Var Graph::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols needs at least one part");
  const std::size_t rows = value(parts[0]).dim(0);
  std::size_t cols = 0;
  Node n;
  n.kind = OpKind::kConcatCols;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    require_matrix(pv, "concat_cols");
    if (pv.dim(0) != rows)
      throw DimensionError("concat_cols row mismatch: " + shape_string(value(parts[0]).shape()) +
                           " vs " + shape_string(pv.shape()));
    cols += pv.dim(1);
    n.inputs.push_back(p.id);
  }
  n.value = Tensor({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.dim(1); ++c) n.value.at(r, offset + c) = pv.at(r, c);
    offset += pv.dim(1);
  }
  return push(std::move(n));
}

Var Graph::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows needs at least one part");
  const std::size_t cols = value(parts[0]).dim(1);
  std::size_t rows = 0;
  Node n;
  n.kind = OpKind::kConcatRows;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    require_matrix(pv, "concat_rows");
    if (pv.dim(1) != cols)
      throw DimensionError("concat_rows column mismatch: " + shape_string(value(parts[0]).shape()) +
                           " vs " + shape_string(pv.shape()));
    rows += pv.dim(0);
    n.inputs.push_back(p.id);
  }
  n.value = Tensor({rows, cols});
  std::size_t offset = 0;
  for (Var p : parts) {
    const auto src = value(p).data();
    std::copy(src.begin(), src.end(), n.value.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  return push(std::move(n));
}

Var Graph::row(Var a, std::size_t index) {
  const Tensor& av = value(a);
  require_matrix(av, "row");
  if (index >= av.dim(0))
    throw DimensionError("row " + std::to_string(index) + " out of range for " + shape_string(av.shape()));
  Node n{OpKind::kRow, {a.id}};
  n.index0 = index;
  const std::size_t cols = av.dim(1);
  n.value = Tensor({1, cols});
  std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(index * cols), cols, n.value.data().begin());
  return push(std::move(n));
}

Var Graph::reshape(Var a, Shape shape) {
  Node n{OpKind::kReshape, {a.id}};
  n.value = value(a).reshaped(std::move(shape));
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  const Tensor& av = value(a);
  Node n{OpKind::kSum, {a.id}};
  double total = 0.0;
  for (double v : av.data()) total += v;
  n.value = Tensor({1}, total);
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  const Tensor& av = value(a);
  Node n{OpKind::kMean, {a.id}};
  double total = 0.0;
  for (double v : av.data()) total += v;
  n.value = Tensor({1}, total / static_cast<double>(av.size()));
  return push(std::move(n));
}

Var Graph::cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& lv = value(logits);
  require_matrix(lv, "cross_entropy");
  const std::size_t batch = lv.dim(0);
  const std::size_t classes = lv.dim(1);
  if (labels.size() != batch)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(lv.shape()));
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  Node n{OpKind::kCrossEntropy, {logits.id}};
  n.labels.assign(labels.begin(), labels.end());
  n.saved.resize(lv.size());  // softmax probabilities
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = lv.data().data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) n.saved[b * classes + c] = std::exp(row[c] - lse);
    total += lse - row[labels[b]];
  }
  n.value = Tensor({1}, total / static_cast<double>(batch));
  return push(std::move(n));
}

std::vector<double>& Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(Var{id}).size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (backward_done_) throw ContractError("backward() already ran on this graph");
  const Tensor& lv = value(loss);
  if (lv.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(lv.shape()));
  backward_done_ = true;
  if (!node(loss).needs_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.kind == OpKind::kParam) {
      n.param->accumulate_grad(n.grad);
      continue;
    }
    backward_node(id);
  }
}

void Graph::backward_node(std::uint32_t id) {
  // Take a copy of the pieces we need: grad_buffer() may grow other nodes'
  // buffers but never reallocates nodes_, so references stay valid.
  Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  auto wants = [this](std::uint32_t in) { return nodes_[in].needs_grad; };

  switch (n.kind) {
    case OpKind::kParam:
    case OpKind::kInput:
      break;

    case OpKind::kMatMul: {
      const Tensor& a = value(Var{n.inputs[0]});
      const Tensor& b = value(Var{n.inputs[1]});
      const std::size_t m = a.dim(0), k = a.dim(1), cols = b.dim(1);
      if (wants(n.inputs[0]))  // dA = dC * B^T
        kernels::gemm_nt(m, cols, k, g.data(), b.data().data(), grad_buffer(n.inputs[0]).data());
      if (wants(n.inputs[1]))  // dB = A^T * dC
        kernels::gemm_tn(m, k, cols, a.data().data(), g.data(), grad_buffer(n.inputs[1]).data());
      break;
    }

    case OpKind::kLinear: {
      const Tensor& x = value(Var{n.inputs[0]});
      const Tensor& w = value(Var{n.inputs[1]});
      const std::size_t m = x.dim(0), k = x.dim(1), out = w.dim(0);
      if (wants(n.inputs[0]))  // dX = dY * W
        kernels::gemm_nn(m, out, k, g.data(), w.data().data(), grad_buffer(n.inputs[0]).data());
      if (wants(n.inputs[1]))  // dW = dY^T * X
        kernels::gemm_tn(m, out, k, g.data(), x.data().data(), grad_buffer(n.inputs[1]).data());
      if (n.inputs.size() == 3 && wants(n.inputs[2])) {
        auto& gb = grad_buffer(n.inputs[2]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % out] += g[i];
      }
      break;
    }

    case OpKind::kAdd:
      for (int side = 0; side < 2; ++side) {
        if (!wants(n.inputs[side])) continue;
        auto& ga = grad_buffer(n.inputs[side]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;

    case OpKind::kAddBias: {
      if (wants(n.inputs[0])) {
        auto& ga = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(n.inputs[1])) {
        auto& gb = grad_buffer(n.inputs[1]);
        const std::size_t cols = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
      }
      break;
    }

    case OpKind::kScale: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
      break;
    }

    case OpKind::kRelu: {
      const Tensor& a = value(Var{n.inputs[0]});
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
      break;
    }

    case OpKind::kGelu: {
      const Tensor& a = value(Var{n.inputs[0]});
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a[i];
        const double t = n.saved[i];
        const double dinner = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        ga[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner);
      }
      break;
    }

    case OpKind::kSoftmax: {
      const Tensor& y = n.value;
      auto& ga = grad_buffer(n.inputs[0]);
      const AxisSplit s = split_axis(y.shape(), n.index0);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.len * s.inner + in;
          double dot = 0.0;
          for (std::size_t k = 0; k < s.len; ++k) {
            const std::size_t i = base + k * s.inner;
            dot += g[i] * y[i];
          }
          for (std::size_t k = 0; k < s.len; ++k) {
            const std::size_t i = base + k * s.inner;
            ga[i] += y[i] * (g[i] - dot);
          }
        }
      }
      break;
    }

    case OpKind::kLayerNorm: {
      const Tensor& gamma = value(Var{n.inputs[1]});
      const std::size_t width = gamma.dim(0);
      const std::size_t rows = g.size() / width;
      const double* xhat = n.saved.data();
      const double* rstd = n.saved.data() + rows * width;
      if (wants(n.inputs[1])) {
        auto& gg = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gg[i % width] += g[i] * xhat[i];
      }
      if (wants(n.inputs[2])) {
        auto& gb = grad_buffer(n.inputs[2]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % width] += g[i];
      }
      if (wants(n.inputs[0])) {
        auto& gx = grad_buffer(n.inputs[0]);
        const double inv_w = 1.0 / static_cast<double>(width);
        for (std::size_t r = 0; r < rows; ++r) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            const double d = g[r * width + j] * gamma[j];
            mean_d += d;
            mean_dx += d * xhat[r * width + j];
          }
          mean_d *= inv_w;
          mean_dx *= inv_w;
          for (std::size_t j = 0; j < width; ++j) {
            const std::size_t i = r * width + j;
            const double d = g[i] * gamma[j];
            gx[i] += rstd[r] * (d - mean_d - xhat[i] * mean_dx);
          }
        }
      }
      break;
    }

    case OpKind::kTranspose: {
      auto& ga = grad_buffer(n.inputs[0]);
      const std::size_t rows = n.value.dim(0), cols = n.value.dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) ga[c * rows + r] += g[r * cols + c];
      break;
    }

    case OpKind::kSliceCols: {
      auto& ga = grad_buffer(n.inputs[0]);
      const std::size_t src_cols = value(Var{n.inputs[0]}).dim(1);
      const std::size_t rows = n.value.dim(0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n.index1; ++c) ga[r * src_cols + n.index0 + c] += g[r * n.index1 + c];
      break;
    }

    case OpKind::kConcatCols: {
      const std::size_t rows = n.value.dim(0), total = n.value.dim(1);
      std::size_t offset = 0;
      for (std::uint32_t in : n.inputs) {
        const std::size_t cols = value(Var{in}).dim(1);
        if (wants(in)) {
          auto& ga = grad_buffer(in);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r * total + offset + c];
        }
        offset += cols;
      }
      break;
    }

    case OpKind::kConcatRows: {
      std::size_t offset = 0;
      for (std::uint32_t in : n.inputs) {
        const std::size_t len = value(Var{in}).size();
        if (wants(in)) {
          auto& ga = grad_buffer(in);
          for (std::size_t i = 0; i < len; ++i) ga[i] += g[offset + i];
        }
        offset += len;
      }
      break;
    }

    case OpKind::kRow: {
      auto& ga = grad_buffer(n.inputs[0]);
      const std::size_t cols = g.size();
      for (std::size_t c = 0; c < cols; ++c) ga[n.index0 * cols + c] += g[c];
      break;
    }

    case OpKind::kReshape: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      break;
    }

    case OpKind::kSum: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (double& v : ga) v += g[0];
      break;
    }

    case OpKind::kMean: {
      auto& ga = grad_buffer(n.inputs[0]);
      const double share = g[0] / static_cast<double>(ga.size());
      for (double& v : ga) v += share;
      break;
    }

    case OpKind::kCrossEntropy: {
      auto& ga = grad_buffer(n.inputs[0]);
      const std::size_t batch = n.labels.size();
      const std::size_t classes = ga.size() / batch;
      const double share = g[0] / static_cast<double>(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < classes; ++c) {
          const double target = static_cast<int>(c) == n.labels[b] ? 1.0 : 0.0;
          ga[b * classes + c] += share * (n.saved[b * classes + c] - target);
        }
      }
      break;
    }
  }
}

}  // namespace selafd
