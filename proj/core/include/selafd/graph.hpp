// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "selafd/tensor.hpp"

namespace selafd {

/// Handle to a value recorded on a Graph.
struct Var {
  std::uint32_t id = 0;
};

enum class OpKind : std::uint8_t {
  kParam,
  kInput,
  kMatMul,
  kLinear,
  kAdd,
  kAddBias,
  kScale,
  kRelu,
  kGelu,
  kSoftmax,
  kLayerNorm,
  kTranspose,
  kSliceCols,
  kConcatCols,
  kConcatRows,
  kRow,
  kReshape,
  kSum,
  kMean,
  kCrossEntropy,
};

const char* op_name(OpKind kind);

/// Reverse-mode tape. Every op appends one node whose inputs were recorded
/// earlier, so creation order is a topological order and backward() walks
/// the tape once in reverse.
///
/// Parameters enter through param(), which references (does not copy) the
/// caller's tensor; the tensor must outlive the graph. Gradients reach a
/// parameter only when it requires grad, and nodes that no trainable
/// parameter feeds are skipped entirely during backward.
///
/// References returned by value() stay valid for the life of the graph.
/// A Graph is single-threaded and single-use: backward() may run once.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var param(const Tensor& tensor);
  Var input(Tensor value);

  /// a[m x k] * b[k x n]
  Var matmul(Var a, Var b);
  /// x[m x k] * W^T + bias, W stored as [n x k] (output-major), bias [n].
  Var linear(Var x, Var weight, Var bias);
  Var linear(Var x, Var weight);
  Var add(Var a, Var b);
  /// a[m x n] + bias broadcast over rows, bias [n].
  Var add_bias(Var a, Var bias);
  Var scale(Var a, double factor);
  Var relu(Var a);
  /// tanh approximation.
  Var gelu(Var a);
  Var softmax(Var a, std::size_t axis);
  /// Normalizes over the last axis; gamma and beta have that axis' length.
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  Var transpose(Var a);
  Var slice_cols(Var a, std::size_t begin, std::size_t count);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var row(Var a, std::size_t index);
  Var reshape(Var a, Shape shape);
  Var sum(Var a);
  Var mean(Var a);
  /// Mean over rows of -log softmax(logits)[label]; logits [B x C].
  Var cross_entropy(Var logits, std::span<const int> labels);

  const Tensor& value(Var v) const;
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::span<const std::uint32_t> inputs(Var v) const { return nodes_.at(v.id).inputs; }
  bool needs_grad(Var v) const { return nodes_.at(v.id).needs_grad; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Propagates d(loss)/d(.) to every trainable parameter on the tape.
  /// `loss` must be a single-element tensor.
  void backward(Var loss);

  /// Gradient of the loss w.r.t. an intermediate value; empty before
  /// backward() or when no trainable parameter feeds the node.
  std::span<const double> grad(Var v) const { return nodes_.at(v.id).grad; }

 private:
  struct Node {
    Node() = default;
    explicit Node(OpKind k, std::vector<std::uint32_t> in = {}) : kind(k), inputs(std::move(in)) {}

    OpKind kind = OpKind::kInput;
    std::vector<std::uint32_t> inputs;
    Tensor value;
    const Tensor* param = nullptr;
    std::vector<double> grad;
    std::vector<double> saved;
    std::vector<int> labels;
    double scalar = 0.0;
    std::size_t index0 = 0;
    std::size_t index1 = 0;
    bool needs_grad = false;
  };

  Var push(Node node);
  Node& node(Var v) { return nodes_.at(v.id); }
  const Node& node(Var v) const { return nodes_.at(v.id); }
  std::vector<double>& grad_buffer(std::uint32_t id);
  void backward_node(std::uint32_t id);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace selafd
