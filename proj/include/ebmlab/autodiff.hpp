// Copyright 2026 The ebmlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over a small, fixed set of dense primitives.
//
// A Graph is an append-only tape. Tensors are cheap handles: either a node in
// a graph, or a detached constant carrying its own values. Operations on
// detached operands are evaluated eagerly and stay detached; mixing a detached
// operand with a tracked one lifts the former into the graph as a constant.
//
// Backward rules are written in terms of the same public operations. When a
// gradient is requested with retain=true, the rules run on tracked handles
// and the backward pass lands on the tape, so the result can be
// differentiated again (Hessian-vector products). With retain=false the
// rules run on detached values and nothing is appended.

#ifndef EBMLAB_AUTODIFF_HPP_
#define EBMLAB_AUTODIFF_HPP_

#include <array>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ebmlab/error.hpp"

namespace ebmlab {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array of doubles. Rank 0 is a scalar.
struct Array {
  Shape shape;
  std::vector<double> values;

  Array() : values(1, 0.0) {}
  Array(Shape s, std::vector<double> v);

  static Array scalar(double value);
  static Array zeros(Shape shape);
  static Array filled(Shape shape, double value);
  static Array vector(std::vector<double> values);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }
  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * shape[1], shape[1]};
  }
  std::span<double> row(std::size_t r) { return {values.data() + r * shape[1], shape[1]}; }

  bool operator==(const Array&) const = default;
};

enum class OpKind {
  kVariable,
  kConstant,
  // Public primitives.
  kAdd,
  kMul,
  kMatMul,
  kSum,
  kMean,
  kTanh,
  kSoftplus,
  kSquare,
  kNorm2,
  kDot,
  kAffine,
  // Helpers that backward rules are expressed with.
  kTranspose,
  kSigmoid,
  kSumRows,
  kBroadcastRows,
};

const char* op_name(OpKind kind);

class Graph;

class Tensor {
 public:
  Tensor() = default;
  // Detached constant.
  explicit Tensor(Array values);
  Tensor(double scalar);  // NOLINT: scalars read naturally in expressions

  const Array& array() const { return *data_; }
  const Shape& shape() const { return data_->shape; }
  std::span<const double> values() const { return data_->values; }
  std::size_t numel() const { return data_->values.size(); }
  // Value of a single-element tensor.
  double item() const;

  bool tracked() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::size_t node() const { return id_; }

  // Same values, no graph.
  Tensor detach() const;

 private:
  friend class Graph;
  Tensor(Graph* graph, std::size_t id, std::shared_ptr<const Array> data)
      : graph_(graph), id_(id), data_(std::move(data)) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
  std::shared_ptr<const Array> data_ = std::make_shared<const Array>();
};

struct Node {
  OpKind kind = OpKind::kConstant;
  std::array<std::size_t, 3> inputs{};
  std::size_t arity = 0;
  std::size_t attr = 0;  // row count for kBroadcastRows
  bool differentiable = false;  // depends on at least one variable
  std::shared_ptr<const Array> value;
};

// Confined to one thread. Not movable: tensors hold a pointer to it.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor variable(Array values);
  Tensor constant(Array values);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Tensor handle(std::size_t id);

  // True when `output` is a function of `input` through the tape.
  bool depends_on(const Tensor& output, const Tensor& input) const;

  // Drops every node appended after `mark`. Handles to dropped nodes become
  // dangling; detached results are unaffected.
  void rewind(std::size_t mark);

  // Adopts `t` into this graph (constants are lifted, foreign handles rejected).
  Tensor lift(const Tensor& t);

  Tensor append(OpKind kind, std::initializer_list<Tensor> inputs, Array value,
                std::size_t attr = 0);

 private:
  std::vector<Node> nodes_;
};

// Rewinds the graph to its current size on scope exit.
class GraphScope {
 public:
  explicit GraphScope(Graph& graph) : graph_(graph), mark_(graph.size()) {}
  ~GraphScope() { graph_.rewind(mark_); }
  GraphScope(const GraphScope&) = delete;
  GraphScope& operator=(const GraphScope&) = delete;

 private:
  Graph& graph_;
  std::size_t mark_;
};

// Elementwise; equal shapes or one operand a rank-0 scalar.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Rank-2 only.
Tensor matmul(const Tensor& a, const Tensor& b);
// Reductions to a rank-0 scalar. Summation is pairwise.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor tanh(const Tensor& a);
// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
// Squared Euclidean norm, sum of squares over all elements.
Tensor norm2(const Tensor& a);
// Sum of the elementwise product; shapes must match.
Tensor dot(const Tensor& a, const Tensor& b);
// x (n×i) · w (i×o) + b (o) broadcast over rows.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor transpose(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// (n×m) -> (m)
Tensor sum_rows(const Tensor& a);
// (m) -> (rows×m)
Tensor broadcast_rows(const Tensor& a, std::size_t rows);

Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(double c, const Tensor& a);

// Dispatch by kind, for the public primitives only.
Tensor forward_op(OpKind kind, std::span<const Tensor> inputs);

enum class Unreachable { kError, kZero };

// Reverse-mode gradient of a scalar `output` with respect to each of `wrt`.
// With `retain` the results are tracked tensors that can be differentiated
// again; otherwise they are detached and the graph is left untouched.
std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> wrt, bool retain,
                              Unreachable policy = Unreachable::kError);
Tensor gradient(const Tensor& output, const Tensor& wrt, bool retain);

// H v for H the Hessian of `scalar_output` with respect to `y`: runs a taped
// first backward pass, then differentiates v·∇f. A Hessian that is zero
// because ∇f does not depend on y yields zeros.
Tensor hvp(const Tensor& scalar_output, const Tensor& y, const Tensor& v, bool retain = false);

// Same, starting from a gradient the caller already computed. The gradient
// must have been taken with retain=true.
Tensor hvp_from_gradient(const Tensor& grad, const Tensor& y, const Tensor& v,
                         bool retain = false);

}  // namespace ebmlab

#endif  // EBMLAB_AUTODIFF_HPP_
