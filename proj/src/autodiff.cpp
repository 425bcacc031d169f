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

#include "ebmlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace ebmlab {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Array::Array(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("array: shape " + shape_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
}

Array Array::scalar(double value) { return Array({}, {value}); }

Array Array::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Array Array::filled(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Array(std::move(shape), std::vector<double>(n, value));
}

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Array({rows, cols}, std::move(values));
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kVariable: return "variable";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kSquare: return "square";
    case OpKind::kNorm2: return "norm2";
    case OpKind::kDot: return "dot";
    case OpKind::kAffine: return "affine";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSumRows: return "sum_rows";
    case OpKind::kBroadcastRows: return "broadcast_rows";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Array values) : data_(std::make_shared<const Array>(std::move(values))) {}

Tensor::Tensor(double scalar) : Tensor(Array::scalar(scalar)) {}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  }
  return data_->values[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.data_ = data_;
  return t;
}

// ---------------------------------------------------------------------------
// Graph

Tensor Graph::variable(Array values) {
  Node n;
  n.kind = OpKind::kVariable;
  n.differentiable = true;
  n.value = std::make_shared<const Array>(std::move(values));
  nodes_.push_back(n);
  return Tensor(this, nodes_.size() - 1, n.value);
}

Tensor Graph::constant(Array values) {
  Node n;
  n.kind = OpKind::kConstant;
  n.value = std::make_shared<const Array>(std::move(values));
  nodes_.push_back(n);
  return Tensor(this, nodes_.size() - 1, n.value);
}

Tensor Graph::handle(std::size_t id) { return Tensor(this, id, nodes_.at(id).value); }

Tensor Graph::lift(const Tensor& t) {
  if (t.graph() == this) return t;
  if (t.tracked()) throw GraphError("operands belong to different graphs");
  Node n;
  n.kind = OpKind::kConstant;
  n.value = t.data_;
  nodes_.push_back(n);
  return Tensor(this, nodes_.size() - 1, n.value);
}

Tensor Graph::append(OpKind kind, std::initializer_list<Tensor> inputs, Array value,
                     std::size_t attr) {
  Node n;
  n.kind = kind;
  n.attr = attr;
  for (const Tensor& in : inputs) {
    const Tensor lifted = lift(in);
    n.inputs[n.arity++] = lifted.node();
    n.differentiable = n.differentiable || nodes_[lifted.node()].differentiable;
  }
  n.value = std::make_shared<const Array>(std::move(value));
  nodes_.push_back(n);
  return Tensor(this, nodes_.size() - 1, n.value);
}

bool Graph::depends_on(const Tensor& output, const Tensor& input) const {
  if (output.graph() != this || input.graph() != this) return false;
  const std::size_t lo = input.node();
  const std::size_t hi = output.node();
  if (hi < lo) return false;
  std::vector<char> reach(hi - lo + 1, 0);
  reach[0] = 1;
  for (std::size_t i = lo + 1; i <= hi; ++i) {
    const Node& n = nodes_[i];
    for (std::size_t k = 0; k < n.arity; ++k) {
      const std::size_t j = n.inputs[k];
      if (j >= lo && reach[j - lo]) {
        reach[i - lo] = 1;
        break;
      }
    }
  }
  return reach[hi - lo] != 0;
}

void Graph::rewind(std::size_t mark) {
  if (mark < nodes_.size()) nodes_.resize(mark);
}

// ---------------------------------------------------------------------------
// Forward kernels

namespace {

double pairwise_sum(const double* p, std::size_t n) {
  if (n <= 16) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(p, half) + pairwise_sum(p + half, n - half);
}

[[noreturn]] void shape_mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": shape mismatch " + shape_string(a) + " vs " +
                   shape_string(b));
}

void check_finite(OpKind kind, const Array& out) {
  for (double v : out.values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op_name(kind)) + ": produced a non-finite value");
    }
  }
}

bool is_scalar(const Shape& s) { return s.empty(); }

template <typename F>
Array broadcast_binary(OpKind kind, const Array& a, const Array& b, F f) {
  if (a.shape == b.shape) {
    Array out = Array::zeros(a.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = f(a.values[i], b.values[i]);
    return out;
  }
  if (is_scalar(a.shape)) {
    Array out = Array::zeros(b.shape);
    const double s = a.values[0];
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = f(s, b.values[i]);
    return out;
  }
  if (is_scalar(b.shape)) {
    Array out = Array::zeros(a.shape);
    const double s = b.values[0];
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = f(a.values[i], s);
    return out;
  }
  shape_mismatch(kind, a.shape, b.shape);
}

template <typename F>
Array unary(const Array& a, F f) {
  Array out = Array::zeros(a.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] = f(a.values[i]);
  return out;
}

void require_rank(OpKind kind, const Array& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op_name(kind)) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(a.shape));
  }
}

Array matmul_kernel(const Array& a, const Array& b) {
  require_rank(OpKind::kMatMul, a, 2);
  require_rank(OpKind::kMatMul, b, 2);
  if (a.cols() != b.rows()) shape_mismatch(OpKind::kMatMul, a.shape, b.shape);
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Array out = Array::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.values.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.values[i * k + p];
      if (av == 0.0) continue;
      const double* br = b.values.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Graph* common_graph(OpKind kind, std::initializer_list<Tensor> inputs) {
  Graph* g = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.tracked()) continue;
    if (g && g != t.graph()) {
      throw GraphError(std::string(op_name(kind)) + ": operands belong to different graphs");
    }
    g = t.graph();
  }
  return g;
}

Tensor emit(OpKind kind, std::initializer_list<Tensor> inputs, Array value,
            std::size_t attr = 0) {
  check_finite(kind, value);
  Graph* g = common_graph(kind, inputs);
  if (!g) return Tensor(std::move(value));
  return g->append(kind, inputs, std::move(value), attr);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return emit(OpKind::kAdd, {a, b},
              broadcast_binary(OpKind::kAdd, a.array(), b.array(),
                               [](double x, double y) { return x + y; }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return emit(OpKind::kMul, {a, b},
              broadcast_binary(OpKind::kMul, a.array(), b.array(),
                               [](double x, double y) { return x * y; }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  return emit(OpKind::kMatMul, {a, b}, matmul_kernel(a.array(), b.array()));
}

Tensor sum(const Tensor& a) {
  return emit(OpKind::kSum, {a}, Array::scalar(pairwise_sum(a.values().data(), a.numel())));
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  return emit(OpKind::kMean, {a}, Array::scalar(pairwise_sum(a.values().data(), a.numel()) / n));
}

Tensor tanh(const Tensor& a) {
  return emit(OpKind::kTanh, {a}, unary(a.array(), [](double x) { return std::tanh(x); }));
}

Tensor softplus(const Tensor& a) {
  return emit(OpKind::kSoftplus, {a}, unary(a.array(), stable_softplus));
}

Tensor square(const Tensor& a) {
  return emit(OpKind::kSquare, {a}, unary(a.array(), [](double x) { return x * x; }));
}

Tensor norm2(const Tensor& a) {
  const Array sq = unary(a.array(), [](double x) { return x * x; });
  return emit(OpKind::kNorm2, {a}, Array::scalar(pairwise_sum(sq.values.data(), sq.numel())));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_mismatch(OpKind::kDot, a.shape(), b.shape());
  std::vector<double> prod(a.numel());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = a.values()[i] * b.values()[i];
  return emit(OpKind::kDot, {a, b}, Array::scalar(pairwise_sum(prod.data(), prod.size())));
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(OpKind::kAffine, b.array(), 1);
  require_rank(OpKind::kAffine, x.array(), 2);
  require_rank(OpKind::kAffine, w.array(), 2);
  if (x.shape()[1] != w.shape()[0]) shape_mismatch(OpKind::kAffine, x.shape(), w.shape());
  if (w.shape()[1] != b.shape()[0]) shape_mismatch(OpKind::kAffine, w.shape(), b.shape());
  Array out = matmul_kernel(x.array(), w.array());
  const std::size_t m = out.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < m; ++j) out.values[i * m + j] += b.values()[j];
  }
  return emit(OpKind::kAffine, {x, w, b}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  require_rank(OpKind::kTranspose, a.array(), 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Array out = Array::zeros({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.values[j * r + i] = a.values()[i * c + j];
  }
  return emit(OpKind::kTranspose, {a}, std::move(out));
}

Tensor sigmoid(const Tensor& a) {
  return emit(OpKind::kSigmoid, {a}, unary(a.array(), stable_sigmoid));
}

Tensor sum_rows(const Tensor& a) {
  require_rank(OpKind::kSumRows, a.array(), 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Array out = Array::zeros({c});
  std::vector<double> column(r);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < r; ++i) column[i] = a.values()[i * c + j];
    out.values[j] = pairwise_sum(column.data(), r);
  }
  return emit(OpKind::kSumRows, {a}, std::move(out));
}

Tensor broadcast_rows(const Tensor& a, std::size_t rows) {
  require_rank(OpKind::kBroadcastRows, a.array(), 1);
  const std::size_t c = a.shape()[0];
  Array out = Array::zeros({rows, c});
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy(a.values().begin(), a.values().end(), out.values.begin() + i * c);
  }
  return emit(OpKind::kBroadcastRows, {a}, std::move(out), rows);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(-1.0, b)); }

Tensor scale(double c, const Tensor& a) { return mul(Tensor(c), a); }

Tensor forward_op(OpKind kind, std::span<const Tensor> in) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw ShapeError(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                       " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::kAdd: arity(2); return add(in[0], in[1]);
    case OpKind::kMul: arity(2); return mul(in[0], in[1]);
    case OpKind::kMatMul: arity(2); return matmul(in[0], in[1]);
    case OpKind::kSum: arity(1); return sum(in[0]);
    case OpKind::kMean: arity(1); return mean(in[0]);
    case OpKind::kTanh: arity(1); return tanh(in[0]);
    case OpKind::kSoftplus: arity(1); return softplus(in[0]);
    case OpKind::kSquare: arity(1); return square(in[0]);
    case OpKind::kNorm2: arity(1); return norm2(in[0]);
    case OpKind::kDot: arity(2); return dot(in[0], in[1]);
    case OpKind::kAffine: arity(3); return affine(in[0], in[1], in[2]);
    default:
      throw GraphError(std::string("forward_op: ") + op_name(kind) + " is not a public primitive");
  }
}

// ---------------------------------------------------------------------------
// Reverse mode

namespace {

// Contribution of an elementwise-broadcast input: undo a scalar broadcast.
Tensor unbroadcast(const Tensor& g, const Shape& input_shape) {
  if (is_scalar(input_shape) && !is_scalar(g.shape())) return sum(g);
  return g;
}

template <typename Value, typename Accumulate>
void backprop(const Node& n, std::size_t self, const Tensor& g, Value value, Accumulate acc) {
  auto in = [&](std::size_t k) { return value(n.inputs[k]); };
  switch (n.kind) {
    case OpKind::kVariable:
    case OpKind::kConstant:
      return;
    case OpKind::kAdd:
      acc(0, [&] { return unbroadcast(g, in(0).shape()); });
      acc(1, [&] { return unbroadcast(g, in(1).shape()); });
      return;
    case OpKind::kMul: {
      const bool out_scalar = is_scalar(g.shape());
      acc(0, [&] {
        const Tensor b = in(1);
        return is_scalar(in(0).shape()) && !out_scalar ? dot(g, b) : mul(g, b);
      });
      acc(1, [&] {
        const Tensor a = in(0);
        return is_scalar(in(1).shape()) && !out_scalar ? dot(g, a) : mul(g, a);
      });
      return;
    }
    case OpKind::kMatMul:
      acc(0, [&] { return matmul(g, transpose(in(1))); });
      acc(1, [&] { return matmul(transpose(in(0)), g); });
      return;
    case OpKind::kSum:
      acc(0, [&] { return mul(g, Tensor(Array::filled(in(0).shape(), 1.0))); });
      return;
    case OpKind::kMean:
      acc(0, [&] {
        const Tensor a = in(0);
        return mul(g, Tensor(Array::filled(a.shape(), 1.0 / static_cast<double>(a.numel()))));
      });
      return;
    case OpKind::kTanh:
      acc(0, [&] { return mul(g, sub(1.0, square(value(self)))); });
      return;
    case OpKind::kSoftplus:
      acc(0, [&] { return mul(g, sigmoid(in(0))); });
      return;
    case OpKind::kSigmoid:
      acc(0, [&] {
        const Tensor y = value(self);
        return mul(g, mul(y, sub(1.0, y)));
      });
      return;
    case OpKind::kSquare:
      acc(0, [&] { return mul(g, scale(2.0, in(0))); });
      return;
    case OpKind::kNorm2:
      acc(0, [&] { return mul(scale(2.0, g), in(0)); });
      return;
    case OpKind::kDot:
      acc(0, [&] { return mul(g, in(1)); });
      acc(1, [&] { return mul(g, in(0)); });
      return;
    case OpKind::kAffine:
      acc(0, [&] { return matmul(g, transpose(in(1))); });
      acc(1, [&] { return matmul(transpose(in(0)), g); });
      acc(2, [&] { return sum_rows(g); });
      return;
    case OpKind::kTranspose:
      acc(0, [&] { return transpose(g); });
      return;
    case OpKind::kSumRows:
      acc(0, [&] { return broadcast_rows(g, in(0).shape()[0]); });
      return;
    case OpKind::kBroadcastRows:
      acc(0, [&] { return sum_rows(g); });
      return;
  }
}

}  // namespace

std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> wrt, bool retain,
                              Unreachable policy) {
  if (!output.tracked()) throw GraphError("gradient: output is not part of a graph");
  if (output.numel() != 1) {
    throw GraphError("gradient: output must be a scalar, got shape " +
                     shape_string(output.shape()));
  }
  Graph& graph = *output.graph();
  const std::size_t out = output.node();

  std::vector<Tensor> result(wrt.size());
  std::vector<char> candidate(wrt.size(), 0);
  std::size_t lo = out + 1;
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    const Tensor& w = wrt[k];
    if (w.graph() == &graph && w.node() <= out) {
      candidate[k] = 1;
      lo = std::min(lo, w.node());
    }
  }

  // Active nodes lie on some path from a wrt node to the output.
  std::vector<char> active;
  if (lo <= out) {
    const std::size_t span_len = out - lo + 1;
    std::vector<char> from(span_len, 0), to(span_len, 0);
    for (std::size_t k = 0; k < wrt.size(); ++k) {
      if (candidate[k]) from[wrt[k].node() - lo] = 1;
    }
    for (std::size_t i = lo; i <= out; ++i) {
      if (from[i - lo]) continue;
      const Node& n = graph.node(i);
      for (std::size_t k = 0; k < n.arity; ++k) {
        const std::size_t j = n.inputs[k];
        if (j >= lo && from[j - lo]) {
          from[i - lo] = 1;
          break;
        }
      }
    }
    to[out - lo] = 1;
    for (std::size_t i = out + 1; i-- > lo;) {
      if (!to[i - lo] || !from[i - lo]) continue;
      const Node& n = graph.node(i);
      for (std::size_t k = 0; k < n.arity; ++k) {
        const std::size_t j = n.inputs[k];
        if (j >= lo) to[j - lo] = 1;
      }
    }
    active.resize(span_len);
    for (std::size_t i = 0; i < span_len; ++i) active[i] = from[i] && to[i];
  }

  auto is_active = [&](std::size_t id) { return id >= lo && id <= out && active[id - lo]; };

  for (std::size_t k = 0; k < wrt.size(); ++k) {
    if (candidate[k] && is_active(wrt[k].node())) continue;
    if (policy == Unreachable::kError) {
      throw GraphError("gradient: output does not depend on input #" + std::to_string(k) +
                       " of shape " + shape_string(wrt[k].shape()));
    }
    candidate[k] = 0;
    result[k] = Tensor(Array::zeros(wrt[k].shape()));
  }
  if (lo > out) return result;

  std::vector<Tensor> adjoint(out - lo + 1);
  std::vector<char> has(out - lo + 1, 0);
  adjoint[out - lo] = Tensor(Array::filled(output.shape(), 1.0));
  has[out - lo] = 1;

  auto value = [&](std::size_t id) -> Tensor {
    return retain ? graph.handle(id) : graph.handle(id).detach();
  };

  for (std::size_t i = out + 1; i-- > lo;) {
    if (!active[i - lo] || !has[i - lo]) continue;
    // Copy: appending during a taped pass may reallocate the node list.
    const Node n = graph.node(i);
    const Tensor g = adjoint[i - lo];
    backprop(n, i, g, value, [&](std::size_t k, auto contribution) {
      const std::size_t j = n.inputs[k];
      if (!is_active(j)) return;
      Tensor c = contribution();
      if (has[j - lo]) {
        adjoint[j - lo] = add(adjoint[j - lo], c);
      } else {
        adjoint[j - lo] = std::move(c);
        has[j - lo] = 1;
      }
    });
  }

  for (std::size_t k = 0; k < wrt.size(); ++k) {
    if (!candidate[k]) continue;
    Tensor g = adjoint[wrt[k].node() - lo];
    if (retain && !g.tracked()) g = graph.lift(g);
    result[k] = retain ? g : g.detach();
  }
  return result;
}

Tensor gradient(const Tensor& output, const Tensor& wrt, bool retain) {
  const Tensor w[] = {wrt};
  return gradients(output, w, retain).front();
}

Tensor hvp_from_gradient(const Tensor& grad, const Tensor& y, const Tensor& v, bool retain) {
  if (!grad.tracked()) {
    throw GraphError(
        "hvp: the first gradient was computed with retain=false; re-run it with retain=true");
  }
  if (v.shape() != y.shape()) shape_mismatch(OpKind::kDot, v.shape(), y.shape());
  if (!grad.graph()->depends_on(grad, y)) return Tensor(Array::zeros(y.shape()));
  return gradient(dot(v, grad), y, retain);
}

Tensor hvp(const Tensor& scalar_output, const Tensor& y, const Tensor& v, bool retain) {
  return hvp_from_gradient(gradient(scalar_output, y, true), y, v, retain);
}

}  // namespace ebmlab
