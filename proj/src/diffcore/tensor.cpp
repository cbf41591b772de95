// SPDX-License-Identifier: Apache-2.0
#include "s2pg/diffcore/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <utility>

namespace s2pg::ad {

using detail::Node;
using detail::NodePtr;

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

NodePtr make_constant_node(Shape shape, std::vector<double> data) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape));
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor data");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  return node;
}

const NodePtr& require(const Tensor& t) {
  if (!t.valid()) throw InputError("operation on an empty tensor handle");
  return t.node();
}

Tape* live_tape(const Node& n) {
  return (n.tape && !n.tape->consumed()) ? n.tape : nullptr;
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    Tape* other = live_tape(*require(*t));
    if (!other) continue;
    if (tape && tape != other) throw TapeError("operands are recorded on different tapes");
    tape = other;
  }
  return tape;
}

Tape* common_tape(const std::vector<Tensor>& inputs) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    Tape* other = live_tape(*require(t));
    if (!other) continue;
    if (tape && tape != other) throw TapeError("operands are recorded on different tapes");
    tape = other;
  }
  return tape;
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite output from ") + op);
  }
}

bool wants_grad(const Node& n) { return n.tape != nullptr; }

// Builds the result node. The backward functor is only materialised when the
// result lands on a tape.
template <typename Inputs, typename Backward>
Tensor emit(const char* op, Shape shape, std::vector<double> value, const Inputs& inputs,
            Tape* tape, Backward&& bw) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (tape) {
    for (const auto& in : inputs) node->inputs.push_back(in);
    node->backward = std::forward<Backward>(bw);
    node->tape = tape;
    tape->record(node);
  }
  return Tensor(std::move(node));
}

bool is_single(const Node& n) { return n.value.size() == 1; }

// Shared driver for elementwise binary ops with scalar-tensor support.
template <typename Fwd, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, DA da, DB db) {
  const Node& na = *require(a);
  const Node& nb = *require(b);
  Shape shape;
  if (na.shape == nb.shape) {
    shape = na.shape;
  } else if (is_single(nb)) {
    shape = na.shape;
  } else if (is_single(na)) {
    shape = nb.shape;
  } else {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(na.shape) + " vs " +
                         to_string(nb.shape));
  }
  const std::size_t n = numel(shape);
  const bool sa = na.value.size() != n;
  const bool sb = nb.value.size() != n;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(na.value[sa ? 0 : i], nb.value[sb ? 0 : i]);
  }
  Tape* tape = common_tape({&a, &b});
  return emit(op, std::move(shape), std::move(out), std::vector<NodePtr>{a.node(), b.node()}, tape,
              [sa, sb, da, db](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                const std::size_t m = self.value.size();
                if (wants_grad(x)) {
                  auto gx = x.grad_buffer();
                  for (std::size_t i = 0; i < m; ++i) {
                    gx[sa ? 0 : i] += self.grad[i] * da(x.value[sa ? 0 : i], y.value[sb ? 0 : i],
                                                        self.value[i]);
                  }
                }
                if (wants_grad(y)) {
                  auto gy = y.grad_buffer();
                  for (std::size_t i = 0; i < m; ++i) {
                    gy[sb ? 0 : i] += self.grad[i] * db(x.value[sa ? 0 : i], y.value[sb ? 0 : i],
                                                        self.value[i]);
                  }
                }
              });
}

// Elementwise unary op; `deriv(x, y)` is dy/dx.
template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const Node& na = *require(a);
  std::vector<double> out(na.value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(na.value[i]);
  Tape* tape = common_tape({&a});
  return emit(op, na.shape, std::move(out), std::vector<NodePtr>{a.node()}, tape,
              [deriv](Node& self) {
                Node& x = *self.inputs[0];
                if (!wants_grad(x)) return;
                auto gx = x.grad_buffer();
                for (std::size_t i = 0; i < self.value.size(); ++i) {
                  gx[i] += self.grad[i] * deriv(x.value[i], self.value[i]);
                }
              });
}

void require_matrix_row(const char* op, const Node& m, const Node& r) {
  if (m.shape.size() != 2 || r.shape.size() != 1 || m.shape[1] != r.shape[0]) {
    throw DimensionError(std::string(op) + ": expected [r x c] and [c], got " +
                         to_string(m.shape) + " and " + to_string(r.shape));
  }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor() = default;

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  return Tensor(make_constant_node(std::move(shape), std::move(data)));
}
Tensor Tensor::scalar(double v) { return constant({}, {v}); }
Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return constant({n}, std::move(data));
}
Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return constant({rows, cols}, std::move(data));
}
Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::full(Shape shape, double v) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, v));
}

const Shape& Tensor::shape() const { return require(*this)->shape; }
std::size_t Tensor::size() const { return require(*this)->value.size(); }
std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis out of range for shape " + to_string(s));
  return s[axis];
}
std::span<const double> Tensor::data() const { return require(*this)->value; }
std::vector<double> Tensor::to_vector() const { return require(*this)->value; }
double Tensor::item() const {
  const auto& v = require(*this)->value;
  if (v.size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return v[0];
}
double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& s = shape();
  if (s.size() != 2) throw DimensionError("at(row, col) needs a matrix");
  return data()[row * s[1] + col];
}
bool Tensor::tracked() const { return node_ && live_tape(*node_) != nullptr; }
std::vector<double> Tensor::grad() const {
  const Node& n = *require(*this);
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

// ---- Tape -------------------------------------------------------------------

Tape::~Tape() {
  for (auto& n : nodes_) {
    n->tape = nullptr;
    n->backward = nullptr;
    n->inputs.clear();
  }
}

Tensor Tape::watch(const Tensor& value) {
  if (consumed_) throw TapeError("cannot watch on a consumed tape");
  auto node = std::make_shared<Node>();
  node->shape = value.shape();
  node->value = value.to_vector();
  node->op = "leaf";
  node->tape = this;
  record(node);
  return Tensor(std::move(node));
}

void Tape::record(const NodePtr& node) { nodes_.push_back(node); }

void Tape::run_backward(const NodePtr& loss) {
  auto it = std::find(nodes_.rbegin(), nodes_.rend(), loss);
  if (it == nodes_.rend()) throw TapeError("loss is not recorded on this tape");
  std::fill(loss->grad_buffer().begin(), loss->grad_buffer().end(), 0.0);
  loss->grad_buffer()[0] = 1.0;
  for (; it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
  consumed_ = true;
}

void backward(const Tensor& loss) {
  const NodePtr& n = require(loss);
  if (n->value.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + to_string(n->shape));
  }
  if (!n->tape) throw TapeError("loss is detached from any tape");
  if (n->tape->consumed()) throw TapeError("tape already consumed by a previous backward()");
  n->tape->run_backward(n);
}

// ---- elementwise ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; },
      [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      "softplus", a,
      [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  // Ties route the gradient to b.
  return binary(
      "minimum", a, b, [](double x, double y) { return x < y ? x : y; },
      [](double x, double y, double) { return x < y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x < y ? 0.0 : 1.0; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw DomainError("clamp: lower bound above upper bound");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor detach(const Tensor& a) { return Tensor::constant(a.shape(), a.to_vector()); }

// ---- row ops ----------------------------------------------------------------------

Tensor add_row(const Tensor& matrix, const Tensor& row) {
  const Node& m = *require(matrix);
  const Node& r = *require(row);
  require_matrix_row("add_row", m, r);
  const std::size_t rows = m.shape[0], cols = m.shape[1];
  std::vector<double> out(m.value);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += r.value[j];
  Tape* tape = common_tape({&matrix, &row});
  return emit("add_row", m.shape, std::move(out), std::vector<NodePtr>{matrix.node(), row.node()},
              tape, [rows, cols](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                if (wants_grad(x)) {
                  auto gx = x.grad_buffer();
                  for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
                }
                if (wants_grad(y)) {
                  auto gy = y.grad_buffer();
                  for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) gy[j] += self.grad[i * cols + j];
                }
              });
}

Tensor mul_row(const Tensor& matrix, const Tensor& row) {
  const Node& m = *require(matrix);
  const Node& r = *require(row);
  require_matrix_row("mul_row", m, r);
  const std::size_t rows = m.shape[0], cols = m.shape[1];
  std::vector<double> out(m.value);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] *= r.value[j];
  Tape* tape = common_tape({&matrix, &row});
  return emit("mul_row", m.shape, std::move(out), std::vector<NodePtr>{matrix.node(), row.node()},
              tape, [rows, cols](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                if (wants_grad(x)) {
                  auto gx = x.grad_buffer();
                  for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                      gx[i * cols + j] += self.grad[i * cols + j] * y.value[j];
                }
                if (wants_grad(y)) {
                  auto gy = y.grad_buffer();
                  for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                      gy[j] += self.grad[i * cols + j] * x.value[i * cols + j];
                }
              });
}

// ---- matmul -------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Node& na = *require(a);
  const Node& nb = *require(b);
  const std::size_t ra = na.shape.size(), rb = nb.shape.size();
  if (ra < 1 || ra > 2 || rb < 1 || rb > 2) {
    throw DimensionError("matmul: operands must be vectors or matrices, got " +
                         to_string(na.shape) + " and " + to_string(nb.shape));
  }
  // View both as matrices: a vector on the left is a row, on the right a column.
  const std::size_t m = ra == 2 ? na.shape[0] : 1;
  const std::size_t k = ra == 2 ? na.shape[1] : na.shape[0];
  const std::size_t kb = nb.shape[0];
  const std::size_t n = rb == 2 ? nb.shape[1] : 1;
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions differ, " + to_string(na.shape) + " x " +
                         to_string(nb.shape));
  }
  Shape shape;
  if (ra == 2) shape.push_back(m);
  if (rb == 2) shape.push_back(n);

  std::vector<double> out(m * n, 0.0);
  const double* A = na.value.data();
  const double* B = nb.value.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* c = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
    }
  }
  Tape* tape = common_tape({&a, &b});
  return emit("matmul", std::move(shape), std::move(out), std::vector<NodePtr>{a.node(), b.node()},
              tape, [m, k, n](Node& self) {
                Node& x = *self.inputs[0];
                Node& y = *self.inputs[1];
                const double* G = self.grad.data();
                if (wants_grad(x)) {
                  auto gx = x.grad_buffer();
                  const double* Bv = y.value.data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * Bv[p * n + j];
                      gx[i * k + p] += acc;
                    }
                }
                if (wants_grad(y)) {
                  auto gy = y.grad_buffer();
                  const double* Av = x.value.data();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                      const double aip = Av[i * k + p];
                      if (aip == 0.0) continue;
                      for (std::size_t j = 0; j < n; ++j) gy[p * n + j] += aip * G[i * n + j];
                    }
                }
              });
}

// ---- reductions -------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  const Node& na = *require(a);
  double s = 0.0;
  for (double v : na.value) s += v;
  Tape* tape = common_tape({&a});
  return emit("sum", {}, {s}, std::vector<NodePtr>{a.node()}, tape, [](Node& self) {
    Node& x = *self.inputs[0];
    if (!wants_grad(x)) return;
    auto gx = x.grad_buffer();
    for (auto& g : gx) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const std::size_t n = a.size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Tensor sum_cols(const Tensor& a) {
  const Node& na = *require(a);
  if (na.shape.size() != 2) throw DimensionError("sum_cols needs a matrix, got " + to_string(na.shape));
  const std::size_t rows = na.shape[0], cols = na.shape[1];
  std::vector<double> out(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i] += na.value[i * cols + j];
  Tape* tape = common_tape({&a});
  return emit("sum_cols", {rows}, std::move(out), std::vector<NodePtr>{a.node()}, tape,
              [rows, cols](Node& self) {
                Node& x = *self.inputs[0];
                if (!wants_grad(x)) return;
                auto gx = x.grad_buffer();
                for (std::size_t i = 0; i < rows; ++i)
                  for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += self.grad[i];
              });
}

// ---- structural -----------------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t rank = first.size();
  if (rank < 1 || rank > 2 || axis >= rank) {
    throw DimensionError("concat: unsupported rank/axis for shape " + to_string(first));
  }
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != rank) throw DimensionError("concat: rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      if (d != axis && s[d] != first[d]) {
        throw DimensionError("concat: shape mismatch " + to_string(s) + " vs " + to_string(first));
      }
    }
    shape[axis] += s[axis];
  }
  // Column concat of matrices is the only interleaved case.
  const bool interleave = rank == 2 && axis == 1;
  const std::size_t rows = interleave ? shape[0] : 1;
  const std::size_t total_cols = interleave ? shape[1] : numel(shape);
  std::vector<double> out(numel(shape));
  std::vector<std::size_t> widths;
  widths.reserve(parts.size());
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = interleave ? p.shape()[1] : p.size();
    auto src = p.data();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(src.data() + i * w, w, out.data() + i * total_cols + offset);
    widths.push_back(w);
    offset += w;
  }
  std::vector<NodePtr> inputs;
  inputs.reserve(parts.size());
  for (const auto& p : parts) inputs.push_back(p.node());
  Tape* tape = common_tape(parts);
  return emit("concat", std::move(shape), std::move(out), inputs, tape,
              [rows, total_cols, widths](Node& self) {
                std::size_t off = 0;
                for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                  Node& x = *self.inputs[k];
                  const std::size_t w = widths[k];
                  if (wants_grad(x) && w > 0) {
                    auto gx = x.grad_buffer();
                    for (std::size_t i = 0; i < rows; ++i)
                      for (std::size_t j = 0; j < w; ++j)
                        gx[i * w + j] += self.grad[i * total_cols + off + j];
                  }
                  off += w;
                }
              });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Node& na = *require(a);
  const std::size_t rank = na.shape.size();
  if (rank < 1 || rank > 2 || axis >= rank) {
    throw DimensionError("slice: unsupported rank/axis for shape " + to_string(na.shape));
  }
  if (begin > end || end > na.shape[axis]) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of bounds for shape " + to_string(na.shape));
  }
  Shape shape = na.shape;
  shape[axis] = end - begin;
  const bool cols = rank == 2 && axis == 1;
  const std::size_t rows = cols ? na.shape[0] : 1;
  const std::size_t in_w = cols ? na.shape[1] : na.value.size();
  const std::size_t inner = rank == 2 && axis == 0 ? na.shape[1] : 1;
  const std::size_t off = cols ? begin : begin * inner;
  const std::size_t w = cols ? end - begin : (end - begin) * inner;
  std::vector<double> out(rows * w);
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(na.value.data() + i * in_w + off, w, out.data() + i * w);
  Tape* tape = common_tape({&a});
  return emit("slice", std::move(shape), std::move(out), std::vector<NodePtr>{a.node()}, tape,
              [rows, in_w, off, w](Node& self) {
                Node& x = *self.inputs[0];
                if (!wants_grad(x)) return;
                auto gx = x.grad_buffer();
                for (std::size_t i = 0; i < rows; ++i)
                  for (std::size_t j = 0; j < w; ++j) gx[i * in_w + off + j] += self.grad[i * w + j];
              });
}

Tensor reshape(const Tensor& a, Shape shape) {
  const Node& na = *require(a);
  if (numel(shape) != na.value.size()) {
    throw DimensionError("reshape: cannot view " + to_string(na.shape) + " as " + to_string(shape));
  }
  Tape* tape = common_tape({&a});
  return emit("reshape", std::move(shape), na.value, std::vector<NodePtr>{a.node()}, tape,
              [](Node& self) {
                Node& x = *self.inputs[0];
                if (!wants_grad(x)) return;
                auto gx = x.grad_buffer();
                for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
              });
}

// ---- densities --------------------------------------------------------------------------------

Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean_, const Tensor& diag_cov) {
  if (x.rank() != 1 || x.shape() != mean_.shape() || x.shape() != diag_cov.shape()) {
    throw DimensionError("gaussian_logpdf: x, mean, diag_cov must be vectors of equal length");
  }
  for (double v : diag_cov.data()) {
    if (!(v > 0.0)) throw DomainError("gaussian_logpdf: covariance entries must be positive");
  }
  const double d = static_cast<double>(x.size());
  const Tensor diff = sub(x, mean_);
  const Tensor quad = sum(div(square(diff), diag_cov));
  const Tensor logdet = sum(log(diag_cov));
  return scale(add_scalar(add(quad, logdet), d * std::log(2.0 * std::numbers::pi)), -0.5);
}

Tensor gaussian_logpdf_rows(const Tensor& x, const Tensor& mean_, const Tensor& log_std) {
  if (x.rank() != 2 || x.shape() != mean_.shape() || log_std.rank() != 1 ||
      log_std.dim(0) != x.dim(1)) {
    throw DimensionError("gaussian_logpdf_rows: expected x, mean [r x d] and log_std [d], got " +
                         to_string(x.shape()) + ", " + to_string(mean_.shape()) + ", " +
                         to_string(log_std.shape()));
  }
  const double d = static_cast<double>(x.dim(1));
  const Tensor inv_var = exp(scale(log_std, -2.0));
  const Tensor quad = sum_cols(mul_row(square(sub(x, mean_)), inv_var));
  const Tensor norm = add_scalar(scale(sum(log_std), 2.0), d * std::log(2.0 * std::numbers::pi));
  return scale(add(quad, norm), -0.5);
}

}  // namespace s2pg::ad
