// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto an immutable node. Nodes created from
// inputs that are watched by a live Tape are recorded on that tape, in
// creation order, which is also a valid topological order for the reverse
// sweep. Everything else is a plain constant.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "s2pg/diffcore/errors.hpp"

namespace s2pg::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  std::vector<NodePtr> inputs;
  std::function<void(Node&)> backward;
  Tape* tape = nullptr;
  const char* op = "constant";

  std::span<double> grad_buffer();  // allocates zeros on first use
};

}  // namespace detail

class Tensor {
 public:
  Tensor();

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> data);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double item() const;  // requires size() == 1
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  /// True when the value is recorded on a live, unconsumed tape.
  bool tracked() const;
  /// Accumulated gradient after backward(); zeros when nothing flowed in.
  std::vector<double> grad() const;

  bool valid() const { return static_cast<bool>(node_); }

  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  const detail::NodePtr& node() const { return node_; }

 private:
  detail::NodePtr node_;
};

/// Records operations on watched tensors. One tape per thread of work; a tape
/// is consumed by backward() and cannot be reused afterwards.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  /// Returns a differentiable leaf holding a copy of `value`.
  Tensor watch(const Tensor& value);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Used by the op implementations; not part of the user-facing surface.
  void record(const detail::NodePtr& node);
  void run_backward(const detail::NodePtr& loss);

 private:
  std::vector<detail::NodePtr> nodes_;
  bool consumed_ = false;
};

/// Reverse sweep from a scalar loss. Fills grad() of every watched leaf that
/// the loss depends on and consumes the tape.
void backward(const Tensor& loss);

// ---- forward operations -------------------------------------------------
//
// Elementwise binary ops require identical shapes, or one operand holding a
// single element (scalar-tensor). Row ops take an explicit [rows x cols]
// matrix and a [cols] vector.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor add_row(const Tensor& matrix, const Tensor& row);
Tensor mul_row(const Tensor& matrix, const Tensor& row);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums each row of a matrix: [r x c] -> [r].
Tensor sum_cols(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

Tensor minimum(const Tensor& a, const Tensor& b);
/// Clamps into [lo, hi]; gradient passes only where the value is strictly inside.
Tensor clamp(const Tensor& a, double lo, double hi);
/// Same value, no gradient path.
Tensor detach(const Tensor& a);

/// Gaussian log-density with diagonal covariance. x, mean, diag_cov are
/// vectors of the same length.
Tensor gaussian_logpdf(const Tensor& x, const Tensor& mean, const Tensor& diag_cov);

/// Row-wise diagonal Gaussian log-density parameterised by log standard
/// deviations: x, mean are [rows x d], log_std is [d]; result is [rows].
Tensor gaussian_logpdf_rows(const Tensor& x, const Tensor& mean, const Tensor& log_std);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

}  // namespace s2pg::ad
