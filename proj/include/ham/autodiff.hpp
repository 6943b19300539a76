#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ham/tensor.hpp"

// Tape-based reverse-mode differentiation over Tensor-valued primitives.
//
// A Tape lives for one forward pass: leaves are registered, every primitive
// appends a node holding its value and a closure that pushes the upstream
// gradient into its inputs, and backward() sweeps the nodes in reverse.
// Nodes are appended in evaluation order, so the record is topologically
// sorted by construction.

namespace ham::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Pushes `upstream` (the gradient w.r.t. this node's value) into the
  /// node's inputs via Tape::accumulate.
  using Backward = std::function<void(Tape&, const Tensor& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf (parameter or input under test).
  Var leaf(Tensor value);
  /// Non-differentiable input; gradients are not propagated into it.
  Var constant(Tensor value);
  /// Appends the result of a primitive whose inputs are `inputs`.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  /// Zeroes every gradient, seeds d(loss)/d(loss) = 1 and sweeps backwards.
  /// The loss must hold exactly one element.
  void backward(Var loss);

  /// Gradient buffer to add into, or nullptr when `v` needs no gradient.
  Tensor* accumulate(Var v);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

// ---- primitives --------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Adds a vector to every row of a matrix (or to a vector of equal shape).
Var add_bias(Var x, Var bias);

Var matmul(Var a, Var b);
/// A[m,k] . x[k] -> [m]
Var matvec(Var a, Var x);
/// x[m] . A[m,k] -> [k], i.e. A^T x
Var vecmat(Var x, Var a);
Var transpose(Var a);
/// Concatenation along the last axis; leading extents must agree.
Var concat(Var a, Var b);
/// Inner product of equal-size tensors, as a one-element tensor.
Var dot(Var a, Var b);
Var sum(Var a);
Var l2_norm(Var a);

Var tanh(Var a);
Var sigmoid(Var a);
/// Softmax along the last axis. Backward applies (diag(p) - p p^T) per row.
Var softmax(Var a);

/// Sum_t alpha[t] * xs[t]; alpha is a vector with one entry per term.
Var weighted_sum(std::span<const Var> xs, Var alpha);

/// Rows of `table` selected by `ids`, as a [ids.size(), cols] matrix.
Var embedding(Var table, std::span<const int> ids);
/// Stacks n [B,h] matrices into a [B,n,h] tensor.
Var stack(std::span<const Var> xs);
/// Per batch row b: A[b] (n x h) times x[b] (h) -> [B,n].
Var batched_matvec(Var a, Var x);
/// Per batch row b: p[b] (n) times A[b] (n x h) -> [B,h].
Var batched_vecmat(Var p, Var a);

/// Mean over rows of -log softmax(logits[r])[targets[r]]. Logits may be a
/// vector (one row) or a [B,V] matrix.
Var cross_entropy(Var logits, std::span<const int> targets);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

// ---- finite-difference checking ---------------------------------------

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t input = 0;       ///< input holding the worst coordinate
  std::size_t coordinate = 0;  ///< flat index within that input
};

/// Compares reverse-mode gradients of `f` against central differences with
/// step h, over every coordinate of every input. The error of a coordinate
/// is |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double h = 1e-5);

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double h = 1e-5);

}  // namespace ham::ad
