#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation as a node holding its value and a closure
// that pushes the incoming adjoint to its parents. Nodes are appended in
// evaluation order, so a single reverse sweep over ids is a valid
// topological order.
//
// Forward-mode directional derivatives are not a separate mechanism: the
// network code records the tangent computation itself (W * dh, act'(h) * dh)
// as ordinary tape operations. Differentiating such a graph in reverse gives
// exact parameter gradients of losses that contain time derivatives.
//
// Elementwise binary ops broadcast along singleton dimensions: operands may
// be (r x c), (1 x c), (r x 1) or (1 x 1).

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <vector>

namespace ndm::ad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Mat& adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat value);
  Var variable(Mat value);
  Var record(Mat value, const std::vector<Var>& parents, Backprop backprop);

  /// Seeds `output` with `seed` and sweeps to the leaves. Adjoints accumulate
  /// until clear_grads() is called.
  void backward(Var output, const Mat& seed);
  /// Scalar (1 x 1) output seeded with 1.
  void backward(Var output);

  /// Adjoint of `v`; a zero matrix of the right shape if nothing reached it.
  Mat grad(Var v) const;
  void clear_grads();

  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  void accumulate(Var v, const Mat& adjoint);
  const Mat& value(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat adjoint;
    bool needs_grad = false;
    bool has_adjoint = false;
    Backprop backprop;
  };

  // deque keeps node references stable while new nodes are appended
  std::deque<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value(id_); }

// Elementwise arithmetic with broadcasting.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);

/// Multiplies by a constant matrix (broadcast like any binary op).
Var mul_const(Var a, const Mat& c);
/// Adds a constant matrix (broadcast like any binary op).
Var add_const(Var a, const Mat& c);

/// a (n x k) times b (k x m).
Var matmul(Var a, Var b);
/// a (n x k) times b^T where b is (m x k).
Var matmul_nt(Var a, Var b);

Var silu(Var a);
/// d silu / dx, itself differentiable.
Var silu_grad(Var a);
Var tanh(Var a);
Var softplus(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);

/// Sum of all entries, 1 x 1.
Var sum(Var a);
/// Per-row sum, r x 1.
Var row_sum(Var a);
/// Mean of all entries, 1 x 1.
Var mean(Var a);
Var concat_cols(Var a, Var b);
/// Column j as an r x 1 matrix.
Var column(Var a, Eigen::Index j);

/// Expands `m` to (rows x cols) following the broadcasting rules.
Mat broadcast_to(const Mat& m, Eigen::Index rows, Eigen::Index cols);
/// Sums an adjoint back down to the (rows x cols) operand shape.
Mat reduce_to(const Mat& g, Eigen::Index rows, Eigen::Index cols);

}  // namespace ndm::ad
