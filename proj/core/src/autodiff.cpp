#include "ndm/autodiff.hpp"

#include "ndm/errors.hpp"

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace ndm::ad {

namespace {

Eigen::Index broadcast_dim(Eigen::Index a, Eigen::Index b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ContractError("broadcast: incompatible dimensions " + std::to_string(a) + " and " +
                      std::to_string(b));
}

Tape* tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operands recorded on different tapes");
  return a.tape();
}

double stable_softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// silu(x) = x * sigmoid(x)
// silu'(x) = s (1 + x (1 - s))
// silu''(x) = s (1 - s) (2 + x (1 - 2 s))
double silu_d1(double x) {
  const double s = logistic(x);
  return s * (1.0 + x * (1.0 - s));
}
double silu_d2(double x) {
  const double s = logistic(x);
  return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
}

template <class F>
Var unary(Var a, Mat value, F&& local_derivative) {
  Tape* tape = a.tape();
  return tape->record(std::move(value), {a}, [a, local_derivative](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(local_derivative(a.value())));
  });
}

}  // namespace

Mat broadcast_to(const Mat& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Mat::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1 && m.cols() == cols) return m.replicate(rows, 1);
  if (m.cols() == 1 && m.rows() == rows) return m.replicate(1, cols);
  throw ContractError("broadcast: cannot expand " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()) + " to " + std::to_string(rows) + "x" +
                      std::to_string(cols));
}

Mat reduce_to(const Mat& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Mat::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  if (cols == 1) return g.rowwise().sum();
  throw ContractError("reduce_to: shape mismatch");
}

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::variable(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), true, false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, const std::vector<Var>& parents, Backprop backprop) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError("parent recorded on a different tape");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Mat(), needs, false, needs ? std::move(backprop) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(Var v, const Mat& adjoint) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (n.has_adjoint) {
    n.adjoint += adjoint;
  } else {
    n.adjoint = adjoint;
    n.has_adjoint = true;
  }
}

void Tape::backward(Var output, const Mat& seed) {
  if (output.tape() != this) throw ContractError("backward: output not on this tape");
  if (seed.rows() != output.rows() || seed.cols() != output.cols())
    throw ContractError("backward: seed shape differs from output shape");
  // sweep with fresh adjoints, then add back what earlier sweeps left
  std::vector<std::pair<bool, Mat>> previous(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    previous[i] = {nodes_[i].has_adjoint, std::move(nodes_[i].adjoint)};
    nodes_[i].has_adjoint = false;
    nodes_[i].adjoint.resize(0, 0);
  }
  accumulate(output, seed);
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_adjoint || !n.backprop) continue;
    n.backprop(*this, n.adjoint);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!previous[i].first) continue;
    Node& n = nodes_[i];
    if (n.has_adjoint) {
      n.adjoint += previous[i].second;
    } else {
      n.adjoint = std::move(previous[i].second);
      n.has_adjoint = true;
    }
  }
}

void Tape::backward(Var output) {
  if (output.rows() != 1 || output.cols() != 1) throw ContractError("backward: output is not scalar");
  backward(output, Mat::Ones(1, 1));
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_adjoint) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

void Tape::clear_grads() {
  for (Node& n : nodes_) {
    n.has_adjoint = false;
    n.adjoint.resize(0, 0);
  }
}

Var operator+(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  const auto r = broadcast_dim(a.rows(), b.rows());
  const auto c = broadcast_dim(a.cols(), b.cols());
  Mat v = broadcast_to(a.value(), r, c) + broadcast_to(b.value(), r, c);
  return tape->record(std::move(v), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, reduce_to(g, a.rows(), a.cols()));
    t.accumulate(b, reduce_to(g, b.rows(), b.cols()));
  });
}

Var operator-(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  const auto r = broadcast_dim(a.rows(), b.rows());
  const auto c = broadcast_dim(a.cols(), b.cols());
  Mat v = broadcast_to(a.value(), r, c) - broadcast_to(b.value(), r, c);
  return tape->record(std::move(v), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, reduce_to(g, a.rows(), a.cols()));
    t.accumulate(b, reduce_to(-g, b.rows(), b.cols()));
  });
}

Var operator*(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  const auto r = broadcast_dim(a.rows(), b.rows());
  const auto c = broadcast_dim(a.cols(), b.cols());
  Mat v = broadcast_to(a.value(), r, c).cwiseProduct(broadcast_to(b.value(), r, c));
  return tape->record(std::move(v), {a, b}, [a, b, r, c](Tape& t, const Mat& g) {
    if (t.needs_grad(a))
      t.accumulate(a, reduce_to(g.cwiseProduct(broadcast_to(b.value(), r, c)), a.rows(), a.cols()));
    if (t.needs_grad(b))
      t.accumulate(b, reduce_to(g.cwiseProduct(broadcast_to(a.value(), r, c)), b.rows(), b.cols()));
  });
}

Var operator/(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  const auto r = broadcast_dim(a.rows(), b.rows());
  const auto c = broadcast_dim(a.cols(), b.cols());
  Mat v = broadcast_to(a.value(), r, c).cwiseQuotient(broadcast_to(b.value(), r, c));
  return tape->record(std::move(v), {a, b}, [a, b, r, c](Tape& t, const Mat& g) {
    const Mat bb = broadcast_to(b.value(), r, c);
    if (t.needs_grad(a)) t.accumulate(a, reduce_to(g.cwiseQuotient(bb), a.rows(), a.cols()));
    if (t.needs_grad(b)) {
      const Mat aa = broadcast_to(a.value(), r, c);
      t.accumulate(b, reduce_to(-g.cwiseProduct(aa).cwiseQuotient(bb.cwiseProduct(bb)), b.rows(), b.cols()));
    }
  });
}

Var operator-(Var a) {
  return a.tape()->record(-a.value(), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, -g); });
}

Var operator+(Var a, double c) {
  Mat v = a.value().array() + c;
  return a.tape()->record(std::move(v), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }

Var operator*(Var a, double c) {
  return a.tape()->record(a.value() * c, {a}, [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); });
}
Var operator*(double c, Var a) { return a * c; }
Var operator/(Var a, double c) { return a * (1.0 / c); }

Var mul_const(Var a, const Mat& c) {
  const auto r = broadcast_dim(a.rows(), c.rows());
  const auto k = broadcast_dim(a.cols(), c.cols());
  Mat cc = broadcast_to(c, r, k);
  Mat v = broadcast_to(a.value(), r, k).cwiseProduct(cc);
  return a.tape()->record(std::move(v), {a}, [a, cc](Tape& t, const Mat& g) {
    t.accumulate(a, reduce_to(g.cwiseProduct(cc), a.rows(), a.cols()));
  });
}

Var add_const(Var a, const Mat& c) {
  const auto r = broadcast_dim(a.rows(), c.rows());
  const auto k = broadcast_dim(a.cols(), c.cols());
  Mat v = broadcast_to(a.value(), r, k) + broadcast_to(c, r, k);
  return a.tape()->record(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, reduce_to(g, a.rows(), a.cols()));
  });
}

Var matmul(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  if (a.cols() != b.rows()) throw ContractError("matmul: inner dimensions differ");
  Mat v = a.value() * b.value();
  return tape->record(std::move(v), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  if (a.cols() != b.cols()) throw ContractError("matmul_nt: inner dimensions differ");
  Mat v = a.value() * b.value().transpose();
  return tape->record(std::move(v), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value());
    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

Var silu(Var a) {
  Mat v = a.value().unaryExpr([](double x) { return x * logistic(x); });
  return unary(a, std::move(v), [](const Mat& x) { return Mat(x.unaryExpr(&silu_d1)); });
}

Var silu_grad(Var a) {
  Mat v = a.value().unaryExpr(&silu_d1);
  return unary(a, std::move(v), [](const Mat& x) { return Mat(x.unaryExpr(&silu_d2)); });
}

Var tanh(Var a) {
  Mat v = a.value().array().tanh().matrix();
  Tape* tape = a.tape();
  const int self = static_cast<int>(tape->size());
  return tape->record(std::move(v), {a}, [a, self](Tape& t, const Mat& g) {
    const Mat& y = t.value(self);
    t.accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var softplus(Var a) {
  Mat v = a.value().unaryExpr(&stable_softplus);
  return unary(a, std::move(v), [](const Mat& x) { return Mat(x.unaryExpr(&logistic)); });
}

Var sigmoid(Var a) {
  Mat v = a.value().unaryExpr(&logistic);
  return unary(a, std::move(v), [](const Mat& x) {
    return Mat(x.unaryExpr([](double z) {
      const double s = logistic(z);
      return s * (1.0 - s);
    }));
  });
}

Var exp(Var a) {
  Mat v = a.value().array().exp().matrix();
  return unary(a, std::move(v), [](const Mat& x) { return Mat(x.array().exp().matrix()); });
}

Var log(Var a) {
  Mat v = a.value().array().log().matrix();
  return unary(a, std::move(v), [](const Mat& x) { return Mat(x.cwiseInverse()); });
}

Var square(Var a) {
  Mat v = a.value().array().square().matrix();
  return unary(a, std::move(v), [](const Mat& x) { return Mat(2.0 * x); });
}

Var sum(Var a) {
  Mat v = Mat::Constant(1, 1, a.value().sum());
  return a.tape()->record(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var row_sum(Var a) {
  Mat v = a.value().rowwise().sum();
  return a.tape()->record(std::move(v), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var mean(Var a) { return sum(a) / static_cast<double>(a.rows() * a.cols()); }

Var concat_cols(Var a, Var b) {
  Tape* tape = tape_of(a, b);
  if (a.rows() != b.rows()) throw ContractError("concat_cols: row counts differ");
  Mat v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const auto ca = a.cols();
  const auto cb = b.cols();
  return tape->record(std::move(v), {a, b}, [a, b, ca, cb](Tape& t, const Mat& g) {
    t.accumulate(a, g.leftCols(ca));
    t.accumulate(b, g.rightCols(cb));
  });
}

Var column(Var a, Eigen::Index j) {
  if (j < 0 || j >= a.cols()) throw ContractError("column: index out of range");
  Mat v = a.value().col(j);
  return a.tape()->record(std::move(v), {a}, [a, j](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(a.rows(), a.cols());
    full.col(j) = g;
    t.accumulate(a, full);
  });
}

}  // namespace ndm::ad
