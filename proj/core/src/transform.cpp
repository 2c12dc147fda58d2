#include "ndm/transform.hpp"

#include "ndm/errors.hpp"

#include <cmath>

namespace ndm {

namespace {

Mat diagonal_power(const Vec& c, const Vec& t) {
  // C(i, j) = c_j ^ t_i
  Mat out(t.size(), c.size());
  const Eigen::RowVectorXd logc = c.array().log().matrix().transpose();
  for (Eigen::Index i = 0; i < t.size(); ++i) out.row(i) = (t(i) * logc.array()).exp().matrix();
  return out;
}

Mat row_scale(const Vec& s) { return Mat(s); }

}  // namespace

Transform Transform::identity(int data_dim) {
  if (data_dim < 1) throw ContractError("transform: data_dim must be >= 1");
  Transform tr;
  tr.kind_ = TransformKind::Identity;
  tr.data_dim_ = data_dim;
  return tr;
}

Transform Transform::fixed_diagonal(Vec c) {
  if (c.size() < 1) throw ContractError("transform: empty diagonal");
  if ((c.array() <= 0.0).any() || !c.allFinite()) throw ContractError("transform: diagonal entries must be positive");
  Transform tr;
  tr.kind_ = TransformKind::FixedDiagonal;
  tr.data_dim_ = static_cast<int>(c.size());
  tr.diagonal_ = std::move(c);
  return tr;
}

Transform Transform::learnable(NetSpec spec, NetParams params) {
  spec.validate();
  if (spec.output_dim != spec.data_dim()) throw ContractError("transform: network must map data_dim to data_dim");
  if (params.values.size() != spec.parameter_count()) throw ContractError("transform: parameter count mismatch");
  Transform tr;
  tr.kind_ = TransformKind::Learnable;
  tr.data_dim_ = spec.data_dim();
  tr.spec_ = std::move(spec);
  tr.params_ = std::move(params);
  return tr;
}

const NetSpec& Transform::net_spec() const {
  if (!spec_) throw ContractError("transform: not learnable");
  return *spec_;
}

const NetParams& Transform::params() const {
  if (!spec_) throw ContractError("transform: not learnable");
  return params_;
}

NetParams& Transform::params() {
  if (!spec_) throw ContractError("transform: not learnable");
  return params_;
}

void Transform::check(const Mat& x, const Vec& t) const {
  if (x.cols() != data_dim_) throw ContractError("transform: dimension mismatch");
  if (x.rows() != t.size()) throw ContractError("transform: batch size and time count differ");
}

Mat Transform::apply(const Mat& x, const Vec& t) const {
  check(x, t);
  switch (kind_) {
    case TransformKind::Identity:
      return x;
    case TransformKind::FixedDiagonal:
      return x.cwiseProduct(diagonal_power(diagonal_, t));
    case TransformKind::Learnable: {
      // Fbar = x + N(x, t), so F = x + t N(x, t)
      return x + t.asDiagonal() * net_forward(*spec_, params_, x, t);
    }
  }
  return x;
}

Vec Transform::apply(const Vec& x, double t) const {
  return apply(Mat(x.transpose()), Vec::Constant(1, t)).row(0).transpose();
}

Transform::ValueAndDerivative Transform::apply_with_time_derivative(const Mat& x, const Vec& t) const {
  check(x, t);
  switch (kind_) {
    case TransformKind::Identity:
      return {x, Mat::Zero(x.rows(), x.cols())};
    case TransformKind::FixedDiagonal: {
      const Mat f = x.cwiseProduct(diagonal_power(diagonal_, t));
      const Eigen::RowVectorXd logc = diagonal_.array().log().matrix().transpose();
      return {f, f.array().rowwise() * logc.array()};
    }
    case TransformKind::Learnable: {
      auto r = net_forward_with_time_derivative(*spec_, params_, x, t);
      Mat value = x + t.asDiagonal() * r.value;
      Mat deriv = r.value + t.asDiagonal() * r.time_derivative;
      return {std::move(value), std::move(deriv)};
    }
  }
  return {x, Mat::Zero(x.rows(), x.cols())};
}

Mat Transform::time_derivative(const Mat& x, const Vec& t) const {
  return apply_with_time_derivative(x, t).time_derivative;
}

Vec Transform::time_derivative(const Vec& x, double t) const {
  return time_derivative(Mat(x.transpose()), Vec::Constant(1, t)).row(0).transpose();
}

BoundTransform::BoundTransform(ad::Tape& tape, const Transform& transform, bool trainable)
    : tape_(&tape), transform_(&transform), trainable_(trainable) {
  if (transform.is_learnable()) net_ = bind(tape, transform.net_spec(), transform.params(), trainable);
}

ad::Var BoundTransform::apply(ad::Var x, const Vec& t) const {
  const Transform& tr = *transform_;
  if (x.cols() != tr.data_dim()) throw ContractError("transform: dimension mismatch");
  switch (tr.kind()) {
    case TransformKind::Identity:
      return x;
    case TransformKind::FixedDiagonal:
      return ad::mul_const(x, diagonal_power(tr.diagonal(), t));
    case TransformKind::Learnable: {
      return x + ad::mul_const(record_forward(*net_, x, t), row_scale(t));
    }
  }
  return x;
}

BoundTransform::Recorded BoundTransform::apply_with_time_derivative(ad::Var x, const Vec& t) const {
  const Transform& tr = *transform_;
  if (x.cols() != tr.data_dim()) throw ContractError("transform: dimension mismatch");
  switch (tr.kind()) {
    case TransformKind::Identity:
      return {x, tape_->constant(Mat::Zero(x.rows(), x.cols()))};
    case TransformKind::FixedDiagonal: {
      const Mat power = diagonal_power(tr.diagonal(), t);
      const Eigen::RowVectorXd logc = tr.diagonal().array().log().matrix().transpose();
      const Mat dpower = power.array().rowwise() * logc.array();
      return {ad::mul_const(x, power), ad::mul_const(x, dpower)};
    }
    case TransformKind::Learnable: {
      auto r = record_forward_with_time_derivative(*net_, x, t);
      ad::Var value = x + ad::mul_const(r.value, row_scale(t));
      ad::Var deriv = r.value + ad::mul_const(r.time_derivative, row_scale(t));
      return {value, deriv};
    }
  }
  return {x, tape_->constant(Mat::Zero(x.rows(), x.cols()))};
}

std::vector<double> BoundTransform::gradient() const {
  if (!net_ || !trainable_) return {};
  return collect_gradient(*tape_, *net_);
}

}  // namespace ndm
