#pragma once

#include "ndm/net.hpp"

#include <optional>
#include <vector>

namespace ndm {

enum class TransformKind { Identity, FixedDiagonal, Learnable };

/// Forward data transformation F(x, t) applied before noise injection.
///
///  identity        F(x, t) = x
///  fixed-diagonal  F(x, t)_j = x_j c_j^t     (c_j > 0)
///  learnable       F(x, t) = (1 - t) x + t Fbar(x, t)   with Fbar(x, t) = x + N(x, t)
///
/// The learnable form is therefore x + t N(x, t): a zero-initialised output
/// layer of N starts training from the identity.
/// Every kind satisfies F(x, 0) = x exactly.
class Transform {
 public:
  static Transform identity(int data_dim);
  static Transform fixed_diagonal(Vec c);
  static Transform learnable(NetSpec spec, NetParams params);

  TransformKind kind() const { return kind_; }
  int data_dim() const { return data_dim_; }
  bool is_learnable() const { return kind_ == TransformKind::Learnable; }

  const Vec& diagonal() const { return diagonal_; }
  const NetSpec& net_spec() const;
  const NetParams& params() const;
  NetParams& params();

  Mat apply(const Mat& x, const Vec& t) const;
  Vec apply(const Vec& x, double t) const;
  Mat time_derivative(const Mat& x, const Vec& t) const;
  Vec time_derivative(const Vec& x, double t) const;

  struct ValueAndDerivative {
    Mat value;
    Mat time_derivative;
  };
  ValueAndDerivative apply_with_time_derivative(const Mat& x, const Vec& t) const;

 private:
  Transform() = default;
  void check(const Mat& x, const Vec& t) const;

  TransformKind kind_ = TransformKind::Identity;
  int data_dim_ = 0;
  Vec diagonal_;
  std::optional<NetSpec> spec_;
  NetParams params_;
};

/// A Transform placed on a tape so that losses can differentiate through it.
class BoundTransform {
 public:
  BoundTransform(ad::Tape& tape, const Transform& transform, bool trainable);

  ad::Var apply(ad::Var x, const Vec& t) const;

  struct Recorded {
    ad::Var value;
    ad::Var time_derivative;
  };
  Recorded apply_with_time_derivative(ad::Var x, const Vec& t) const;

  /// Parameter gradient after a backward sweep; empty unless learnable and trainable.
  std::vector<double> gradient() const;

  const Transform& transform() const { return *transform_; }

 private:
  ad::Tape* tape_;
  const Transform* transform_;
  std::optional<BoundNet> net_;
  bool trainable_;
};

}  // namespace ndm
