#include "ndm/errors.hpp"
#include "ndm/transform.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace ndm {
namespace {

const TransformKind kAllKinds[] = {TransformKind::Identity, TransformKind::FixedDiagonal, TransformKind::Learnable};

TEST(Transform, IdentityAtTimeZeroForEveryKind) {
  std::mt19937_64 rng(1);
  for (TransformKind kind : kAllKinds) {
    const Transform tr = test::random_transform(kind, 3, rng);
    const Mat x = test::random_mat(5, 3, rng);
    EXPECT_TRUE(tr.apply(x, Vec::Zero(5)).isApprox(x, 1e-15));
  }
}

TEST(Transform, IdentityIsIdentityAtAllTimes) {
  std::mt19937_64 rng(2);
  const Transform tr = Transform::identity(2);
  const Mat x = test::random_mat(4, 2, rng);
  EXPECT_EQ(tr.apply(x, Vec::Constant(4, 0.6)), x);
  EXPECT_TRUE(tr.time_derivative(x, Vec::Constant(4, 0.6)).isZero(0.0));
}

TEST(Transform, FixedDiagonalClosedForm) {
  const Transform tr = Transform::fixed_diagonal((Vec(2) << 2.0, 0.5).finished());
  const Vec x = (Vec(2) << 3.0, -1.0).finished();
  const Vec f = tr.apply(x, 0.5);
  EXPECT_NEAR(f(0), 3.0 * std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(f(1), -std::sqrt(0.5), 1e-14);
  const Vec df = tr.time_derivative(x, 0.5);
  EXPECT_NEAR(df(0), std::log(2.0) * f(0), 1e-14);
  EXPECT_NEAR(df(1), std::log(0.5) * f(1), 1e-14);
}

TEST(Transform, ZeroInitialisedLearnableStartsAtIdentity) {
  std::mt19937_64 rng(3);
  NetSpec spec = NetSpec::for_data(2, {8}, TimeEmbedding::Sinusoidal, 2);
  const Transform tr = Transform::learnable(spec, init_params(spec, rng, true));
  const Mat x = test::random_mat(6, 2, rng);
  const Vec t = Vec::LinSpaced(6, 0.0, 1.0);
  EXPECT_TRUE(tr.apply(x, t).isApprox(x, 1e-15));
  EXPECT_TRUE(tr.time_derivative(x, t).isZero(1e-15));
}

TEST(Transform, TimeDerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  for (TransformKind kind : kAllKinds) {
    const Transform tr = test::random_transform(kind, 2, rng);
    for (int k = 0; k < 25; ++k) {
      const Vec x = test::random_vec(2, rng);
      const double t = test::uniform(rng, 0.05, 0.95);
      const double h = 1e-5;
      const Vec fd = (tr.apply(x, t + h) - tr.apply(x, t - h)) / (2 * h);
      const Vec df = tr.time_derivative(x, t);
      for (int j = 0; j < 2; ++j) EXPECT_LT(test::rel_err(df(j), fd(j), 1e-6), 1e-4);
    }
  }
}

TEST(Transform, BoundMatchesPlainEvaluation) {
  std::mt19937_64 rng(5);
  for (TransformKind kind : kAllKinds) {
    const Transform tr = test::random_transform(kind, 3, rng);
    const Mat x = test::random_mat(4, 3, rng);
    const Vec t = Vec::LinSpaced(4, 0.1, 1.0);
    ad::Tape tape;
    const BoundTransform bt(tape, tr, false);
    const auto rec = bt.apply_with_time_derivative(tape.constant(x), t);
    const auto plain = tr.apply_with_time_derivative(x, t);
    EXPECT_TRUE(rec.value.value().isApprox(plain.value, 1e-14));
    EXPECT_TRUE(rec.time_derivative.value().isApprox(plain.time_derivative, 1e-14) ||
                plain.time_derivative.isZero(0.0));
    EXPECT_TRUE(bt.apply(tape.constant(x), t).value().isApprox(plain.value, 1e-14));
  }
}

TEST(Transform, ParameterAndInputGradientsMatchFiniteDifference) {
  std::mt19937_64 rng(6);
  const Transform tr = test::random_learnable(2, rng);
  const Mat x = test::random_mat(3, 2, rng);
  const Vec t = Vec::LinSpaced(3, 0.2, 0.9);
  const Mat w1 = test::random_mat(3, 2, rng), w2 = test::random_mat(3, 2, rng);
  auto objective = [&](const Transform& f, const Mat& xx) {
    const auto r = f.apply_with_time_derivative(xx, t);
    return r.value.cwiseProduct(w1).sum() + r.time_derivative.cwiseProduct(w2).sum();
  };

  ad::Tape tape;
  const BoundTransform bt(tape, tr, true);
  const ad::Var X = tape.variable(x);
  const auto rec = bt.apply_with_time_derivative(X, t);
  tape.backward(ad::sum(ad::mul_const(rec.value, w1) + ad::mul_const(rec.time_derivative, w2)));
  const auto g = bt.gradient();
  const Mat gx = tape.grad(X);

  const auto& p = tr.params().values;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double fd = test::central_difference(
        [&](double v) {
          Transform q = tr;
          q.params().values[k] = v;
          return objective(q, x);
        },
        p[k], 1e-5);
    EXPECT_LT(test::rel_err(g[k], fd, 1e-6), 1e-4) << "parameter " << k;
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double fd = test::central_difference(
        [&](double v) {
          Mat xx = x;
          xx.data()[i] = v;
          return objective(tr, xx);
        },
        x.data()[i], 1e-5);
    EXPECT_LT(test::rel_err(gx.data()[i], fd, 1e-6), 1e-4);
  }
}

TEST(Transform, InvalidConstructionAndShapes) {
  EXPECT_THROW(Transform::identity(0), ContractError);
  EXPECT_THROW(Transform::fixed_diagonal((Vec(2) << 1.0, -1.0).finished()), ContractError);
  const Transform tr = Transform::identity(2);
  EXPECT_THROW(tr.apply(Mat::Zero(2, 3), Vec::Zero(2)), ContractError);
  EXPECT_THROW(tr.apply(Mat::Zero(2, 2), Vec::Zero(3)), ContractError);
  EXPECT_THROW(tr.net_spec(), ContractError);
  NetSpec wrong = NetSpec::for_data(2, {4}, TimeEmbedding::RawScalar, 0);
  wrong.output_dim = 3;
  std::mt19937_64 rng(7);
  EXPECT_THROW(Transform::learnable(wrong, init_params(wrong, rng)), ContractError);
}

}  // namespace
}  // namespace ndm
