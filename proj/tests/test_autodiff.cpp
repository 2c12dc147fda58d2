#include "ndm/autodiff.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

namespace ndm {
namespace {

using Fn = std::function<ad::Var(const std::vector<ad::Var>&)>;

// Compares tape gradients of sum(W .* f(inputs)) against central differences.
void check_gradients(const Fn& f, std::vector<Mat> inputs, double tol = 1e-6) {
  std::mt19937_64 rng(3);
  Mat w;
  auto scalar = [&](const std::vector<Mat>& in) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const Mat& m : in) vars.push_back(tape.constant(m));
    const Mat out = f(vars).value();
    if (w.size() == 0) w = test::random_mat(out.rows(), out.cols(), rng);
    return out.cwiseProduct(w).sum();
  };
  scalar(inputs);

  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Mat& m : inputs) vars.push_back(tape.variable(m));
  const ad::Var out = f(vars);
  tape.backward(ad::sum(ad::mul_const(out, w)));

  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat g = tape.grad(vars[k]);
    ASSERT_EQ(g.rows(), inputs[k].rows());
    ASSERT_EQ(g.cols(), inputs[k].cols());
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      const double fd = (scalar(plus) - scalar(minus)) / (2.0 * h);
      EXPECT_NEAR(g.data()[i], fd, tol * std::max(1.0, std::abs(fd))) << "input " << k << " entry " << i;
    }
  }
}

TEST(Autodiff, ElementwiseBinaryOpsWithBroadcasting) {
  std::mt19937_64 rng(1);
  const Mat a = test::random_mat(3, 4, rng);
  const Mat row = test::random_mat(1, 4, rng);
  const Mat col = test::random_mat(3, 1, rng);
  const Mat scalar = test::random_mat(1, 1, rng);
  Mat pos = test::random_mat(3, 4, rng).cwiseAbs();
  pos.array() += 0.5;

  check_gradients([](auto& v) { return v[0] + v[1]; }, {a, row});
  check_gradients([](auto& v) { return v[0] - v[1]; }, {col, a});
  check_gradients([](auto& v) { return v[0] * v[1]; }, {a, scalar});
  check_gradients([](auto& v) { return v[0] / v[1]; }, {a, pos});
  check_gradients([](auto& v) { return v[0] * v[1]; }, {col, row});
  check_gradients([](auto& v) { return -v[0] + 2.0 * v[0] - v[0] / 3.0 + 1.5; }, {a});
}

TEST(Autodiff, MatrixProducts) {
  std::mt19937_64 rng(2);
  check_gradients([](auto& v) { return ad::matmul(v[0], v[1]); },
                  {test::random_mat(3, 5, rng), test::random_mat(5, 2, rng)});
  check_gradients([](auto& v) { return ad::matmul_nt(v[0], v[1]); },
                  {test::random_mat(3, 5, rng), test::random_mat(4, 5, rng)});
}

TEST(Autodiff, UnaryFunctions) {
  std::mt19937_64 rng(4);
  const Mat a = test::random_mat(3, 3, rng, 2.0);
  Mat pos = a.cwiseAbs();
  pos.array() += 0.1;
  check_gradients([](auto& v) { return ad::silu(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::silu_grad(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::tanh(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::softplus(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::sigmoid(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::exp(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::log(v[0]); }, {pos});
  check_gradients([](auto& v) { return ad::square(v[0]); }, {a});
}

TEST(Autodiff, Reductions) {
  std::mt19937_64 rng(5);
  const Mat a = test::random_mat(4, 3, rng);
  check_gradients([](auto& v) { return ad::sum(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::row_sum(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::mean(v[0]); }, {a});
  check_gradients([](auto& v) { return ad::concat_cols(v[0], v[1]); }, {a, test::random_mat(4, 2, rng)});
  check_gradients([](auto& v) { return ad::column(v[0], 1); }, {a});
}

TEST(Autodiff, SiluDerivativeValues) {
  ad::Tape tape;
  const Mat x = (Mat(1, 3) << -1.0, 0.0, 2.0).finished();
  const Mat g = ad::silu_grad(tape.constant(x)).value();
  for (int j = 0; j < 3; ++j) {
    const double s = 1.0 / (1.0 + std::exp(-x(0, j)));
    EXPECT_NEAR(g(0, j), s * (1.0 + x(0, j) * (1.0 - s)), 1e-15);
  }
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  ad::Tape tape;
  const ad::Var x = tape.variable(Mat::Constant(1, 1, 3.0));
  const ad::Var y = x * x + x;
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 7.0);
}

TEST(Autodiff, ClearGradsResetsAdjoints) {
  ad::Tape tape;
  const ad::Var x = tape.variable(Mat::Constant(1, 1, 2.0));
  const ad::Var y = ad::square(x);
  tape.backward(y);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 8.0);
  tape.clear_grads();
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 4.0);
}

TEST(Autodiff, ConstantsReceiveNoGradient) {
  ad::Tape tape;
  const ad::Var c = tape.constant(Mat::Constant(2, 2, 1.0));
  const ad::Var x = tape.variable(Mat::Constant(2, 2, 1.0));
  tape.backward(ad::sum(c * x));
  EXPECT_TRUE(tape.grad(c).isZero());
  EXPECT_TRUE(tape.grad(x).isOnes());
}

TEST(Autodiff, IncompatibleShapesThrow) {
  ad::Tape tape;
  const ad::Var a = tape.constant(Mat::Zero(3, 2));
  const ad::Var b = tape.constant(Mat::Zero(2, 3));
  EXPECT_ANY_THROW(a + b);
  EXPECT_ANY_THROW(ad::matmul(a, a));
}

TEST(Autodiff, BroadcastHelpersRoundTrip) {
  const Mat row = (Mat(1, 3) << 1, 2, 3).finished();
  const Mat big = ad::broadcast_to(row, 4, 3);
  EXPECT_EQ(big.rows(), 4);
  EXPECT_TRUE(ad::reduce_to(big, 1, 3).isApprox(4.0 * row));
}

}  // namespace
}  // namespace ndm
