#include "ndm/errors.hpp"
#include "ndm/forward_process.hpp"
#include "ndm/objective.hpp"
#include "ndm/sampler.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace ndm {
namespace {

// eps network that outputs exactly zero, so xhat = z / alpha and the
// generative ODE is linear in z.
NdmModel zero_eps_model(Transform tr) {
  std::mt19937_64 rng(0);
  const NetSpec es = NetSpec::for_data(tr.data_dim(), {4}, TimeEmbedding::Sinusoidal, 2);
  NetParams ep = init_params(es, rng, true);
  return NdmModel{Schedule(test::continuous_config()), std::move(tr), es, ep};
}

double std_normal_logpdf(const Vec& z) {
  return -0.5 * z.squaredNorm() - 0.5 * z.size() * std::log(2 * std::numbers::pi);
}

TEST(SamplingGrid, ContinuousIsUniformAndDescending) {
  const Schedule s(test::continuous_config());
  const auto g = sampling_grid(s, 10);
  ASSERT_EQ(g.size(), 11u);
  EXPECT_DOUBLE_EQ(g.front(), 1.0);
  EXPECT_DOUBLE_EQ(g.back(), s.time_min());
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(g[i - 1] - g[i], (1 - s.time_min()) / 10, 1e-14);
}

TEST(SamplingGrid, DiscreteUsesGridTimes) {
  const Schedule s(test::discrete_config(100));
  const auto g = sampling_grid(s, 9);
  EXPECT_DOUBLE_EQ(g.front(), 1.0);
  EXPECT_DOUBLE_EQ(g.back(), 0.01);
  for (double t : g) EXPECT_NEAR(t * 100, std::round(t * 100), 1e-9);
  EXPECT_EQ(sampling_grid(s, 99).size(), 100u);
  EXPECT_THROW(sampling_grid(s, 100), ContractError);
  EXPECT_THROW(sampling_grid(s, 0), ContractError);
}

TEST(Samplers, DeterministicSamplerIsPureFunctionOfStart) {
  std::mt19937_64 rng(1);
  const NdmModel m = test::tiny_model(test::continuous_config(), test::random_learnable(2, rng), rng);
  const Mat z = test::random_mat(5, 2, rng);
  const Mat a = ddim_sample(m, z, 20);
  EXPECT_EQ(a, ddim_sample(m, z, 20));
  EXPECT_EQ(a, ancestral_sample(m, z, 20, 0.0, nullptr));
}

TEST(Samplers, StochasticSamplersReproducibleFromSeed) {
  std::mt19937_64 rng(2);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  std::mt19937_64 r1(7), r2(7), r3(8);
  EXPECT_EQ(ancestral_sample(m, 4, 10, r1), ancestral_sample(m, 4, 10, r2));
  EXPECT_NE(em_sample(m, 4, 10, r1), em_sample(m, 4, 10, r3));
}

TEST(Samplers, ZeroEpsModelHasClosedFormTrajectory) {
  const NdmModel m = zero_eps_model(Transform::identity(2));
  std::mt19937_64 rng(3);
  const Mat z = test::random_mat(3, 2, rng);
  const Mat expected = z / m.schedule.alpha(1.0);
  EXPECT_TRUE(ddim_sample(m, z, 7).isApprox(expected, 1e-12));
  Rk45Options o;
  o.atol = o.rtol = 1e-9;
  EXPECT_TRUE(ode_sample(m, z, o).isApprox(expected, 1e-6));
  EXPECT_TRUE(em_sample(m, z, 4000, rng, 0.0).isApprox(expected, 1e-2));
}

TEST(Samplers, ReverseDriftUsesPredictedData) {
  std::mt19937_64 rng(4);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  const Mat z = test::random_mat(3, 2, rng);
  const double t = 0.6;
  const ScheduleValues v = m.schedule.at(t);
  const Mat xh = xhat(m, z, Vec::Constant(3, t));
  const Mat s = (v.alpha * xh - z) / v.sigma2;
  EXPECT_TRUE(reverse_drift(m, z, t, 1.0).isApprox(-0.5 * v.beta * z - v.beta * s, 1e-12));
  EXPECT_TRUE(reverse_drift(m, z, t, 0.0).isApprox(-0.5 * v.beta * z - 0.5 * v.beta * s, 1e-12));
}

TEST(Samplers, TrajectoryRecordsEveryStep) {
  std::mt19937_64 rng(5);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  Trajectory tr;
  const Mat x = em_sample(m, 6, 12, rng, 1.0, &tr);
  ASSERT_EQ(tr.times.size(), 13u);
  ASSERT_EQ(tr.states.size(), 13u);
  EXPECT_TRUE(x.isApprox(tr.states.back() / m.schedule.alpha(m.schedule.time_min())));
}

TEST(Samplers, InvalidRequests) {
  std::mt19937_64 rng(6);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  EXPECT_THROW(em_sample(m, 4, 7, rng), ContractError);
  EXPECT_THROW(ddim_sample(m, Mat::Zero(2, 3), 5), ContractError);
  EXPECT_THROW(ancestral_sample(m, Mat::Zero(2, 2), 5, 1.0, nullptr), ContractError);
  const NdmModel d = test::tiny_model(test::discrete_config(10), Transform::identity(2), rng);
  EXPECT_THROW(em_sample(d, 4, 8, rng), ContractError);
  EXPECT_THROW(ode_sample(d, Mat::Zero(2, 2)), ContractError);
}

// With zero eps and a fixed diagonal transform the generative ODE is
// dz_j/dt = a_j(t) z_j; its flow and log-determinant follow from the
// integral of a_j, computed here with Simpson's rule.
TEST(OdeLikelihood, LinearFlowLogDensity) {
  const Vec c = (Vec(2) << 2.0, 0.4).finished();
  const NdmModel m = zero_eps_model(Transform::fixed_diagonal(c));
  const Schedule& sch = m.schedule;
  auto a = [&](int j, double t) {
    const ScheduleValues v = sch.at(t);
    const double ct = std::pow(c(j), t);
    return std::log(c(j)) * ct + v.r - 0.5 * (v.dsigma2_dt - 2 * v.r * v.sigma2) * (ct - 1) / v.sigma2;
  };
  const int n = 20000;
  const double t0 = sch.time_min(), h = (1 - t0) / n;
  Vec A = Vec::Zero(2);
  for (int j = 0; j < 2; ++j) {
    double acc = a(j, t0) + a(j, 1.0);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4 : 2) * a(j, t0 + i * h);
    A(j) = acc * h / 3;
  }
  std::mt19937_64 rng(7);
  const Mat z = test::random_mat(4, 2, rng, 0.5);
  NllOptions o;
  o.ode.atol = o.ode.rtol = 1e-9;
  const Vec lp = ode_log_density(m, z, o, rng);
  for (int i = 0; i < 4; ++i) {
    const Vec z1 = z.row(i).transpose().cwiseProduct(A.array().exp().matrix());
    EXPECT_NEAR(lp(i), std_normal_logpdf(z1) + A.sum(), 1e-5);
  }
}

TEST(OdeLikelihood, HutchinsonTraceExactForIsotropicFlow) {
  const NdmModel m = zero_eps_model(Transform::identity(5));
  std::mt19937_64 rng(8);
  const Mat z = test::random_mat(3, 5, rng);
  NllOptions o;
  o.ode.atol = o.ode.rtol = 1e-9;
  const Vec lp = ode_log_density(m, z, o, rng);
  const double ratio = m.schedule.alpha(1.0) / m.schedule.alpha(m.schedule.time_min());
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(lp(i), std_normal_logpdf(ratio * z.row(i).transpose()) + 5 * std::log(ratio), 1e-6);
}

// Zero eps with identity F gives p(x) = N(0, (1/alpha_1^2 + sigma_rec^2) I).
TEST(OdeLikelihood, NllMatchesGaussianMarginal) {
  const NdmModel m = zero_eps_model(Transform::identity(2));
  std::mt19937_64 rng(9);
  const Mat x = test::random_mat(50, 2, rng);
  const NllResult r = nll_ode(m, x, {}, rng);
  const double var = 1 / std::pow(m.schedule.alpha(1.0), 2) + std::pow(m.sigma_rec(), 2);
  double mean = 0;
  for (int i = 0; i < 50; ++i) {
    const double ref = 0.5 * x.row(i).squaredNorm() / var + std::log(2 * std::numbers::pi * var);
    EXPECT_NEAR(r.nll(i), ref, 1e-3);
    mean += ref / 50;
  }
  EXPECT_NEAR(r.mean, mean, 1e-3);
  EXPECT_NEAR(r.bits_per_dim, r.mean / (2 * std::log(2.0)), 1e-12);
  EXPECT_GT(r.standard_error, 0.0);
}

}  // namespace
}  // namespace ndm
