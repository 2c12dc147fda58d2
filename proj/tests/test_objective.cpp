#include "ndm/errors.hpp"
#include "ndm/forward_process.hpp"
#include "ndm/objective.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace ndm {
namespace {

const TransformKind kAllKinds[] = {TransformKind::Identity, TransformKind::FixedDiagonal, TransformKind::Learnable};

// KL between the two posteriors built independently from posterior_params
// and a full-covariance Gaussian KL.
double reference_kl(const NdmModel& m, const Vec& x, const Vec& z, double s, double t) {
  const Vec xh = xhat(m, z, t);
  const PosteriorParams q = posterior_params(m.transform, m.schedule, x, z, s, t);
  const PosteriorParams p = posterior_params(m.transform, m.schedule, xh, z, s, t);
  const Mat S = q.variance * Mat::Identity(x.size(), x.size());
  return test::gaussian_kl(q.mean, S, p.mean, S);
}

TEST(Objective, DiffusionKlMatchesGenericGaussianKl) {
  std::mt19937_64 rng(1);
  for (TransformKind kind : kAllKinds) {
    for (int k = 0; k < 30; ++k) {
      const NdmModel m = test::tiny_model(test::continuous_config(), test::random_transform(kind, 2, rng), rng);
      double s = test::uniform(rng, 1e-3, 1.0), t = test::uniform(rng, 1e-3, 1.0);
      if (s > t) std::swap(s, t);
      const Vec x = test::random_vec(2, rng), z = test::random_vec(2, rng);
      const double a = kl_diffusion_term(m, x, z, s, t);
      const double b = reference_kl(m, x, z, s, t);
      EXPECT_LE(std::abs(a - b), 1e-10 * std::max(1.0, std::abs(b)));
    }
  }
}

TEST(Objective, PriorTermMatchesGenericGaussianKl) {
  std::mt19937_64 rng(2);
  for (TransformKind kind : kAllKinds) {
    const NdmModel m = test::tiny_model(test::continuous_config(), test::random_transform(kind, 3, rng), rng);
    const Vec x = test::random_vec(3, rng, 2.0);
    const double a1 = m.schedule.alpha(1.0), s2 = m.schedule.sigma2(1.0);
    const double ref = test::gaussian_kl(a1 * m.transform.apply(x, 1.0), s2 * Mat::Identity(3, 3), Vec::Zero(3),
                                         Mat::Identity(3, 3));
    EXPECT_NEAR(prior_term(m, x), ref, 1e-10);
  }
}

TEST(Objective, ReconstructionTermIsGaussianNegLogDensity) {
  std::mt19937_64 rng(3);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  const Vec x = test::random_vec(2, rng), z = test::random_vec(2, rng);
  const double a = m.schedule.alpha(m.schedule.time_min()), sr = m.sigma_rec();
  double ref = 0;
  for (int j = 0; j < 2; ++j) {
    const double u = (x(j) - z(j) / a) / sr;
    ref += 0.5 * u * u + std::log(sr) + 0.5 * std::log(2 * std::numbers::pi);
  }
  EXPECT_NEAR(rec_term(m, x, z), ref, 1e-12 * std::max(1.0, ref));
}

TEST(Objective, PerfectPredictionHasNoDiffusionCost) {
  std::mt19937_64 rng(4);
  const Transform tr = test::random_learnable(2, rng);
  const Schedule sch(test::continuous_config());
  const Vec x = test::random_vec(2, rng);
  EXPECT_DOUBLE_EQ(kl_between_posteriors(tr, sch, x, x, 0.2, 0.4), 0.0);
  EXPECT_DOUBLE_EQ(continuous_integrand(tr, sch, x, x, 0.4), 0.0);
}

TEST(Objective, IdentityKlIsDdpmEpsilonWeighting) {
  std::mt19937_64 rng(5);
  const NdmModel m = test::tiny_model(test::discrete_config(1000), Transform::identity(2), rng);
  for (int i : {2, 50, 999}) {
    const double t = i / 1000.0, s = (i - 1) / 1000.0;
    const Vec x = test::random_vec(2, rng), eps = test::random_vec(2, rng);
    const double ab = m.schedule.alpha_bar(i), ab_prev = m.schedule.alpha_bar(i - 1), beta = m.schedule.beta_discrete(i);
    const Vec z = std::sqrt(ab) * x + std::sqrt(1 - ab) * eps;
    const Vec eh = net_forward(m.eps_spec, m.eps_params, z, t);
    const double tilde_beta = (1 - ab_prev) / (1 - ab) * beta;
    const double ref = beta * beta / (2 * tilde_beta * (1 - beta) * (1 - ab)) * (eps - eh).squaredNorm();
    EXPECT_NEAR(kl_diffusion_term(m, x, z, s, t), ref, 1e-12 * std::max(1.0, ref));
  }
}

TEST(Objective, IdentityContinuousIntegrandIsLikelihoodWeightedScoreMatching) {
  std::mt19937_64 rng(6);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  const Vec x = test::random_vec(2, rng), z = test::random_vec(2, rng);
  for (double t : {0.01, 0.3, 0.9}) {
    const ScheduleValues v = m.schedule.at(t);
    const Vec xh = xhat(m, z, t);
    const Vec ds = v.alpha * (x - xh) / v.sigma2;
    const double ref = 0.5 * v.g2 * ds.squaredNorm();
    EXPECT_NEAR(continuous_integrand(m, x, z, t), ref, 1e-12 * std::max(1.0, ref));
  }
}

// T * KL(t - 1/T, t) approaches the integrand with O(1/T) error.
TEST(Objective, DiscreteKlConvergesToContinuousIntegrand) {
  std::mt19937_64 rng(7);
  const Schedule sch(test::continuous_config());
  const Transform tr = test::random_learnable(2, rng);
  const Vec x = test::random_vec(2, rng), xh = test::random_vec(2, rng);
  const double t = 0.5;
  const double target = continuous_integrand(tr, sch, x, xh, t);
  double prev = -1;
  for (int e = 6; e <= 12; ++e) {
    const double T = std::ldexp(1.0, e);
    const double err = std::abs(T * kl_between_posteriors(tr, sch, x, xh, t - 1 / T, t) - target);
    if (prev > 0) {
      EXPECT_GT(err / prev, 0.4);
      EXPECT_LT(err / prev, 0.6);
    }
    prev = err;
  }
}

TEST(Objective, EvaluateLossAgreesWithScalarTerms) {
  std::mt19937_64 rng(8);
  for (bool discrete : {true, false}) {
    const ScheduleConfig sc = discrete ? test::discrete_config(20) : test::continuous_config();
    const NdmModel m = test::tiny_model(sc, test::random_learnable(2, rng), rng);
    const LossMode mode = discrete ? LossMode::Discrete : LossMode::Continuous;
    const Mat x = test::random_mat(6, 2, rng);
    const LossNoise n = draw_loss_noise(m, mode, 6, rng);
    const LossEvaluation ev = evaluate_loss(m, mode, x, n, false);
    double total = 0;
    for (int i = 0; i < 6; ++i) {
      const Vec xi = x.row(i).transpose();
      const double t0 = m.schedule.time_min();
      const Vec z0 = marginal_sample(m.transform, m.schedule, xi, t0, Vec(n.eps_rec.row(i).transpose()));
      const Vec zt = marginal_sample(m.transform, m.schedule, xi, n.t(i), Vec(n.eps.row(i).transpose()));
      const double diff = discrete ? kl_diffusion_term(m, xi, zt, n.s(i), n.t(i))
                                   : continuous_integrand(m, xi, zt, n.t(i));
      const double ref = prior_term(m, xi) + rec_term(m, xi, z0) + n.weight(i) * diff;
      EXPECT_NEAR(ev.per_example(i), ref, 1e-10 * std::max(1.0, std::abs(ref)));
      total += ref;
    }
    EXPECT_NEAR(ev.breakdown.total, total / 6, 1e-10 * std::max(1.0, std::abs(total)));
    EXPECT_NEAR(ev.breakdown.l_prior + ev.breakdown.l_rec + ev.breakdown.l_diff, ev.breakdown.total, 1e-10);
  }
}

TEST(Objective, DiscreteNoiseDrawsInteriorSteps) {
  std::mt19937_64 rng(9);
  const NdmModel m = test::tiny_model(test::discrete_config(10), Transform::identity(1), rng);
  const LossNoise n = draw_loss_noise(m, LossMode::Discrete, 2000, rng);
  EXPECT_NEAR(n.t.minCoeff(), 0.2, 1e-12);
  EXPECT_NEAR(n.t.maxCoeff(), 1.0, 1e-12);
  EXPECT_TRUE(((n.t - n.s).array() - 0.1).abs().maxCoeff() < 1e-12);
  EXPECT_TRUE((n.weight.array() == 9.0).all());
  EXPECT_THROW(draw_loss_noise(m, LossMode::Continuous, 4, rng), ContractError);
}

void check_loss_gradients(LossMode mode, const ScheduleConfig& sc, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  NdmModel m = test::tiny_model(sc, test::random_learnable(2, rng, 0.5), rng);
  const Mat x = test::random_mat(4, 2, rng);
  const LossNoise n = draw_loss_noise(m, mode, 4, rng);
  const LossEvaluation ev = evaluate_loss(m, mode, x, n, true);
  ASSERT_EQ(ev.eps_grad.size(), m.eps_params.values.size());
  ASSERT_EQ(ev.transform_grad.size(), m.transform.params().values.size());

  auto loss_at = [&](const NdmModel& mm) { return evaluate_loss(mm, mode, x, n, false).breakdown.total; };
  for (std::size_t k = 0; k < m.eps_params.values.size(); ++k) {
    NdmModel mm = m;
    const double fd = test::central_difference(
        [&](double v) {
          mm.eps_params.values[k] = v;
          return loss_at(mm);
        },
        m.eps_params.values[k], 1e-5);
    EXPECT_LT(test::rel_err(ev.eps_grad[k], fd, 1e-5), 1e-3) << "theta " << k;
  }
  for (std::size_t k = 0; k < m.transform.params().values.size(); ++k) {
    NdmModel mm = m;
    const double fd = test::central_difference(
        [&](double v) {
          mm.transform.params().values[k] = v;
          return loss_at(mm);
        },
        m.transform.params().values[k], 1e-5);
    EXPECT_LT(test::rel_err(ev.transform_grad[k], fd, 1e-5), 1e-3) << "phi " << k;
  }
}

TEST(Objective, DiscreteLossGradientsMatchFiniteDifference) {
  check_loss_gradients(LossMode::Discrete, test::discrete_config(10), 10);
}

TEST(Objective, ContinuousLossGradientsMatchFiniteDifference) {
  check_loss_gradients(LossMode::Continuous, test::continuous_config(), 11);
}

TEST(Objective, SimpleLossGradientsMatchFiniteDifference) {
  check_loss_gradients(LossMode::Simple, test::continuous_config(), 12);
}

TEST(Objective, SimpleLossIsEpsilonMse) {
  std::mt19937_64 rng(13);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  const Mat x = test::random_mat(3, 2, rng);
  const LossNoise n = draw_loss_noise(m, LossMode::Simple, 3, rng);
  const LossEvaluation ev = evaluate_loss(m, LossMode::Simple, x, n, false);
  const Mat z = marginal_sample(m.transform, m.schedule, x, n.t, n.eps);
  const Mat eh = net_forward(m.eps_spec, m.eps_params, z, n.t);
  EXPECT_NEAR(ev.breakdown.total, (eh - n.eps).rowwise().squaredNorm().mean(), 1e-12);
  EXPECT_EQ(ev.breakdown.l_prior, 0.0);
}

TEST(Objective, ContractViolations) {
  std::mt19937_64 rng(14);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  const LossNoise n = draw_loss_noise(m, LossMode::Continuous, 3, rng);
  EXPECT_THROW(evaluate_loss(m, LossMode::Continuous, Mat::Zero(3, 3), n, false), ContractError);
  EXPECT_THROW(evaluate_loss(m, LossMode::Continuous, Mat::Zero(4, 2), n, false), ContractError);
  EXPECT_THROW(kl_diffusion_term(m, Vec::Zero(2), Vec::Zero(2), 0.5, 0.4), DomainError);
  Mat bad = Mat::Zero(3, 2);
  bad(0, 0) = std::nan("");
  EXPECT_THROW(evaluate_loss(m, LossMode::Continuous, bad, n, false), ContractError);
}

}  // namespace
}  // namespace ndm
