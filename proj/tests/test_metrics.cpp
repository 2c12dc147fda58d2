#include "ndm/errors.hpp"
#include "ndm/metrics.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ndm {
namespace {

double brute_energy(const Mat& a, const Mat& b) {
  auto mean_dist = [](const Mat& p, const Mat& q) {
    double s = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < q.rows(); ++j) s += (p.row(i) - q.row(j)).norm();
    return s / static_cast<double>(p.rows() * q.rows());
  };
  return 2 * mean_dist(a, b) - mean_dist(a, a) - mean_dist(b, b);
}

TEST(EnergyDistance, MatchesPairwiseDefinition) {
  std::mt19937_64 rng(1);
  for (int d : {1, 2}) {
    const Mat a = test::random_mat(40, d, rng), b = test::random_mat(30, d, rng, 1.5);
    EXPECT_NEAR(energy_distance(a, b), brute_energy(a, b), 1e-12);
    EXPECT_NEAR(energy_distance(a, b), energy_distance(b, a), 1e-12);
    EXPECT_GE(energy_distance(a, b), 0.0);
    EXPECT_NEAR(energy_distance(a, a), 0.0, 1e-12);
  }
  EXPECT_THROW(energy_distance(Mat::Zero(3, 2), Mat::Zero(3, 1)), ContractError);
}

TEST(EnergyDistance, PermutationTestSeparatesShift) {
  std::mt19937_64 rng(2);
  const Mat a = test::random_mat(100, 2, rng), b = test::random_mat(100, 2, rng);
  const PermutationTestResult same = energy_permutation_test(a, b, 199, rng);
  EXPECT_GT(same.p_value, 0.01);
  EXPECT_LE(same.statistic, same.null_quantile_999);
  const Mat shifted = (b.array() + 1.0).matrix();
  const PermutationTestResult diff = energy_permutation_test(a, shifted, 199, rng);
  EXPECT_LE(diff.p_value, 1.0 / 200 + 1e-12);
  EXPECT_GT(diff.statistic, diff.null_quantile_999);
}

TEST(KolmogorovSmirnov, SurvivalFunctionReferenceValues) {
  EXPECT_NEAR(kolmogorov_survival(1.0), 0.26999967, 1e-7);
  EXPECT_NEAR(kolmogorov_survival(1.358), 0.05, 2e-4);
  EXPECT_NEAR(kolmogorov_survival(0.0), 1.0, 1e-15);
  EXPECT_LT(kolmogorov_survival(5.0), 1e-20);
}

TEST(KolmogorovSmirnov, StatisticIsSupremumGap) {
  std::mt19937_64 rng(3);
  Vec u(50);
  for (int i = 0; i < 50; ++i) u(i) = test::uniform(rng, 0, 1);
  auto cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
  Vec s = u;
  std::sort(s.data(), s.data() + s.size());
  double d = 0;
  for (int i = 0; i < 50; ++i) d = std::max({d, (i + 1) / 50.0 - s(i), s(i) - i / 50.0});
  const KsResult r = ks_test_1d(u, cdf);
  EXPECT_NEAR(r.statistic, d, 1e-15);
  EXPECT_GT(r.p_value, 1e-3);
  const KsResult bad = ks_test_1d((u.array() * 0.5).matrix(), cdf);
  EXPECT_LT(bad.p_value, 1e-6);
}

TEST(Nelbo, EstimateBookkeeping) {
  std::mt19937_64 rng(4);
  const NdmModel m = test::tiny_model(test::continuous_config(), Transform::identity(2), rng);
  const Mat x = test::random_mat(30, 2, rng);
  const NelboResult r = nelbo_eval(m, LossMode::Continuous, x, 3, rng, 7);
  EXPECT_EQ(r.nats.n, 90);
  EXPECT_GT(r.nats.standard_error, 0.0);
  EXPECT_NEAR(r.bits_per_dim.mean, r.nats.mean / (2 * std::log(2.0)), 1e-12);
  EXPECT_NEAR(r.terms.l_prior + r.terms.l_rec + r.terms.l_diff, r.nats.mean, 1e-9);
  EXPECT_THROW(nelbo_eval(m, LossMode::Simple, x, 1, rng), ContractError);
  std::mt19937_64 r1(5), r2(5);
  EXPECT_EQ(nelbo_eval(m, LossMode::Continuous, x, 2, r1).nats.mean,
            nelbo_eval(m, LossMode::Continuous, x, 2, r2).nats.mean);
}

TEST(Reports, CsvLayout) {
  std::ostringstream out;
  write_metrics_csv(out, {{"run", "nelbo", 1.5, 0.25, 10}}, "abc");
  EXPECT_EQ(out.str(), "# config_hash=abc\nrun_id,metric,value,stderr,n\nrun,nelbo,1.5,0.25,10\n");
  std::ostringstream table;
  write_comparison_table(table, {{"a", 1, 0.1, 2, 0.2}}, "h");
  EXPECT_EQ(table.str().rfind("# config_hash=h\nmodel,NELBO,NELBO_stderr,NLL,NLL_stderr\n", 0), 0u);
}

}  // namespace
}  // namespace ndm
