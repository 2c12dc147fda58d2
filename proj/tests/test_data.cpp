#include "ndm/data.hpp"
#include "ndm/errors.hpp"
#include "ndm/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace ndm {
namespace {

TEST(Datasets, CheckerboardOccupiesEvenSquaresUniformly) {
  std::mt19937_64 rng(1);
  const Mat x = generate(DatasetKind::Checkerboard2d, 40000, rng);
  ASSERT_EQ(x.cols(), 2);
  std::vector<int> counts(16, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    ASSERT_GE(x.row(i).minCoeff(), -2.0);
    ASSERT_LE(x.row(i).maxCoeff(), 2.0);
    const int a = static_cast<int>(std::floor(x(i, 0) + 2)), b = static_cast<int>(std::floor(x(i, 1) + 2));
    ASSERT_EQ((a + b) % 2, 0);
    ++counts[4 * a + b];
  }
  for (int a = 0; a < 4; ++a)
    for (int b = (a % 2); b < 4; b += 2) EXPECT_NEAR(counts[4 * a + b], 5000, 300);
}

TEST(Datasets, MixtureMatchesItsCdf) {
  std::mt19937_64 rng(2);
  const Mat x = generate(DatasetKind::GaussianMixture1d, 20000, rng);
  ASSERT_EQ(x.cols(), 1);
  EXPECT_NEAR(x.mean(), 0.0, 0.05);
  EXPECT_NEAR((x.array() - x.mean()).square().mean(), 4.25, 0.1);
  EXPECT_GT(ks_test_1d(x.col(0), gaussian_mixture_1d_cdf).p_value, 1e-3);
  EXPECT_NEAR(gaussian_mixture_1d_cdf(0.0), 0.5, 1e-15);
  EXPECT_NEAR(gaussian_mixture_1d_cdf(2.0), 0.25 + 0.25 * std::erfc(-8 / std::sqrt(2.0)), 1e-12);
  EXPECT_NEAR(gaussian_mixture_1d_cdf(-1.5), 0.25 * std::erfc(-1 / std::sqrt(2.0)) + 0.25 * std::erfc(7 / std::sqrt(2.0)), 1e-12);
}

TEST(Datasets, EightGaussiansOnCircle) {
  std::mt19937_64 rng(3);
  const Mat x = generate(DatasetKind::EightGaussians2d, 5000, rng);
  const Eigen::ArrayXd r = x.rowwise().norm().array();
  EXPECT_NEAR(r.mean(), 2.0, 0.02);
  EXPECT_LT(r.maxCoeff(), 2.6);
}

TEST(Datasets, SeededGenerationIsReproducible) {
  const DatasetSpec spec{DatasetKind::Checkerboard2d, 100, 42};
  EXPECT_EQ(generate(spec), generate(spec));
  EXPECT_NE(generate(spec), generate(DatasetSpec{DatasetKind::Checkerboard2d, 100, 43}));
}

TEST(Datasets, NamesRoundTrip) {
  for (DatasetKind k : {DatasetKind::Checkerboard2d, DatasetKind::GaussianMixture1d, DatasetKind::EightGaussians2d})
    EXPECT_EQ(parse_dataset_kind(to_string(k)), k);
  EXPECT_EQ(dataset_dim(DatasetKind::GaussianMixture1d), 1);
  EXPECT_THROW(parse_dataset_kind("mnist"), ContractError);
}

TEST(Normalization, StandardisesAndInverts) {
  std::mt19937_64 rng(4);
  Mat x = generate(DatasetKind::GaussianMixture1d, 1000, rng);
  x = (x.array() * 3 + 1).matrix();
  const Normalization n = Normalization::fit(x);
  const Mat y = n.apply(x);
  EXPECT_NEAR(y.mean(), 0.0, 1e-12);
  EXPECT_NEAR(std::sqrt(y.array().square().mean()), 1.0, 1e-3);
  EXPECT_TRUE(n.invert(y).isApprox(x, 1e-12));
  EXPECT_NEAR(n.log_abs_det(), -std::log(n.scale(0)), 1e-15);
  EXPECT_EQ(Normalization::identity(2).apply(Mat::Ones(1, 2)), Mat::Ones(1, 2));
}

TEST(Split, PartitionsRowsAndIsSeedStable) {
  Mat x(100, 1);
  for (int i = 0; i < 100; ++i) x(i, 0) = i;
  const TrainTestSplit s = split_train_test(x, 0.9, 7);
  ASSERT_EQ(s.train.rows(), 90);
  ASSERT_EQ(s.test.rows(), 10);
  std::vector<double> all(s.train.data(), s.train.data() + 90);
  all.insert(all.end(), s.test.data(), s.test.data() + 10);
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(split_train_test(x, 0.9, 7).test, s.test);
  EXPECT_NE(split_train_test(x, 0.9, 8).test, s.test);
  EXPECT_THROW(split_train_test(x, 1.5, 0), ContractError);
}

}  // namespace
}  // namespace ndm
