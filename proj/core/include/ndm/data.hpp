#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

namespace ndm {

using Mat = Eigen::MatrixXd;

enum class DatasetKind { Checkerboard2d, GaussianMixture1d, EightGaussians2d };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Checkerboard2d;
  Eigen::Index size = 10000;
  std::uint64_t seed = 0;
};

int dataset_dim(DatasetKind kind);
std::string to_string(DatasetKind kind);
/// Accepts "checkerboard-2d", "gaussian-mixture-1d", "eight-gaussians-2d".
DatasetKind parse_dataset_kind(const std::string& name);

/// i.i.d. draws, one row per sample.
///  - checkerboard: uniform over the 8 squares (i + j even) of a 4x4 board on [-2, 2]^2
///  - 1-D mixture: equal weights, means -2 and +2, standard deviation 0.5
///  - eight gaussians: means on the radius-2 circle, standard deviation 0.1
Mat generate(DatasetKind kind, Eigen::Index n, std::mt19937_64& rng);
Mat generate(const DatasetSpec& spec);

/// CDF of the 1-D mixture.
double gaussian_mixture_1d_cdf(double x);

/// Per-dimension affine map to zero mean and unit standard deviation.
struct Normalization {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Normalization fit(const Mat& data);
  static Normalization identity(int dim);
  Mat apply(const Mat& x) const;
  Mat invert(const Mat& y) const;
  /// log |det d apply / dx|, per sample.
  double log_abs_det() const;
};

struct TrainTestSplit {
  Mat train;
  Mat test;
};

/// Shuffles rows with `seed` and keeps the first `train_fraction` for training.
TrainTestSplit split_train_test(const Mat& data, double train_fraction, std::uint64_t seed);

}  // namespace ndm
