#include "ndm/data.hpp"

#include "ndm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace ndm {

int dataset_dim(DatasetKind kind) { return kind == DatasetKind::GaussianMixture1d ? 1 : 2; }

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::Checkerboard2d:
      return "checkerboard-2d";
    case DatasetKind::GaussianMixture1d:
      return "gaussian-mixture-1d";
    case DatasetKind::EightGaussians2d:
      return "eight-gaussians-2d";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "checkerboard-2d") return DatasetKind::Checkerboard2d;
  if (name == "gaussian-mixture-1d") return DatasetKind::GaussianMixture1d;
  if (name == "eight-gaussians-2d") return DatasetKind::EightGaussians2d;
  throw ContractError("unknown dataset kind '" + name + "'");
}

Mat generate(DatasetKind kind, Eigen::Index n, std::mt19937_64& rng) {
  if (n < 0) throw ContractError("generate: negative sample count");
  Mat out(n, dataset_dim(kind));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal;
  switch (kind) {
    case DatasetKind::Checkerboard2d: {
      // the 8 squares with (i + j) even, cell size 1, board [-2, 2]^2
      std::uniform_int_distribution<int> square(0, 7);
      for (Eigen::Index k = 0; k < n; ++k) {
        const int s = square(rng);
        const int i = s / 2;
        const int j = 2 * (s % 2) + (i % 2);
        out(k, 0) = -2.0 + i + unit(rng);
        out(k, 1) = -2.0 + j + unit(rng);
      }
      break;
    }
    case DatasetKind::GaussianMixture1d: {
      std::bernoulli_distribution coin(0.5);
      for (Eigen::Index k = 0; k < n; ++k) out(k, 0) = (coin(rng) ? 2.0 : -2.0) + 0.5 * normal(rng);
      break;
    }
    case DatasetKind::EightGaussians2d: {
      std::uniform_int_distribution<int> mode(0, 7);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double angle = mode(rng) * std::numbers::pi / 4.0;
        out(k, 0) = 2.0 * std::cos(angle) + 0.1 * normal(rng);
        out(k, 1) = 2.0 * std::sin(angle) + 0.1 * normal(rng);
      }
      break;
    }
  }
  return out;
}

Mat generate(const DatasetSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  return generate(spec.kind, spec.size, rng);
}

double gaussian_mixture_1d_cdf(double x) {
  auto phi = [](double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); };
  return 0.5 * phi((x + 2.0) / 0.5) + 0.5 * phi((x - 2.0) / 0.5);
}

Normalization Normalization::fit(const Mat& data) {
  if (data.rows() < 2) throw ContractError("normalization: need at least two samples");
  Normalization n;
  n.mean = data.colwise().mean();
  const Mat centered = data.rowwise() - n.mean;
  n.scale = (centered.array().square().colwise().sum() / static_cast<double>(data.rows() - 1)).sqrt().matrix();
  if ((n.scale.array() <= 0.0).any() || !n.scale.allFinite())
    throw ContractError("normalization: degenerate dimension");
  return n;
}

Normalization Normalization::identity(int dim) {
  return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
}

Mat Normalization::apply(const Mat& x) const {
  if (x.cols() != mean.size()) throw ContractError("normalization: dimension mismatch");
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Mat Normalization::invert(const Mat& y) const {
  if (y.cols() != mean.size()) throw ContractError("normalization: dimension mismatch");
  return (y.array().rowwise() * scale.array()).matrix().rowwise() + mean;
}

double Normalization::log_abs_det() const { return -scale.array().log().sum(); }

TrainTestSplit split_train_test(const Mat& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("split: fraction must lie in (0, 1)");
  std::vector<Eigen::Index> order(data.rows());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with explicit draws so the permutation does not depend on
  // the standard library's shuffle implementation
  for (Eigen::Index i = data.rows() - 1; i > 0; --i) {
    const Eigen::Index j = std::uniform_int_distribution<Eigen::Index>(0, i)(rng);
    std::swap(order[i], order[j]);
  }
  const auto n_train = static_cast<Eigen::Index>(std::llround(train_fraction * static_cast<double>(data.rows())));
  TrainTestSplit s{Mat(n_train, data.cols()), Mat(data.rows() - n_train, data.cols())};
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    if (i < n_train)
      s.train.row(i) = data.row(order[i]);
    else
      s.test.row(i - n_train) = data.row(order[i]);
  }
  return s;
}

}  // namespace ndm
