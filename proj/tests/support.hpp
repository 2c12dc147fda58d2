#pragma once

// Test helpers and independent reference implementations.

#include "ndm/model.hpp"
#include "ndm/net.hpp"
#include "ndm/schedule.hpp"
#include "ndm/transform.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace ndm::test {

inline Vec random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

inline Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  return m;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Small random network whose output layer is not zero.
inline NetParams noisy_params(const NetSpec& spec, std::mt19937_64& rng, double scale = 1.0) {
  NetParams p = init_params(spec, rng, false);
  std::normal_distribution<double> normal(0.0, 0.1 * scale);
  for (double& v : p.values) v = v * scale + normal(rng);
  return p;
}

inline Transform random_learnable(int d, std::mt19937_64& rng, double scale = 1.0) {
  NetSpec spec = NetSpec::for_data(d, {6, 6}, TimeEmbedding::Sinusoidal, 2);
  return Transform::learnable(spec, noisy_params(spec, rng, scale));
}

inline Transform random_transform(TransformKind kind, int d, std::mt19937_64& rng) {
  switch (kind) {
    case TransformKind::Identity:
      return Transform::identity(d);
    case TransformKind::FixedDiagonal: {
      Vec c(d);
      for (int i = 0; i < d; ++i) c(i) = uniform(rng, 0.2, 3.0);
      return Transform::fixed_diagonal(c);
    }
    case TransformKind::Learnable:
      return random_learnable(d, rng);
  }
  return Transform::identity(d);
}

inline ScheduleConfig continuous_config() {
  ScheduleConfig c;
  c.mode = TimeMode::Continuous;
  return c;
}

inline ScheduleConfig discrete_config(int T) {
  ScheduleConfig c;
  c.mode = TimeMode::Discrete;
  c.steps = T;
  return c;
}

inline NdmModel tiny_model(const ScheduleConfig& sc, Transform tr, std::mt19937_64& rng) {
  const int d = tr.data_dim();
  NetSpec es = NetSpec::for_data(d, {8, 8}, TimeEmbedding::Sinusoidal, 2);
  NetParams ep = noisy_params(es, rng);
  return NdmModel{Schedule(sc), std::move(tr), es, ep};
}

/// KL(N(m0, S0) || N(m1, S1)) for full covariances, via Cholesky.
inline double gaussian_kl(const Vec& m0, const Mat& S0, const Vec& m1, const Mat& S1) {
  const Eigen::LLT<Mat> l1(S1), l0(S0);
  const double k = static_cast<double>(m0.size());
  const double trace = l1.solve(S0).trace();
  const Vec diff = m1 - m0;
  const double maha = diff.dot(l1.solve(diff));
  const double logdet1 = 2.0 * Eigen::Vector<double, Eigen::Dynamic>(Mat(l1.matrixL()).diagonal()).array().log().sum();
  const double logdet0 = 2.0 * Eigen::Vector<double, Eigen::Dynamic>(Mat(l0.matrixL()).diagonal()).array().log().sum();
  return 0.5 * (trace + maha - k + logdet1 - logdet0);
}

/// Central difference of a scalar function of one parameter entry.
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor)
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace ndm::test
