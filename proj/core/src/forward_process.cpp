#include "ndm/forward_process.hpp"

#include "ndm/errors.hpp"
#include "ndm/model.hpp"

#include <algorithm>
#include <cmath>

namespace ndm {

double NdmModel::sigma_rec() const { return std::max(std::sqrt(schedule.sigma2(schedule.time_min())), 1e-2); }

namespace {

Vec alphas(const Schedule& schedule, const Vec& t) { return t.unaryExpr([&](double u) { return schedule.alpha(u); }); }

Vec sigma2s(const Schedule& schedule, const Vec& t) {
  return t.unaryExpr([&](double u) { return schedule.sigma2(u); });
}

}  // namespace

Mat marginal_sample(const Transform& transform, const Schedule& schedule, const Mat& x, const Vec& t,
                    const Mat& eps) {
  if (eps.rows() != x.rows() || eps.cols() != x.cols()) throw ContractError("marginal_sample: noise shape mismatch");
  const Mat f = transform.apply(x, t);
  const Vec a = alphas(schedule, t);
  const Vec s = sigma2s(schedule, t).cwiseSqrt();
  return a.asDiagonal() * f + s.asDiagonal() * eps;
}

Vec marginal_sample(const Transform& transform, const Schedule& schedule, const Vec& x, double t, const Vec& eps) {
  return marginal_sample(transform, schedule, Mat(x.transpose()), Vec::Constant(1, t), Mat(eps.transpose()))
      .row(0)
      .transpose();
}

double posterior_variance(const Schedule& schedule, double s, double t, double noise_scale) {
  if (s > t) throw DomainError("posterior: requires s <= t");
  const double v = noise_scale * noise_scale * schedule.tilde_sigma2(s, t);
  if (v > schedule.sigma2(s) * (1.0 + 1e-12))
    throw ContractError("posterior: variance exceeds sigma_s^2 (schedule invariant breached)");
  return v;
}

Mat posterior_mean(const Transform& transform, const Schedule& schedule, const Mat& x, const Mat& z_t, double s,
                   double t, double noise_scale) {
  const double var = posterior_variance(schedule, s, t, noise_scale);
  const double as = schedule.alpha(s);
  const double at = schedule.alpha(t);
  const double s2s = schedule.sigma2(s);
  const double c = std::sqrt(std::max(0.0, s2s - var) / schedule.sigma2(t));
  Mat fs = transform.apply(x, Vec::Constant(x.rows(), s));
  Mat ft = transform.apply(x, Vec::Constant(x.rows(), t));
  if (x.rows() == 1 && z_t.rows() != 1) {
    const Eigen::RowVectorXd base = (as * fs - c * at * ft).row(0);
    Mat out = c * z_t;
    out.rowwise() += base;
    return out;
  }
  if (x.rows() != z_t.rows() || x.cols() != z_t.cols()) throw ContractError("posterior: shape mismatch");
  return as * fs + c * (z_t - at * ft);
}

PosteriorParams posterior_params(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& z_t,
                                 double s, double t, double noise_scale) {
  if (x.size() != z_t.size()) throw ContractError("posterior: x and z_t dimensions differ");
  Mat m = posterior_mean(transform, schedule, Mat(x.transpose()), Mat(z_t.transpose()), s, t, noise_scale);
  return {m.row(0).transpose(), posterior_variance(schedule, s, t, noise_scale)};
}

Mat score(const Transform& transform, const Schedule& schedule, const Mat& x, const Mat& z, const Vec& t) {
  if (x.rows() != z.rows() || x.cols() != z.cols()) throw ContractError("score: shape mismatch");
  const Vec s2 = sigma2s(schedule, t);
  if ((s2.array() <= 0.0).any()) throw NumericalError("score: sigma_t = 0");
  const Mat f = transform.apply(x, t);
  return s2.cwiseInverse().asDiagonal() * (alphas(schedule, t).asDiagonal() * f - z);
}

Vec score(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& z, double t) {
  return score(transform, schedule, Mat(x.transpose()), Mat(z.transpose()), Vec::Constant(1, t)).row(0).transpose();
}

Mat forward_sde_drift(const Transform& transform, const Schedule& schedule, const Mat& x, const Mat& z, const Vec& t,
                      double noise_scale) {
  if (!schedule.continuous()) throw ContractError("forward_sde_drift: continuous mode only");
  if (x.rows() != z.rows() || x.cols() != z.cols()) throw ContractError("forward_sde_drift: shape mismatch");
  const auto fd = transform.apply_with_time_derivative(x, t);
  Mat out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const ScheduleValues v = schedule.at(t(i));
    const auto sc = (v.alpha * fd.value.row(i) - z.row(i)) / v.sigma2;
    const double k = 0.5 * (v.dsigma2_dt - 2.0 * v.r * v.sigma2 + noise_scale * noise_scale * v.g2);
    out.row(i) = v.alpha * fd.time_derivative.row(i) + v.r * z.row(i) - k * sc;
  }
  return out;
}

Vec forward_sde_drift(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& z, double t,
                      double noise_scale) {
  return forward_sde_drift(transform, schedule, Mat(x.transpose()), Mat(z.transpose()), Vec::Constant(1, t),
                           noise_scale)
      .row(0)
      .transpose();
}

}  // namespace ndm
