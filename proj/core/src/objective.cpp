#include "ndm/objective.hpp"

#include "ndm/errors.hpp"

#include <cmath>
#include <numbers>

namespace ndm {

namespace {

Mat column_of(const Vec& v) { return Mat(v); }

Mat gaussian_mat(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Mat m(rows, cols);
  // fill row by row so a prefix of rows does not depend on the batch size
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

Vec map_times(const Vec& t, auto&& f) { return t.unaryExpr([&](double u) { return f(u); }); }

}  // namespace

Mat xhat(const NdmModel& model, const Mat& z, const Vec& t) {
  if (z.rows() != t.size()) throw ContractError("xhat: batch size and time count differ");
  const Mat eps = net_forward(model.eps_spec, model.eps_params, z, t);
  const Vec a = map_times(t, [&](double u) { return model.schedule.alpha(u); });
  const Vec s = map_times(t, [&](double u) { return std::sqrt(model.schedule.sigma2(u)); });
  return a.cwiseInverse().asDiagonal() * (z - s.asDiagonal() * eps);
}

Vec xhat(const NdmModel& model, const Vec& z, double t) {
  return xhat(model, Mat(z.transpose()), Vec::Constant(1, t)).row(0).transpose();
}

double kl_between_posteriors(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& xhat_value,
                             double s, double t) {
  if (x.size() != xhat_value.size()) throw ContractError("kl: dimension mismatch");
  if (s >= t) throw DomainError("kl: requires s < t");
  const double var = schedule.tilde_sigma2(s, t);
  if (!(var > 0.0)) throw NumericalError("kl: posterior variance is zero");
  const double c = std::sqrt(schedule.sigma2(s) - var) / std::sqrt(schedule.sigma2(t));
  const double as = schedule.alpha(s);
  const double at = schedule.alpha(t);
  const Vec m = as * (transform.apply(x, s) - transform.apply(xhat_value, s)) +
                c * at * (transform.apply(xhat_value, t) - transform.apply(x, t));
  return m.squaredNorm() / (2.0 * var);
}

double kl_diffusion_term(const NdmModel& model, const Vec& x, const Vec& z_t, double s, double t) {
  return kl_between_posteriors(model.transform, model.schedule, x, xhat(model, z_t, t), s, t);
}

double prior_term(const NdmModel& model, const Vec& x) {
  const double s2 = model.schedule.sigma2(1.0);
  const double a = model.schedule.alpha(1.0);
  const double d = static_cast<double>(x.size());
  return 0.5 * (d * (s2 - std::log(s2) - 1.0) + a * a * model.transform.apply(x, 1.0).squaredNorm());
}

double rec_term(const NdmModel& model, const Vec& x, const Vec& z_near0) {
  if (x.size() != z_near0.size()) throw ContractError("rec: dimension mismatch");
  const double sr2 = model.sigma_rec() * model.sigma_rec();
  const double a = model.schedule.alpha(model.schedule.time_min());
  const double d = static_cast<double>(x.size());
  return 0.5 * d * std::log(2.0 * std::numbers::pi * sr2) + (x - z_near0 / a).squaredNorm() / (2.0 * sr2);
}

double continuous_integrand(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& xhat_value,
                            double t) {
  if (x.size() != xhat_value.size()) throw ContractError("integrand: dimension mismatch");
  const ScheduleValues v = schedule.at(t);
  const Mat both = (Mat(2, x.size()) << x.transpose(), xhat_value.transpose()).finished();
  const auto fd = transform.apply_with_time_derivative(both, Vec::Constant(2, t));
  const double k = 0.5 * (v.dsigma2_dt - 2.0 * v.r * v.sigma2 + v.g2);
  const Eigen::RowVectorXd ds = v.alpha * (fd.value.row(0) - fd.value.row(1)) / v.sigma2;
  const Eigen::RowVectorXd u = v.alpha * (fd.time_derivative.row(0) - fd.time_derivative.row(1)) - k * ds;
  return u.squaredNorm() / (2.0 * v.g2);
}

double continuous_integrand(const NdmModel& model, const Vec& x, const Vec& z, double t) {
  return continuous_integrand(model.transform, model.schedule, x, xhat(model, z, t), t);
}

LossNoise draw_loss_noise(const NdmModel& model, LossMode mode, Eigen::Index batch, std::mt19937_64& rng) {
  if (batch < 1) throw ContractError("loss: empty batch");
  const Schedule& sch = model.schedule;
  LossNoise n;
  n.t.resize(batch);
  n.s.resize(batch);
  n.weight.resize(batch);
  const int T = sch.steps();
  for (Eigen::Index i = 0; i < batch; ++i) {
    switch (mode) {
      case LossMode::Discrete: {
        if (sch.continuous()) throw ContractError("loss: discrete objective needs a discrete schedule");
        if (T < 2) throw ContractError("loss: discrete objective needs T >= 2");
        const int idx = std::uniform_int_distribution<int>(2, T)(rng);
        n.t(i) = sch.grid_time(idx);
        n.s(i) = sch.grid_time(idx - 1);
        n.weight(i) = T - 1;
        break;
      }
      case LossMode::Continuous: {
        if (!sch.continuous()) throw ContractError("loss: continuous objective needs a continuous schedule");
        const TimeSample ts = sch.importance_sample_time(rng);
        n.t(i) = ts.t;
        n.s(i) = ts.t;
        n.weight(i) = ts.weight;
        break;
      }
      case LossMode::Simple: {
        if (sch.continuous()) {
          n.t(i) = std::uniform_real_distribution<double>(sch.time_min(), 1.0)(rng);
        } else {
          n.t(i) = sch.grid_time(std::uniform_int_distribution<int>(1, T)(rng));
        }
        n.s(i) = n.t(i);
        n.weight(i) = 1.0;
        break;
      }
    }
  }
  const int d = model.data_dim();
  n.eps = gaussian_mat(batch, d, rng);
  n.eps_rec = gaussian_mat(batch, d, rng);
  return n;
}

LossEvaluation evaluate_loss(const NdmModel& model, LossMode mode, const Mat& x, const LossNoise& noise,
                             bool with_gradients) {
  const Eigen::Index B = x.rows();
  const int d = model.data_dim();
  if (B < 1) throw ContractError("loss: empty batch");
  if (x.cols() != d) throw ContractError("loss: data dimension mismatch");
  if (noise.t.size() != B || noise.s.size() != B || noise.weight.size() != B || noise.eps.rows() != B ||
      noise.eps.cols() != d || noise.eps_rec.rows() != B || noise.eps_rec.cols() != d)
    throw ContractError("loss: noise shape mismatch");
  if (!x.allFinite()) throw ContractError("loss: non-finite data");

  const Schedule& sch = model.schedule;
  ad::Tape tape;
  const BoundNet eps_net = bind(tape, model.eps_spec, model.eps_params, with_gradients);
  const BoundTransform F(tape, model.transform, with_gradients && model.transform.is_learnable());
  const ad::Var X = tape.constant(x);

  const Vec& t = noise.t;
  const Vec a_t = map_times(t, [&](double u) { return sch.alpha(u); });
  const Vec sig_t = map_times(t, [&](double u) { return std::sqrt(sch.sigma2(u)); });
  const ad::Var eps = tape.constant(noise.eps);

  ad::Var prior_rows = tape.constant(Mat::Zero(B, 1));
  ad::Var rec_rows = tape.constant(Mat::Zero(B, 1));
  ad::Var diff_rows;

  if (mode != LossMode::Simple) {
    const double s2T = sch.sigma2(1.0);
    const double aT = sch.alpha(1.0);
    const ad::Var F1 = F.apply(X, Vec::Ones(B));
    prior_rows = 0.5 * aT * aT * ad::row_sum(ad::square(F1)) + 0.5 * d * (s2T - std::log(s2T) - 1.0);

    const double t0 = sch.time_min();
    const double a0 = sch.alpha(t0);
    const double sr2 = model.sigma_rec() * model.sigma_rec();
    const ad::Var F0 = F.apply(X, Vec::Constant(B, t0));
    const ad::Var z0 = a0 * F0 + tape.constant(std::sqrt(sch.sigma2(t0)) * noise.eps_rec);
    rec_rows = ad::row_sum(ad::square(X - z0 / a0)) / (2.0 * sr2) + 0.5 * d * std::log(2.0 * std::numbers::pi * sr2);
  }

  switch (mode) {
    case LossMode::Discrete: {
      const Vec& s = noise.s;
      Vec a_s(B), coef(B), scale(B);
      for (Eigen::Index i = 0; i < B; ++i) {
        const double var = sch.tilde_sigma2(s(i), t(i));
        if (!(var > 0.0)) throw NumericalError("loss: posterior variance is zero");
        a_s(i) = sch.alpha(s(i));
        coef(i) = std::sqrt(sch.sigma2(s(i)) - var) / sig_t(i) * a_t(i);
        scale(i) = noise.weight(i) / (2.0 * var);
      }
      const ad::Var Fx_t = F.apply(X, t);
      const ad::Var Fx_s = F.apply(X, s);
      const ad::Var z = ad::mul_const(Fx_t, column_of(a_t)) + ad::mul_const(eps, column_of(sig_t));
      const ad::Var eh = record_forward(eps_net, z, t);
      const ad::Var xh = ad::mul_const(z - ad::mul_const(eh, column_of(sig_t)), column_of(a_t.cwiseInverse()));
      const ad::Var Fxh_t = F.apply(xh, t);
      const ad::Var Fxh_s = F.apply(xh, s);
      const ad::Var m = ad::mul_const(Fx_s - Fxh_s, column_of(a_s)) + ad::mul_const(Fxh_t - Fx_t, column_of(coef));
      diff_rows = ad::mul_const(ad::row_sum(ad::square(m)), column_of(scale));
      break;
    }
    case LossMode::Continuous: {
      Vec k_over_s2(B), scale(B);
      for (Eigen::Index i = 0; i < B; ++i) {
        const ScheduleValues v = sch.at(t(i));
        k_over_s2(i) = 0.5 * (v.dsigma2_dt - 2.0 * v.r * v.sigma2 + v.g2) / v.sigma2 * v.alpha;
        scale(i) = noise.weight(i) / (2.0 * v.g2);
      }
      const auto fx = F.apply_with_time_derivative(X, t);
      const ad::Var z = ad::mul_const(fx.value, column_of(a_t)) + ad::mul_const(eps, column_of(sig_t));
      const ad::Var eh = record_forward(eps_net, z, t);
      const ad::Var xh = ad::mul_const(z - ad::mul_const(eh, column_of(sig_t)), column_of(a_t.cwiseInverse()));
      const auto fxh = F.apply_with_time_derivative(xh, t);
      const ad::Var u = ad::mul_const(fx.time_derivative - fxh.time_derivative, column_of(a_t)) -
                        ad::mul_const(fx.value - fxh.value, column_of(k_over_s2));
      diff_rows = ad::mul_const(ad::row_sum(ad::square(u)), column_of(scale));
      break;
    }
    case LossMode::Simple: {
      const ad::Var Fx = F.apply(X, t);
      const ad::Var z = ad::mul_const(Fx, column_of(a_t)) + ad::mul_const(eps, column_of(sig_t));
      const ad::Var eh = record_forward(eps_net, z, t);
      diff_rows = ad::row_sum(ad::square(eh - eps));
      break;
    }
  }

  const ad::Var rows = prior_rows + rec_rows + diff_rows;
  const ad::Var total = ad::mean(rows);
  const double total_value = total.value()(0, 0);
  if (!std::isfinite(total_value)) throw NumericalError("loss: non-finite value");

  LossEvaluation out;
  out.per_example = rows.value().col(0);
  out.breakdown.l_prior = prior_rows.value().mean();
  out.breakdown.l_rec = rec_rows.value().mean();
  out.breakdown.l_diff = diff_rows.value().mean();
  out.breakdown.total = total_value;
  out.breakdown.batch_size = static_cast<int>(B);
  if (with_gradients) {
    tape.backward(total);
    out.eps_grad = collect_gradient(tape, eps_net);
    out.transform_grad = F.gradient();
  }
  return out;
}

LossBreakdown loss_discrete(const NdmModel& model, const Mat& x, std::mt19937_64& rng) {
  const LossNoise n = draw_loss_noise(model, LossMode::Discrete, x.rows(), rng);
  return evaluate_loss(model, LossMode::Discrete, x, n, false).breakdown;
}

LossBreakdown loss_continuous(const NdmModel& model, const Mat& x, std::mt19937_64& rng) {
  const LossNoise n = draw_loss_noise(model, LossMode::Continuous, x.rows(), rng);
  return evaluate_loss(model, LossMode::Continuous, x, n, false).breakdown;
}

}  // namespace ndm
