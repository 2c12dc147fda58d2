#include "ndm/ode.hpp"

#include "ndm/errors.hpp"

#include <algorithm>
#include <cmath>

namespace ndm {

using Eigen::VectorXd;

namespace {

// Dormand-Prince tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b_hat (error weights)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

double rms_norm(const VectorXd& v, const VectorXd& scale) {
  if (v.size() == 0) return 0.0;
  return std::sqrt((v.array() / scale.array()).square().mean());
}

VectorXd checked(VectorXd v, double t) {
  if (!v.allFinite()) throw NumericalError("ode: non-finite derivative at t = " + std::to_string(t));
  return v;
}

double initial_step(const OdeRhs& f, double t0, const VectorXd& y0, const VectorXd& f0, double direction,
                    const Rk45Options& o, int& evaluations) {
  const VectorXd scale = o.atol + o.rtol * y0.array().abs();
  const double d0 = rms_norm(y0, scale);
  const double d1 = rms_norm(f0, scale);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  const VectorXd y1 = y0 + direction * h0 * f0;
  const VectorXd f1 = checked(f(t0 + direction * h0, y1), t0);
  ++evaluations;
  const double d2 = rms_norm(f1 - f0, scale) / h0;
  const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                 : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min(100.0 * h0, h1);
}

}  // namespace

Rk45Result integrate_rk45(const OdeRhs& f, double t0, double t1, VectorXd y0, const Rk45Options& o) {
  if (!(o.atol > 0.0) || !(o.rtol > 0.0)) throw ContractError("rk45: tolerances must be positive");
  if (!y0.allFinite()) throw ContractError("rk45: non-finite initial state");
  Rk45Result res;
  res.y = std::move(y0);
  if (o.record) {
    res.times.push_back(t0);
    res.states.push_back(res.y);
  }
  if (t0 == t1) return res;

  const double direction = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  double t = t0;
  VectorXd y = res.y;
  VectorXd k1 = checked(f(t, y), t);
  res.evaluations = 1;
  double h = o.initial_step > 0.0 ? o.initial_step : initial_step(f, t, y, k1, direction, o, res.evaluations);
  h = std::min(h, span);

  constexpr double safety = 0.9, min_factor = 0.2, max_factor = 10.0;
  int steps = 0;
  while (direction * (t1 - t) > 0.0) {
    if (++steps > o.max_steps) throw StiffIntegrationError("rk45: step budget exhausted", t, h);
    const double min_h = o.min_step * std::max(1.0, std::abs(t));
    if (h < min_h) throw StiffIntegrationError("rk45: step size underflow", t, h);
    bool last = false;
    if (h >= std::abs(t1 - t)) {
      h = std::abs(t1 - t);
      last = true;
    }
    const double hs = direction * h;
    const VectorXd k2 = checked(f(t + c2 * hs, y + hs * (a21 * k1)), t);
    const VectorXd k3 = checked(f(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2)), t);
    const VectorXd k4 = checked(f(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3)), t);
    const VectorXd k5 = checked(f(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)), t);
    const VectorXd k6 = checked(f(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)), t);
    const double t_new = last ? t1 : t + hs;
    const VectorXd y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const VectorXd k7 = checked(f(t_new, y_new), t_new);
    res.evaluations += 6;

    const VectorXd err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const VectorXd scale = o.atol + o.rtol * y.array().abs().max(y_new.array().abs());
    const double err_norm = rms_norm(err, scale);
    if (!std::isfinite(err_norm)) throw NumericalError("rk45: non-finite error estimate");

    if (err_norm <= 1.0) {
      t = t_new;
      y = y_new;
      k1 = k7;  // first-same-as-last
      ++res.accepted;
      if (o.record) {
        res.times.push_back(t);
        res.states.push_back(y);
      }
      const double factor = err_norm == 0.0 ? max_factor
                                            : std::clamp(safety * std::pow(err_norm, -0.2), min_factor, max_factor);
      h *= factor;
    } else {
      ++res.rejected;
      h *= std::max(min_factor, safety * std::pow(err_norm, -0.2));
    }
  }
  res.y = std::move(y);
  return res;
}

VectorXd integrate_rk4(const OdeRhs& f, double t0, double t1, VectorXd y, int steps) {
  if (steps < 1) throw ContractError("rk4: steps must be >= 1");
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    const VectorXd k1 = checked(f(t, y), t);
    const VectorXd k2 = checked(f(t + 0.5 * h, y + 0.5 * h * k1), t);
    const VectorXd k3 = checked(f(t + 0.5 * h, y + 0.5 * h * k2), t);
    const VectorXd k4 = checked(f(t + h, y + h * k3), t);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

}  // namespace ndm
