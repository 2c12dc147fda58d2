#include "ndm/schedule.hpp"

#include "ndm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ndm {

namespace {
constexpr double kTimeSlack = 1e-12;
}

Schedule::Schedule(ScheduleConfig config) : config_(config) {
  if (config_.beta_min <= 0.0 || config_.beta_max < config_.beta_min)
    throw ContractError("schedule: need 0 < beta_min <= beta_max");
  if (config_.mode == TimeMode::Continuous) {
    if (!(config_.t_min > 0.0 && config_.t_min < 1.0)) throw ContractError("schedule: t_min must be in (0, 1)");
    return;
  }
  const int T = config_.steps;
  if (T < 2) throw ContractError("schedule: discrete mode needs at least 2 steps");
  betas_.assign(T + 1, 0.0);
  alpha_bar_.assign(T + 1, 1.0);
  const double rescale = 1000.0 / T;
  const bool linear_valid = config_.ddpm_beta_end * rescale < 1.0;
  for (int i = 1; i <= T; ++i) {
    double beta;
    if (linear_valid) {
      const double frac = static_cast<double>(i - 1) / static_cast<double>(T - 1);
      beta = (config_.ddpm_beta_start + frac * (config_.ddpm_beta_end - config_.ddpm_beta_start)) * rescale;
    } else {
      beta = -std::expm1(-(integral_beta(static_cast<double>(i) / T) - integral_beta(static_cast<double>(i - 1) / T)));
    }
    betas_[i] = beta;
    alpha_bar_[i] = alpha_bar_[i - 1] * (1.0 - beta);
  }
}

double Schedule::time_min() const {
  return continuous() ? config_.t_min : 1.0 / static_cast<double>(config_.steps);
}

double Schedule::beta_at(double t) const { return config_.beta_min + t * (config_.beta_max - config_.beta_min); }

double Schedule::integral_beta(double t) const {
  return config_.beta_min * t + 0.5 * (config_.beta_max - config_.beta_min) * t * t;
}

void Schedule::check_continuous_time(double t) const {
  if (!continuous()) throw ContractError("schedule: continuous-time quantity requested in discrete mode");
  if (!(t >= config_.t_min - kTimeSlack && t <= 1.0 + kTimeSlack))
    throw DomainError("schedule: t=" + std::to_string(t) + " outside [t_min, 1]");
}

ScheduleValues Schedule::at(double t) const {
  check_continuous_time(t);
  const double B = integral_beta(t);
  const double beta = beta_at(t);
  ScheduleValues v{};
  v.beta = beta;
  v.alpha = std::exp(-0.5 * B);
  v.sigma2 = -std::expm1(-B);
  v.sigma = std::sqrt(v.sigma2);
  v.dalpha_dt = -0.5 * beta * v.alpha;
  v.dsigma2_dt = beta * v.alpha * v.alpha;
  v.r = -0.5 * beta;
  v.g2 = v.dsigma2_dt - 2.0 * v.r * v.sigma2;
  v.nu = std::log(std::expm1(B));
  v.dnu_dt = v.g2 / v.sigma2;
  return v;
}

int Schedule::grid_index(double t) const {
  const double scaled = t * config_.steps;
  const double idx = std::round(scaled);
  if (std::abs(scaled - idx) > 1e-9 || idx < 0 || idx > config_.steps)
    throw DomainError("schedule: t=" + std::to_string(t) + " is not on the discrete grid");
  return static_cast<int>(idx);
}

double Schedule::grid_time(int i) const {
  if (i < 0 || i > config_.steps) throw DomainError("schedule: grid index out of range");
  return static_cast<double>(i) / static_cast<double>(config_.steps);
}

double Schedule::beta_discrete(int i) const {
  if (continuous()) throw ContractError("schedule: beta_discrete in continuous mode");
  if (i < 1 || i > config_.steps) throw DomainError("schedule: beta index out of range");
  return betas_[i];
}

double Schedule::alpha_bar(int i) const {
  if (continuous()) throw ContractError("schedule: alpha_bar in continuous mode");
  if (i < 0 || i > config_.steps) throw DomainError("schedule: alpha_bar index out of range");
  return alpha_bar_[i];
}

double Schedule::alpha(double t) const {
  if (continuous()) {
    check_continuous_time(t);
    return std::exp(-0.5 * integral_beta(t));
  }
  return std::sqrt(alpha_bar_[grid_index(t)]);
}

double Schedule::sigma2(double t) const {
  if (continuous()) {
    check_continuous_time(t);
    return -std::expm1(-integral_beta(t));
  }
  return 1.0 - alpha_bar_[grid_index(t)];
}

double Schedule::nu(double t) const {
  if (continuous()) {
    check_continuous_time(t);
    return std::log(std::expm1(integral_beta(t)));
  }
  const double ab = alpha_bar_[grid_index(t)];
  return std::log((1.0 - ab) / ab);
}

double Schedule::tilde_sigma2(double s, double t) const {
  if (s > t + kTimeSlack) throw DomainError("tilde_sigma2: requires s <= t");
  const double as = alpha(s);
  const double at_ = alpha(t);
  const double s2s = sigma2(s);
  const double s2t = sigma2(t);
  const double v = (s2t - (at_ * at_) / (as * as) * s2s) * s2s / s2t;
  return v < 0.0 ? 0.0 : v;
}

double Schedule::tilde_sigma2_from_nu(double s, double t) const {
  if (s > t + kTimeSlack) throw DomainError("tilde_sigma2: requires s <= t");
  return -sigma2(s) * std::expm1(nu(s) - nu(t));
}

double Schedule::importance_normalizer() const {
  const double db = config_.beta_max - config_.beta_min;
  if (db == 0.0) return (1.0 - config_.t_min) / config_.beta_min;
  return std::log(beta_at(1.0) / beta_at(config_.t_min)) / db;
}

double Schedule::importance_density(double t) const {
  check_continuous_time(t);
  return 1.0 / (beta_at(t) * importance_normalizer());
}

TimeSample Schedule::importance_sample_time(std::mt19937_64& rng) const {
  if (!continuous()) throw ContractError("importance_sample_time: continuous mode only");
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  const double Z = importance_normalizer();
  const double db = config_.beta_max - config_.beta_min;
  double t;
  if (db == 0.0) {
    t = config_.t_min + u * (1.0 - config_.t_min);
  } else {
    // CDF(t) = log(beta(t)/beta(t_min)) / (db Z)
    const double beta = beta_at(config_.t_min) * std::exp(u * Z * db);
    t = (beta - config_.beta_min) / db;
  }
  t = std::min(1.0, std::max(config_.t_min, t));
  return {t, Z * beta_at(t)};
}

}  // namespace ndm
