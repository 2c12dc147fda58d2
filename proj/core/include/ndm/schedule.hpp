#pragma once

#include <random>
#include <vector>

namespace ndm {

enum class TimeMode { Discrete, Continuous };

/// Variance-preserving noise schedule configuration.
///
/// Continuous mode uses a linear beta(t) = beta_min + t (beta_max - beta_min)
/// on [t_min, 1]. Discrete mode places T steps at times i/T; the linear DDPM
/// betas (1e-4 .. 0.02) are rescaled by 1000/T. When that rescaling would
/// push a beta to 1 or beyond (T <= 20) the per-step betas are instead taken
/// from the continuous schedule integrated over each grid cell.
struct ScheduleConfig {
  TimeMode mode = TimeMode::Continuous;
  int steps = 1000;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double t_min = 1e-3;
  double ddpm_beta_start = 1e-4;
  double ddpm_beta_end = 0.02;

  bool operator==(const ScheduleConfig&) const = default;
};

/// Schedule quantities at one continuous time.
struct ScheduleValues {
  double alpha;
  double sigma;
  double sigma2;
  double dalpha_dt;
  double dsigma2_dt;
  double r;       // d log(alpha) / dt
  double g2;      // dsigma2/dt - 2 r sigma2
  double nu;      // log(sigma2 / alpha^2)
  double dnu_dt;  // g2 / sigma2
  double beta;
};

/// A time drawn from p(t) proportional to 1/g2(t) with its importance weight.
struct TimeSample {
  double t;
  double weight;
};

class Schedule {
 public:
  explicit Schedule(ScheduleConfig config = {});

  const ScheduleConfig& config() const { return config_; }
  bool continuous() const { return config_.mode == TimeMode::Continuous; }
  int steps() const { return config_.steps; }

  /// Smallest time used by the model: t_min (continuous) or 1/T (discrete).
  double time_min() const;

  /// Full set of values and derivatives. Continuous mode only; throws
  /// DomainError for t outside [t_min, 1].
  ScheduleValues at(double t) const;

  /// Valid in both modes; discrete mode requires a grid time i/T.
  double alpha(double t) const;
  double sigma2(double t) const;
  double nu(double t) const;

  /// DDPM-consistent posterior variance
  /// (sigma_t^2 - alpha_t^2/alpha_s^2 sigma_s^2) sigma_s^2 / sigma_t^2.
  double tilde_sigma2(double s, double t) const;
  /// The same variance written as sigma_s^2 (1 - exp(nu_s - nu_t)).
  double tilde_sigma2_from_nu(double s, double t) const;

  /// Continuous mode only.
  TimeSample importance_sample_time(std::mt19937_64& rng) const;
  /// Normaliser Z = integral of 1/beta over [t_min, 1].
  double importance_normalizer() const;
  /// Density of importance_sample_time at t.
  double importance_density(double t) const;

  // Discrete grid helpers.
  double grid_time(int i) const;
  int grid_index(double t) const;
  /// beta_i for i in 1..T.
  double beta_discrete(int i) const;
  /// Cumulative product alpha_bar_i for i in 0..T (alpha_bar_0 = 1).
  double alpha_bar(int i) const;

 private:
  double beta_at(double t) const;
  double integral_beta(double t) const;
  void check_continuous_time(double t) const;

  ScheduleConfig config_;
  std::vector<double> betas_;      // index 1..T, betas_[0] unused
  std::vector<double> alpha_bar_;  // index 0..T
};

}  // namespace ndm
