#pragma once

// Restricted 1-D reverse process whose deterministic trajectories are
// straight lines: z(t) = (1 - t) xhat(eps) + t eps for eps ~ N(0, 1).

#include "ndm/adam.hpp"
#include "ndm/autodiff.hpp"
#include "ndm/ode.hpp"
#include "ndm/schedule.hpp"
#include "ndm/transform.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace ndm {

/// Strictly increasing scalar map
///   xhat(e) = b0 + softplus(u) e + sum_j softplus(v_j) tanh(softplus(w_j) e + c_j).
/// Parameter layout: [b0, u, v_1..v_H, w_1..w_H, c_1..c_H].
class MonotoneMap {
 public:
  MonotoneMap() = default;
  MonotoneMap(int hidden, std::vector<double> params);

  /// Near-identity start: unit slope, small random bumps.
  static MonotoneMap init(int hidden, std::mt19937_64& rng);
  static MonotoneMap identity();
  /// xhat(e) = slope * e.
  static MonotoneMap linear(double slope);

  int hidden() const { return hidden_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  double value(double e) const;
  double derivative(double e) const;
  double second_derivative(double e) const;

  /// True when the map increases strictly across an n-point grid on [lo, hi].
  bool monotone_on_grid(double lo, double hi, int n) const;

 private:
  int hidden_ = 0;
  std::vector<double> params_;
};

/// h(t, e) = (1 - t) xhat(e) + t e.
double ot_h(const MonotoneMap& map, double t, double e);
/// dh/de = (1 - t) xhat'(e) + t.
double ot_h_slope(const MonotoneMap& map, double t, double e);

/// Solves h(t, e) = z: five Newton steps from e = z, then a bracketing
/// bisection if the residual is still above tolerance. Throws
/// InversionError when both fail.
double ot_h_inverse(const MonotoneMap& map, double t, double z);

/// Number of inversions that needed the bisection fallback (process-wide).
std::uint64_t inversion_fallback_count();

/// Drift of the straight-line flow at (t, z): e - xhat(e) with e = h^-1(t, z).
double ot_reverse_drift(const MonotoneMap& map, double t, double z);

/// log p_t(z) = log N(e; 0, 1) - log((1 - t) xhat'(e) + t).
double ot_log_density(const MonotoneMap& map, double t, double z);

/// d/dz of ot_log_density: (-e - (1 - t) xhat''(e) / J) / J.
double ot_score(const MonotoneMap& map, double t, double z);

/// 1-D model: forward process (schedule + transform) and restricted reverse map.
struct DotModel {
  Schedule schedule;
  Transform transform;
  MonotoneMap map;

  double sigma_rec() const;
};

enum class DotTimeSampling {
  Uniform,     // t ~ U[t_min, 1]
  Importance   // the schedule's importance density, as in the continuous NDM loss
};

struct DotNoise {
  Vec t;
  Vec weight;  // 1 / density of t
  Vec eps;
  Vec eps_rec;
};

DotNoise draw_dot_noise(const DotModel& model, Eigen::Index batch, std::mt19937_64& rng,
                        DotTimeSampling sampling = DotTimeSampling::Uniform);

struct DotLossEvaluation {
  double l_prior = 0.0;
  double l_rec = 0.0;
  double l_diff = 0.0;
  double total = 0.0;
  std::vector<double> map_grad;
  std::vector<double> transform_grad;
};

/// Prior and reconstruction terms plus the drift-mismatch term
///   (1 - t_min) E_t 1/(2 g2) (f_forward(x, z, t) - f_reverse(t, z))^2,
/// t uniform on [t_min, 1], f_reverse = f_theta - g2/2 * score.
/// x is (B x 1).
DotLossEvaluation ot_loss(const DotModel& model, const Mat& x, const DotNoise& noise, bool with_gradients);
DotLossEvaluation ot_loss(const DotModel& model, const Mat& x, std::mt19937_64& rng, bool with_gradients);

/// Samples by integrating the flow from t = 1 to t_min with RK45 and taking
/// the decoder mean z / alpha_min.
struct DotSamples {
  Vec x;
  Vec eps;
  std::vector<double> times;          // recorded solver times
  std::vector<Vec> states;            // one state vector per recorded time
};
DotSamples dot_sample(const DotModel& model, Eigen::Index n, std::mt19937_64& rng, const Rk45Options& options = {},
                      bool record = false);

struct DotTrainOptions {
  int iterations = 3000;
  int batch_size = 256;
  LrSchedule lr{.peak = 3e-3, .warmup_steps = 100};
  bool train_transform = true;
  int log_every = 0;
  std::function<void(int step, const DotLossEvaluation&)> on_log;
};

struct DotTrainResult {
  std::vector<double> losses;  // per iteration
  double final_loss = 0.0;     // mean of the last 10% of iterations
};

DotTrainResult train_dot(DotModel& model, const Mat& data, const DotTrainOptions& options, std::mt19937_64& rng);

}  // namespace ndm
