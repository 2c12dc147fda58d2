#pragma once

#include "ndm/model.hpp"
#include "ndm/ode.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace ndm {

/// Intermediate states of a sampling run, one (n x d) matrix per time.
struct Trajectory {
  std::vector<double> times;
  std::vector<Mat> states;
};

/// Descending sampling times from 1 to the model's smallest time with
/// `steps` transitions. On a discrete schedule the T-step grid is strided
/// (steps <= T - 1) and every returned time is a grid time.
std::vector<double> sampling_grid(const Schedule& schedule, int steps);

/// Ancestral sampling through the posteriors q(z_s | z_t, xhat). noise_scale
/// 1 is the stochastic sampler, 0 the deterministic one. Returns the decoder
/// mean z / alpha at the smallest time.
Mat ancestral_sample(const NdmModel& model, const Mat& z_T, int steps, double noise_scale, std::mt19937_64* rng,
                     Trajectory* trajectory = nullptr);
Mat ancestral_sample(const NdmModel& model, Eigen::Index n, int steps, std::mt19937_64& rng,
                     double noise_scale = 1.0, Trajectory* trajectory = nullptr);

/// Deterministic posterior sampler; a pure function of z_T.
Mat ddim_sample(const NdmModel& model, const Mat& z_T, int steps, Trajectory* trajectory = nullptr);

/// Drift of the generative SDE (noise_scale 1) or ODE (0) at (z, t):
/// the data-conditional drift with x replaced by xhat(z, t).
Mat reverse_drift(const NdmModel& model, const Mat& z, double t, double noise_scale);

/// Euler-Maruyama on the generative SDE over a uniform grid. Requires at
/// least 8 steps.
Mat em_sample(const NdmModel& model, const Mat& z_T, int steps, std::mt19937_64& rng, double noise_scale = 1.0,
              Trajectory* trajectory = nullptr);
Mat em_sample(const NdmModel& model, Eigen::Index n, int steps, std::mt19937_64& rng, double noise_scale = 1.0,
              Trajectory* trajectory = nullptr);

/// Adaptive RK45 on the generative ODE from t = 1 to t_min.
Mat ode_sample(const NdmModel& model, const Mat& z_T, const Rk45Options& options = {},
               Trajectory* trajectory = nullptr, int* evaluations = nullptr);

struct NllOptions {
  Rk45Options ode{.atol = 1e-5, .rtol = 1e-5};
  int importance_samples = 4;     // draws of z_min per data point
  int hutchinson_probes = 16;     // used when data_dim > exact_trace_max_dim
  int exact_trace_max_dim = 3;
  Eigen::Index chunk = 256;       // data points per ODE solve
};

struct NllResult {
  Vec nll;  // per point, nats
  double mean = 0.0;
  double standard_error = 0.0;
  double bits_per_dim = 0.0;
  int evaluations = 0;
};

/// Log-density of the generative ODE at the smallest time, via the
/// instantaneous change of variables integrated up to t = 1.
Vec ode_log_density(const NdmModel& model, const Mat& z_min, const NllOptions& options, std::mt19937_64& rng,
                    int* evaluations = nullptr);

/// -log p(x) where p(x) = integral of p_ode(z) N(x; z / alpha_min, sigma_rec^2) dz,
/// estimated by importance sampling z = alpha_min (x + sigma_rec u), u ~ N(0, I).
NllResult nll_ode(const NdmModel& model, const Mat& x, const NllOptions& options, std::mt19937_64& rng);

}  // namespace ndm
