#pragma once

#include "ndm/schedule.hpp"
#include "ndm/transform.hpp"

namespace ndm {

/// Gaussian posterior q(z_s | z_t, x) with isotropic variance.
struct PosteriorParams {
  Vec mean;
  double variance;
};

/// z_t = alpha_t F(x, t) + sigma_t eps, row-wise.
Mat marginal_sample(const Transform& transform, const Schedule& schedule, const Mat& x, const Vec& t,
                    const Mat& eps);
Vec marginal_sample(const Transform& transform, const Schedule& schedule, const Vec& x, double t,
                    const Vec& eps);

/// Variance of q(z_s | z_t, x): noise_scale^2 times the DDPM-consistent choice.
/// noise_scale = 0 gives the deterministic (DDIM) posterior.
double posterior_variance(const Schedule& schedule, double s, double t, double noise_scale = 1.0);

/// Mean alpha_s F(x,s) + sqrt(sigma_s^2 - var)/sigma_t (z_t - alpha_t F(x,t)).
PosteriorParams posterior_params(const Transform& transform, const Schedule& schedule, const Vec& x,
                                 const Vec& z_t, double s, double t, double noise_scale = 1.0);

/// Posterior means for many rows sharing the same (s, t). x and z_t are
/// (B x d); a single-row x is broadcast against all rows of z_t.
Mat posterior_mean(const Transform& transform, const Schedule& schedule, const Mat& x, const Mat& z_t, double s,
                   double t, double noise_scale = 1.0);

/// Conditional score (alpha_t F(x,t) - z) / sigma_t^2.
Mat score(const Transform& transform, const Schedule& schedule, const Mat& x, const Mat& z, const Vec& t);
Vec score(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& z, double t);

/// Drift of the data-conditional SDE (run backwards in time) whose
/// transition kernels are the posteriors:
///   alpha_t dF/dt + r z - 1/2 (dsigma2/dt - 2 r sigma2 + noise_scale^2 g2) score.
/// noise_scale = 1 pairs with diffusion coefficient g(t); 0 gives the ODE.
Mat forward_sde_drift(const Transform& transform, const Schedule& schedule, const Mat& x, const Mat& z,
                      const Vec& t, double noise_scale = 1.0);
Vec forward_sde_drift(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& z, double t,
                      double noise_scale = 1.0);

}  // namespace ndm
