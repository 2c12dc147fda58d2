#pragma once

#include "ndm/model.hpp"

#include <random>
#include <vector>

namespace ndm {

enum class LossMode {
  Discrete,    // sum of closed-form KL terms over the T-step grid
  Continuous,  // time integral with importance-sampled t
  Simple       // eps-prediction MSE only; ignores the transform's effect on the bound
};

/// Batch-averaged loss terms, in nats.
struct LossBreakdown {
  double l_prior = 0.0;
  double l_rec = 0.0;
  double l_diff = 0.0;
  double total = 0.0;
  int batch_size = 0;
};

/// Prediction of x from the eps network: (z - sigma_t eps_hat(z, t)) / alpha_t.
Mat xhat(const NdmModel& model, const Mat& z, const Vec& t);
Vec xhat(const NdmModel& model, const Vec& z, double t);

/// KL between the posteriors q(z_s | z_t, x) and q(z_s | z_t, xhat) with the
/// DDPM-consistent variance. Independent of z_t.
double kl_between_posteriors(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& xhat_value,
                             double s, double t);

/// Diffusion KL term for one step s < t with xhat predicted from z_t.
double kl_diffusion_term(const NdmModel& model, const Vec& x, const Vec& z_t, double s, double t);

/// KL(q(z_1 | x) || N(0, I)) in closed form.
double prior_term(const NdmModel& model, const Vec& x);

/// -log N(x; z / alpha_min, sigma_rec^2 I) for z drawn at the smallest time.
double rec_term(const NdmModel& model, const Vec& x, const Vec& z_near0);

/// Continuous-time diffusion integrand at t for a given prediction xhat:
///   1/(2 g2) || alpha (dF(x) - dF(xhat)) - 1/2 (dsigma2/dt - 2 r sigma2 + g2) (s(x) - s(xhat)) ||^2
/// This is the limit of T * KL(t - 1/T, t) as T grows.
double continuous_integrand(const Transform& transform, const Schedule& schedule, const Vec& x, const Vec& xhat_value,
                            double t);
/// Same with xhat predicted from z by the model.
double continuous_integrand(const NdmModel& model, const Vec& x, const Vec& z, double t);

/// Random inputs of one loss evaluation. Fixing them makes the loss a
/// deterministic function of the parameters.
struct LossNoise {
  Vec t;       // time of the diffusion term, per example
  Vec s;       // previous grid time (discrete mode)
  Vec weight;  // Monte-Carlo weight of the diffusion term
  Mat eps;     // noise for z_t
  Mat eps_rec; // noise for z at the smallest time
};

LossNoise draw_loss_noise(const NdmModel& model, LossMode mode, Eigen::Index batch, std::mt19937_64& rng);

struct LossEvaluation {
  LossBreakdown breakdown;
  Vec per_example;                 // total per example
  std::vector<double> eps_grad;    // d mean total / d theta
  std::vector<double> transform_grad;  // d mean total / d phi (learnable transform only)
};

/// Evaluates the loss on a batch with fixed noise; gradients are filled when
/// requested. Throws NumericalError on a non-finite loss.
LossEvaluation evaluate_loss(const NdmModel& model, LossMode mode, const Mat& x, const LossNoise& noise,
                             bool with_gradients);

/// One uniformly drawn step per example (t in {2..T}, weight T - 1); the
/// t = 1 step is covered by the reconstruction term at z_{1/T}.
LossBreakdown loss_discrete(const NdmModel& model, const Mat& x, std::mt19937_64& rng);
LossBreakdown loss_continuous(const NdmModel& model, const Mat& x, std::mt19937_64& rng);

}  // namespace ndm
