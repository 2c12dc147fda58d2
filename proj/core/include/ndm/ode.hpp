#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace ndm {

using OdeRhs = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& y)>;

struct Rk45Options {
  double atol = 1e-6;
  double rtol = 1e-6;
  double initial_step = 0.0;  // 0 picks one automatically
  double min_step = 1e-12;    // relative to max(1, |t|)
  int max_steps = 100000;
  bool record = false;
};

struct Rk45Result {
  Eigen::VectorXd y;
  std::vector<double> times;  // accepted step times when recording, including t0
  std::vector<Eigen::VectorXd> states;
  int accepted = 0;
  int rejected = 0;
  int evaluations = 0;
};

/// Adaptive Dormand-Prince 5(4) integration from t0 to t1 (either direction).
/// Throws StiffIntegrationError when the step size underflows or the step
/// budget runs out, NumericalError on a non-finite state.
Rk45Result integrate_rk45(const OdeRhs& f, double t0, double t1, Eigen::VectorXd y0, const Rk45Options& options = {});

/// Classical fixed-step RK4.
Eigen::VectorXd integrate_rk4(const OdeRhs& f, double t0, double t1, Eigen::VectorXd y0, int steps);

}  // namespace ndm
