#include "ndm/sampler.hpp"

#include "ndm/errors.hpp"
#include "ndm/forward_process.hpp"
#include "ndm/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ndm {

namespace {

Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

void record(Trajectory* tr, double t, const Mat& z) {
  if (!tr) return;
  tr->times.push_back(t);
  tr->states.push_back(z);
}

void check_start(const NdmModel& model, const Mat& z) {
  if (z.cols() != model.data_dim()) throw ContractError("sampler: dimension mismatch");
  if (z.rows() < 1) throw ContractError("sampler: no samples requested");
}

Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unflatten(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

}  // namespace

std::vector<double> sampling_grid(const Schedule& schedule, int steps) {
  if (steps < 1) throw ContractError("sampler: steps must be >= 1");
  std::vector<double> grid(steps + 1);
  if (schedule.continuous()) {
    const double t0 = schedule.time_min();
    for (int k = 0; k <= steps; ++k) grid[k] = 1.0 - (1.0 - t0) * k / steps;
    grid[steps] = t0;
    return grid;
  }
  const int T = schedule.steps();
  if (steps > T - 1) throw ContractError("sampler: more steps than the discrete grid provides");
  for (int k = 0; k <= steps; ++k) {
    const int idx = static_cast<int>(std::lround(1.0 + static_cast<double>(T - 1) * (steps - k) / steps));
    grid[k] = schedule.grid_time(idx);
  }
  return grid;
}

Mat ancestral_sample(const NdmModel& model, const Mat& z_T, int steps, double noise_scale, std::mt19937_64* rng,
                     Trajectory* trajectory) {
  check_start(model, z_T);
  if (noise_scale < 0.0 || noise_scale > 1.0) throw ContractError("sampler: noise_scale must lie in [0, 1]");
  if (noise_scale > 0.0 && !rng) throw ContractError("sampler: stochastic sampling needs an rng");
  const std::vector<double> grid = sampling_grid(model.schedule, steps);
  Mat z = z_T;
  record(trajectory, grid[0], z);
  for (int k = 0; k < steps; ++k) {
    const double t = grid[k];
    const double s = grid[k + 1];
    const Mat xh = xhat(model, z, Vec::Constant(z.rows(), t));
    Mat next = posterior_mean(model.transform, model.schedule, xh, z, s, t, noise_scale);
    if (noise_scale > 0.0) {
      const double var = posterior_variance(model.schedule, s, t, noise_scale);
      next += std::sqrt(var) * gaussian(z.rows(), z.cols(), *rng);
    }
    if (!next.allFinite()) throw NumericalError("sampler: non-finite state");
    z = std::move(next);
    record(trajectory, s, z);
  }
  return z / model.schedule.alpha(grid.back());
}

Mat ancestral_sample(const NdmModel& model, Eigen::Index n, int steps, std::mt19937_64& rng, double noise_scale,
                     Trajectory* trajectory) {
  const Mat z = gaussian(n, model.data_dim(), rng);
  return ancestral_sample(model, z, steps, noise_scale, &rng, trajectory);
}

Mat ddim_sample(const NdmModel& model, const Mat& z_T, int steps, Trajectory* trajectory) {
  return ancestral_sample(model, z_T, steps, 0.0, nullptr, trajectory);
}

Mat reverse_drift(const NdmModel& model, const Mat& z, double t, double noise_scale) {
  const Vec tv = Vec::Constant(z.rows(), t);
  return forward_sde_drift(model.transform, model.schedule, xhat(model, z, tv), z, tv, noise_scale);
}

Mat em_sample(const NdmModel& model, const Mat& z_T, int steps, std::mt19937_64& rng, double noise_scale,
              Trajectory* trajectory) {
  check_start(model, z_T);
  if (!model.schedule.continuous()) throw ContractError("em: continuous schedule required");
  if (steps < 8) throw ContractError("em: at least 8 steps required");
  const std::vector<double> grid = sampling_grid(model.schedule, steps);
  Mat z = z_T;
  record(trajectory, grid[0], z);
  for (int k = 0; k < steps; ++k) {
    const double t = grid[k];
    const double h = t - grid[k + 1];
    z -= h * reverse_drift(model, z, t, noise_scale);
    if (noise_scale > 0.0) {
      const double g = std::sqrt(model.schedule.at(t).g2);
      z += noise_scale * g * std::sqrt(h) * gaussian(z.rows(), z.cols(), rng);
    }
    if (!z.allFinite()) throw NumericalError("em: non-finite state");
    record(trajectory, grid[k + 1], z);
  }
  return z / model.schedule.alpha(grid.back());
}

Mat em_sample(const NdmModel& model, Eigen::Index n, int steps, std::mt19937_64& rng, double noise_scale,
              Trajectory* trajectory) {
  const Mat z = gaussian(n, model.data_dim(), rng);
  return em_sample(model, z, steps, rng, noise_scale, trajectory);
}

Mat ode_sample(const NdmModel& model, const Mat& z_T, const Rk45Options& options, Trajectory* trajectory,
               int* evaluations) {
  check_start(model, z_T);
  if (!model.schedule.continuous()) throw ContractError("ode: continuous schedule required");
  const Eigen::Index n = z_T.rows();
  const Eigen::Index d = z_T.cols();
  const OdeRhs rhs = [&](double t, const Vec& y) { return flatten(reverse_drift(model, unflatten(y, n, d), t, 0.0)); };
  Rk45Options o = options;
  o.record = trajectory != nullptr;
  const double t0 = model.schedule.time_min();
  const Rk45Result r = integrate_rk45(rhs, 1.0, t0, flatten(z_T), o);
  if (trajectory)
    for (std::size_t i = 0; i < r.times.size(); ++i) record(trajectory, r.times[i], unflatten(r.states[i], n, d));
  if (evaluations) *evaluations = r.evaluations;
  return unflatten(r.y, n, d) / model.schedule.alpha(t0);
}

namespace {

// Generative ODE drift on a tape with the divergence of the drift in z.
struct DriftAndTrace {
  Mat drift;
  Vec trace;
};

DriftAndTrace drift_and_trace(const NdmModel& model, const Mat& z, double t, const std::vector<Mat>& probes) {
  const ScheduleValues v = model.schedule.at(t);
  const Vec tv = Vec::Constant(z.rows(), t);
  ad::Tape tape;
  const BoundNet eps = bind(tape, model.eps_spec, model.eps_params, false);
  const BoundTransform F(tape, model.transform, false);
  const ad::Var Z = tape.variable(z);
  const ad::Var eh = record_forward(eps, Z, tv);
  const ad::Var xh = (Z - v.sigma * eh) / v.alpha;
  const auto fd = F.apply_with_time_derivative(xh, tv);
  const double k = 0.5 * (v.dsigma2_dt - 2.0 * v.r * v.sigma2);
  const ad::Var drift = v.alpha * fd.time_derivative + v.r * Z - (k / v.sigma2) * (v.alpha * fd.value - Z);

  DriftAndTrace out{drift.value(), Vec::Zero(z.rows())};
  if (probes.empty()) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      Mat seed = Mat::Zero(z.rows(), z.cols());
      seed.col(j).setOnes();
      tape.clear_grads();
      tape.backward(drift, seed);
      out.trace += tape.grad(Z).col(j);
    }
  } else {
    for (const Mat& p : probes) {
      tape.clear_grads();
      tape.backward(drift, p);
      out.trace += tape.grad(Z).cwiseProduct(p).rowwise().sum();
    }
    out.trace /= static_cast<double>(probes.size());
  }
  return out;
}

}  // namespace

Vec ode_log_density(const NdmModel& model, const Mat& z_min, const NllOptions& options, std::mt19937_64& rng,
                    int* evaluations) {
  check_start(model, z_min);
  if (!model.schedule.continuous()) throw ContractError("nll: continuous schedule required");
  const Eigen::Index n = z_min.rows();
  const Eigen::Index d = z_min.cols();
  std::vector<Mat> probes;
  if (d > options.exact_trace_max_dim) {
    if (options.hutchinson_probes < 1) throw ContractError("nll: need at least one trace probe");
    std::bernoulli_distribution coin(0.5);
    for (int p = 0; p < options.hutchinson_probes; ++p) {
      Mat m(n, d);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = coin(rng) ? 1.0 : -1.0;
      probes.push_back(std::move(m));
    }
  }
  const OdeRhs rhs = [&](double t, const Vec& y) {
    const DriftAndTrace dt = drift_and_trace(model, unflatten(y.head(n * d), n, d), t, probes);
    Vec out(n * d + n);
    out.head(n * d) = flatten(dt.drift);
    out.tail(n) = dt.trace;
    return out;
  };
  Vec y0(n * d + n);
  y0.head(n * d) = flatten(z_min);
  y0.tail(n).setZero();
  Rk45Options o = options.ode;
  o.record = false;
  const Rk45Result r = integrate_rk45(rhs, model.schedule.time_min(), 1.0, y0, o);
  if (evaluations) *evaluations += r.evaluations;
  const Mat z1 = unflatten(r.y.head(n * d), n, d);
  const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
  const Vec prior = (log_norm - 0.5 * z1.rowwise().squaredNorm().array()).matrix();
  return prior + r.y.tail(n);
}

NllResult nll_ode(const NdmModel& model, const Mat& x, const NllOptions& options, std::mt19937_64& rng) {
  if (x.cols() != model.data_dim()) throw ContractError("nll: dimension mismatch");
  if (x.rows() < 1) throw ContractError("nll: empty data");
  if (options.importance_samples < 1) throw ContractError("nll: importance_samples must be >= 1");
  if (options.chunk < 1) throw ContractError("nll: chunk must be >= 1");
  const int K = options.importance_samples;
  const Eigen::Index N = x.rows();
  const Eigen::Index d = x.cols();
  const double t0 = model.schedule.time_min();
  const double a0 = model.schedule.alpha(t0);
  const double sr = model.sigma_rec();

  NllResult res;
  res.nll.resize(N);
  for (Eigen::Index start = 0; start < N; start += options.chunk) {
    const Eigen::Index m = std::min(options.chunk, N - start);
    Mat z(m * K, d);
    for (Eigen::Index i = 0; i < m; ++i) {
      Mat u = sr * gaussian(K, d, rng);
      u.rowwise() += x.row(start + i);
      z.middleRows(i * K, K) = a0 * u;
    }
    const Vec logp = ode_log_density(model, z, options, rng, &res.evaluations);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec block = logp.segment(i * K, K);
      const double mx = block.maxCoeff();
      const double lme = mx + std::log((block.array() - mx).exp().mean());
      res.nll(start + i) = -(static_cast<double>(d) * std::log(a0) + lme);
    }
  }
  res.mean = res.nll.mean();
  if (N > 1) {
    const double var = (res.nll.array() - res.mean).square().sum() / static_cast<double>(N - 1);
    res.standard_error = std::sqrt(var / static_cast<double>(N));
  }
  res.bits_per_dim = res.mean / (static_cast<double>(d) * std::numbers::ln2);
  return res;
}

}  // namespace ndm
