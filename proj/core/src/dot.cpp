#include "ndm/dot.hpp"

#include "ndm/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

namespace ndm {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double inverse_softplus(double y) { return y > 20.0 ? y : std::log(std::expm1(y)); }

std::atomic<std::uint64_t> g_fallbacks{0};

// Unpacked, softplus-transformed parameters.
struct Coeffs {
  double b0, a;
  std::vector<double> v, w, c;
};

Coeffs coeffs(const MonotoneMap& m) {
  const auto& p = m.params();
  const int H = m.hidden();
  Coeffs k{p[0], softplus(p[1]), std::vector<double>(H), std::vector<double>(H), std::vector<double>(H)};
  for (int j = 0; j < H; ++j) {
    k.v[j] = softplus(p[2 + j]);
    k.w[j] = softplus(p[2 + H + j]);
    k.c[j] = p[2 + 2 * H + j];
  }
  return k;
}

}  // namespace

MonotoneMap::MonotoneMap(int hidden, std::vector<double> params) : hidden_(hidden), params_(std::move(params)) {
  if (hidden < 0) throw ContractError("monotone map: negative hidden width");
  if (params_.size() != static_cast<std::size_t>(2 + 3 * hidden))
    throw ContractError("monotone map: parameter count mismatch");
  for (double p : params_)
    if (!std::isfinite(p)) throw ContractError("monotone map: non-finite parameter");
}

MonotoneMap MonotoneMap::init(int hidden, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> p(2 + 3 * hidden);
  p[0] = 0.0;
  p[1] = inverse_softplus(1.0);
  for (int j = 0; j < hidden; ++j) {
    p[2 + j] = inverse_softplus(0.05);
    p[2 + hidden + j] = inverse_softplus(1.0) + 0.5 * normal(rng);
    p[2 + 2 * hidden + j] = normal(rng);
  }
  return MonotoneMap(hidden, std::move(p));
}

MonotoneMap MonotoneMap::identity() { return linear(1.0); }

MonotoneMap MonotoneMap::linear(double slope) {
  if (!(slope > 0.0)) throw ContractError("monotone map: slope must be positive");
  return MonotoneMap(0, {0.0, inverse_softplus(slope)});
}

double MonotoneMap::value(double e) const {
  const Coeffs k = coeffs(*this);
  double x = k.b0 + k.a * e;
  for (int j = 0; j < hidden_; ++j) x += k.v[j] * std::tanh(k.w[j] * e + k.c[j]);
  return x;
}

double MonotoneMap::derivative(double e) const {
  const Coeffs k = coeffs(*this);
  double d = k.a;
  for (int j = 0; j < hidden_; ++j) {
    const double th = std::tanh(k.w[j] * e + k.c[j]);
    d += k.v[j] * k.w[j] * (1.0 - th * th);
  }
  return d;
}

double MonotoneMap::second_derivative(double e) const {
  const Coeffs k = coeffs(*this);
  double d = 0.0;
  for (int j = 0; j < hidden_; ++j) {
    const double th = std::tanh(k.w[j] * e + k.c[j]);
    d += k.v[j] * k.w[j] * k.w[j] * (-2.0 * th * (1.0 - th * th));
  }
  return d;
}

bool MonotoneMap::monotone_on_grid(double lo, double hi, int n) const {
  if (n < 2 || !(hi > lo)) throw ContractError("monotone map: invalid grid");
  double prev = value(lo);
  for (int i = 1; i < n; ++i) {
    const double cur = value(lo + (hi - lo) * i / (n - 1));
    if (!(cur > prev)) return false;
    prev = cur;
  }
  return true;
}

double ot_h(const MonotoneMap& map, double t, double e) { return (1.0 - t) * map.value(e) + t * e; }

double ot_h_slope(const MonotoneMap& map, double t, double e) { return (1.0 - t) * map.derivative(e) + t; }

std::uint64_t inversion_fallback_count() { return g_fallbacks.load(); }

double ot_h_inverse(const MonotoneMap& map, double t, double z) {
  if (!std::isfinite(z) || !std::isfinite(t)) throw ContractError("inverse: non-finite input");
  if (t < 0.0 || t > 1.0) throw DomainError("inverse: t outside [0, 1]");
  const double tol = 1e-10 * std::max(1.0, std::abs(z));
  double e = z;
  double res = ot_h(map, t, e) - z;
  for (int it = 0; it < 5 && std::abs(res) > tol; ++it) {
    e -= res / ot_h_slope(map, t, e);
    if (!std::isfinite(e)) break;
    res = ot_h(map, t, e) - z;
  }
  if (std::isfinite(e) && std::abs(res) <= tol) return e;

  ++g_fallbacks;
  double lo = z - 1.0, hi = z + 1.0;
  double width = 1.0;
  for (int k = 0; ot_h(map, t, lo) > z; ++k) {
    if (k > 200) throw InversionError("inverse: could not bracket from below");
    width *= 2.0;
    lo = z - width;
  }
  width = 1.0;
  for (int k = 0; ot_h(map, t, hi) < z; ++k) {
    if (k > 200) throw InversionError("inverse: could not bracket from above");
    width *= 2.0;
    hi = z + width;
  }
  for (int it = 0; it < 400; ++it) {
    e = 0.5 * (lo + hi);
    res = ot_h(map, t, e) - z;
    if (std::abs(res) <= tol || hi - lo <= 1e-15 * std::max(1.0, std::abs(e))) break;
    (res > 0.0 ? hi : lo) = e;
  }
  if (!(std::abs(res) < 1e-6)) throw InversionError("inverse: bisection did not converge");
  return e;
}

double ot_reverse_drift(const MonotoneMap& map, double t, double z) {
  const double e = ot_h_inverse(map, t, z);
  return e - map.value(e);
}

double ot_log_density(const MonotoneMap& map, double t, double z) {
  const double e = ot_h_inverse(map, t, z);
  return -0.5 * e * e - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(ot_h_slope(map, t, e));
}

double ot_score(const MonotoneMap& map, double t, double z) {
  const double e = ot_h_inverse(map, t, z);
  const double J = ot_h_slope(map, t, e);
  return (-e - (1.0 - t) * map.second_derivative(e) / J) / J;
}

double DotModel::sigma_rec() const { return std::max(std::sqrt(schedule.sigma2(schedule.time_min())), 1e-2); }

DotNoise draw_dot_noise(const DotModel& model, Eigen::Index batch, std::mt19937_64& rng, DotTimeSampling sampling) {
  if (batch < 1) throw ContractError("dot: empty batch");
  const Schedule& sch = model.schedule;
  if (!sch.continuous()) throw ContractError("dot: continuous schedule required");
  std::uniform_real_distribution<double> uni(sch.time_min(), 1.0);
  std::normal_distribution<double> normal;
  DotNoise n{Vec(batch), Vec(batch), Vec(batch), Vec(batch)};
  for (Eigen::Index i = 0; i < batch; ++i) {
    if (sampling == DotTimeSampling::Uniform) {
      n.t(i) = uni(rng);
      n.weight(i) = 1.0 - sch.time_min();
    } else {
      const TimeSample ts = sch.importance_sample_time(rng);
      n.t(i) = ts.t;
      n.weight(i) = ts.weight;
    }
  }
  for (Eigen::Index i = 0; i < batch; ++i) n.eps(i) = normal(rng);
  for (Eigen::Index i = 0; i < batch; ++i) n.eps_rec(i) = normal(rng);
  return n;
}

namespace {

struct MapOnTape {
  ad::Var b0, u, v, w, c;
};

MapOnTape bind_map(ad::Tape& tape, const MonotoneMap& map, bool trainable) {
  const auto& p = map.params();
  const int H = map.hidden();
  auto make = [&](Mat m) { return trainable ? tape.variable(std::move(m)) : tape.constant(std::move(m)); };
  Mat v(1, H), w(1, H), c(1, H);
  for (int j = 0; j < H; ++j) {
    v(0, j) = p[2 + j];
    w(0, j) = p[2 + H + j];
    c(0, j) = p[2 + 2 * H + j];
  }
  return {make(Mat::Constant(1, 1, p[0])), make(Mat::Constant(1, 1, p[1])), make(v), make(w), make(c)};
}

std::vector<double> map_gradient(const ad::Tape& tape, const MapOnTape& m, int H) {
  std::vector<double> g(2 + 3 * H);
  g[0] = tape.grad(m.b0)(0, 0);
  g[1] = tape.grad(m.u)(0, 0);
  const Mat gv = tape.grad(m.v), gw = tape.grad(m.w), gc = tape.grad(m.c);
  for (int j = 0; j < H; ++j) {
    g[2 + j] = gv(0, j);
    g[2 + H + j] = gw(0, j);
    g[2 + 2 * H + j] = gc(0, j);
  }
  return g;
}

struct MapValues {
  ad::Var x, d1, d2;
};

// e is (B x 1); returns xhat, xhat' and xhat'' as (B x 1).
MapValues record_map(const MapOnTape& m, int H, ad::Var e) {
  const ad::Var a = ad::softplus(m.u);
  ad::Var x = m.b0 + a * e;
  ad::Var d1 = a + 0.0 * e;
  ad::Var d2 = 0.0 * e;
  if (H > 0) {
    const ad::Var v = ad::softplus(m.v);
    const ad::Var w = ad::softplus(m.w);
    const ad::Var th = ad::tanh(e * w + m.c);
    const ad::Var sech2 = 1.0 - ad::square(th);
    const ad::Var vw = v * w;
    x = x + ad::row_sum(v * th);
    d1 = d1 + ad::row_sum(vw * sech2);
    d2 = ad::row_sum((vw * w) * (-2.0 * th * sech2));
  }
  return {x, d1, d2};
}

}  // namespace

DotLossEvaluation ot_loss(const DotModel& model, const Mat& x, const DotNoise& noise, bool with_gradients) {
  const Schedule& sch = model.schedule;
  if (!sch.continuous()) throw ContractError("dot: continuous schedule required");
  if (model.transform.data_dim() != 1 || x.cols() != 1) throw ContractError("dot: 1-D data only");
  const Eigen::Index B = x.rows();
  if (B < 1) throw ContractError("dot: empty batch");
  if (noise.t.size() != B || noise.weight.size() != B || noise.eps.size() != B || noise.eps_rec.size() != B)
    throw ContractError("dot: noise shape mismatch");
  const int H = model.map.hidden();

  ad::Tape tape;
  const MapOnTape m = bind_map(tape, model.map, with_gradients);
  const BoundTransform F(tape, model.transform, with_gradients && model.transform.is_learnable());
  const ad::Var X = tape.constant(x);

  // prior and reconstruction terms
  const double s2T = sch.sigma2(1.0), aT = sch.alpha(1.0);
  const ad::Var prior = 0.5 * aT * aT * ad::square(F.apply(X, Vec::Ones(B))) + 0.5 * (s2T - std::log(s2T) - 1.0);
  const double t0 = sch.time_min(), a0 = sch.alpha(t0);
  const double sr2 = model.sigma_rec() * model.sigma_rec();
  const ad::Var z0 = a0 * F.apply(X, Vec::Constant(B, t0)) + tape.constant(std::sqrt(sch.sigma2(t0)) * noise.eps_rec);
  const ad::Var rec = ad::square(X - z0 / a0) / (2.0 * sr2) + 0.5 * std::log(2.0 * std::numbers::pi * sr2);

  // per-row schedule constants
  const Vec& t = noise.t;
  Vec alpha(B), sigma(B), r(B), k_over_s2(B), half_g2(B), scale(B), one_minus_t(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const ScheduleValues v = sch.at(t(i));
    alpha(i) = v.alpha;
    sigma(i) = v.sigma;
    r(i) = v.r;
    k_over_s2(i) = 0.5 * (v.dsigma2_dt - 2.0 * v.r * v.sigma2 + v.g2) / v.sigma2;
    half_g2(i) = 0.5 * v.g2;
    scale(i) = noise.weight(i) / (2.0 * v.g2);
    one_minus_t(i) = 1.0 - t(i);
  }
  const Mat Ta = alpha, Ts = sigma, Tr = r, Tk = k_over_s2, Tg = half_g2, Tw = scale, Tomt = one_minus_t, Tt = t;

  const auto fx = F.apply_with_time_derivative(X, t);
  const ad::Var z = ad::mul_const(fx.value, Ta) + tape.constant(Mat(sigma.cwiseProduct(noise.eps)));
  const ad::Var forward = ad::mul_const(fx.time_derivative, Ta) + ad::mul_const(z, Tr) -
                          ad::mul_const(ad::mul_const(fx.value, Ta) - z, Tk);

  // e = h^-1(t, z) with implicit-function gradients: one extra Newton step
  // recorded on the tape carries d e / d z = 1/J and d e / d theta = -dh/dtheta / J.
  Mat e_star(B, 1), inv_j(B, 1);
  for (Eigen::Index i = 0; i < B; ++i) {
    e_star(i, 0) = ot_h_inverse(model.map, t(i), z.value()(i, 0));
    inv_j(i, 0) = 1.0 / ot_h_slope(model.map, t(i), e_star(i, 0));
  }
  const ad::Var E = tape.constant(e_star);
  const MapValues at_star = record_map(m, H, E);
  const ad::Var h_star = ad::mul_const(at_star.x, Tomt) + ad::mul_const(E, Tt);
  const ad::Var e = E + ad::mul_const(z - h_star, inv_j);

  const MapValues mv = record_map(m, H, e);
  const ad::Var J = ad::mul_const(mv.d1, Tomt) + ad::mul_const(tape.constant(Mat::Ones(B, 1)), Tt);
  const ad::Var score = (-e - ad::mul_const(mv.d2, Tomt) / J) / J;
  const ad::Var reverse = (e - mv.x) - ad::mul_const(score, Tg);
  const ad::Var diff = ad::mul_const(ad::square(forward - reverse), Tw);

  const ad::Var total = ad::mean(prior + rec + diff);
  DotLossEvaluation out;
  out.l_prior = prior.value().mean();
  out.l_rec = rec.value().mean();
  out.l_diff = diff.value().mean();
  out.total = total.value()(0, 0);
  if (!std::isfinite(out.total)) throw NumericalError("dot: non-finite loss");
  if (with_gradients) {
    tape.backward(total);
    out.map_grad = map_gradient(tape, m, H);
    out.transform_grad = F.gradient();
  }
  return out;
}

DotLossEvaluation ot_loss(const DotModel& model, const Mat& x, std::mt19937_64& rng, bool with_gradients) {
  return ot_loss(model, x, draw_dot_noise(model, x.rows(), rng), with_gradients);
}

DotSamples dot_sample(const DotModel& model, Eigen::Index n, std::mt19937_64& rng, const Rk45Options& options,
                      bool record) {
  if (n < 1) throw ContractError("dot: no samples requested");
  std::normal_distribution<double> normal;
  DotSamples out;
  out.eps.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.eps(i) = normal(rng);
  const OdeRhs rhs = [&](double t, const Vec& z) {
    Vec d(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) d(i) = ot_reverse_drift(model.map, t, z(i));
    return d;
  };
  Rk45Options o = options;
  o.record = record;
  const double t0 = model.schedule.time_min();
  Rk45Result r = integrate_rk45(rhs, 1.0, t0, out.eps, o);
  out.x = r.y / model.schedule.alpha(t0);
  out.times = std::move(r.times);
  out.states = std::move(r.states);
  return out;
}

DotTrainResult train_dot(DotModel& model, const Mat& data, const DotTrainOptions& options, std::mt19937_64& rng) {
  if (data.cols() != 1 || data.rows() < 1) throw ContractError("dot: training data must be (N x 1)");
  if (options.iterations < 1 || options.batch_size < 1) throw ContractError("dot: invalid training options");
  NetParams map_params{model.map.params(), 0};
  AdamState map_adam = AdamState::for_params(map_params, options.lr);
  const bool train_tr = options.train_transform && model.transform.is_learnable();
  AdamState tr_adam;
  if (train_tr) tr_adam = AdamState::for_params(model.transform.params(), options.lr);

  std::uniform_int_distribution<Eigen::Index> pick(0, data.rows() - 1);
  DotTrainResult res;
  res.losses.reserve(options.iterations);
  Mat batch(options.batch_size, 1);
  for (int it = 1; it <= options.iterations; ++it) {
    for (int i = 0; i < options.batch_size; ++i) batch(i, 0) = data(pick(rng), 0);
    const DotLossEvaluation ev = ot_loss(model, batch, rng, true);
    adam_step(map_params, ev.map_grad, map_adam);
    model.map.params() = map_params.values;
    if (train_tr) adam_step(model.transform.params(), ev.transform_grad, tr_adam);
    res.losses.push_back(ev.total);
    if (options.log_every > 0 && options.on_log && it % options.log_every == 0) options.on_log(it, ev);
  }
  const std::size_t tail = std::max<std::size_t>(1, res.losses.size() / 10);
  double s = 0.0;
  for (std::size_t i = res.losses.size() - tail; i < res.losses.size(); ++i) s += res.losses[i];
  res.final_loss = s / static_cast<double>(tail);
  return res;
}

}  // namespace ndm
