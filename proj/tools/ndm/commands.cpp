#include "commands.hpp"

#include "ndm/checkpoint.hpp"
#include "ndm/data.hpp"
#include "ndm/dot.hpp"
#include "ndm/errors.hpp"
#include "ndm/metrics.hpp"
#include "ndm/sampler.hpp"
#include "ndm/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace fs = std::filesystem;

namespace ndm::cli {

namespace {

struct Data {
  Normalization normalization;
  Mat train, test;  // normalised
};

Data load_data(const DataConfig& d) {
  const Mat raw = generate(DatasetSpec{d.kind, d.size, d.seed});
  Data out;
  out.normalization = Normalization::fit(raw);
  TrainTestSplit s = split_train_test(out.normalization.apply(raw), d.train_fraction, d.split_seed);
  out.train = std::move(s.train);
  out.test = std::move(s.test);
  return out;
}

std::ofstream open_csv(const fs::path& path, const std::string& hash) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "# config_hash=" << hash << "\n";
  return out;
}

void write_header(std::ostream& out, int d) {
  for (int j = 0; j < d; ++j) out << (j ? ",x" : "x") << j;
  out << "\n";
}

void write_rows(std::ostream& out, const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << "\n";
  }
}

Checkpoint load(const std::string& path) {
  try {
    return load_checkpoint(path);
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

void log_row(std::ostream& out, std::int64_t step, double prior, double rec, double diff, double total) {
  out << step << ',' << prior << ',' << rec << ',' << diff << ',' << total << "\n";
}

}  // namespace

// ------------------------------------------------------------------ train

int cmd_train(const RunConfig& c) {
  const std::string hash = config_hash(c);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.toml", canonical_toml(c));

  const Data data = load_data(c.data);
  const int d = dataset_dim(c.data.kind);
  std::mt19937_64 rng(c.seed);
  const NetSpec es = NetSpec::for_data(d, c.eps_net.hidden, TimeEmbedding::Sinusoidal, c.eps_net.frequencies);
  NetParams ep = init_params(es, rng);
  Transform tr = Transform::identity(d);
  if (c.transform == TransformKind::FixedDiagonal) {
    tr = Transform::fixed_diagonal(Eigen::Map<const Vec>(c.transform_coefficients.data(), d));
  } else if (c.transform == TransformKind::Learnable) {
    const NetSpec fs_ = NetSpec::for_data(d, c.transform_net.hidden, TimeEmbedding::Sinusoidal,
                                          c.transform_net.frequencies);
    tr = Transform::learnable(fs_, init_params(fs_, rng, true));
  }
  NdmModel model{Schedule(c.schedule), std::move(tr), es, std::move(ep)};

  auto snapshot = [&](const NdmModel& m, std::int64_t step) {
    Checkpoint ck = Checkpoint::from_model(m);
    ck.normalization = data.normalization;
    ck.dataset = dataset_descriptor(c.data);
    ck.loss_mode = to_string(c.loss);
    ck.config_hash = hash;
    ck.step = step;
    ck.seed = c.seed;
    return ck;
  };
  save_checkpoint(snapshot(model, 0), dir / "checkpoint.json");

  std::ofstream log = open_csv(dir / "train_log.csv", hash);
  log << "step,l_prior,l_rec,l_diff,total\n";
  TrainOptions opt;
  opt.mode = c.loss;
  opt.batch_size = c.batch_size;
  opt.iterations = c.iterations;
  opt.lr = {c.lr, c.warmup};
  opt.checkpoint_every = c.checkpoint_every;
  opt.on_step = [&](const TrainLogRow& r) {
    log_row(log, r.step, r.loss.l_prior, r.loss.l_rec, r.loss.l_diff, r.loss.total);
  };
  opt.on_checkpoint = [&](const NdmModel& m, std::int64_t step) {
    const Checkpoint ck = snapshot(m, step);
    save_checkpoint(ck, dir / ("checkpoint_" + std::to_string(step) + ".json"));
    save_checkpoint(ck, dir / "checkpoint.json");
  };
  const TrainOutcome out = train_ndm(model, data.train, opt, rng);
  log.flush();
  save_checkpoint(snapshot(model, out.steps_completed), dir / "checkpoint.json");
  if (out.diverged) {
    std::cerr << "ndm train: numerical failure after step " << out.steps_completed << ": " << out.error
              << "; last good parameters kept in " << (dir / "checkpoint.json").string() << "\n";
    return 3;
  }
  std::cerr << "ndm train: " << out.steps_completed << " steps, checkpoint " << (dir / "checkpoint.json").string()
            << "\n";
  return 0;
}

// -------------------------------------------------------------- dot-train

int cmd_dot_train(const RunConfig& c) {
  if (dataset_dim(c.data.kind) != 1) throw ConfigError("dot-train needs a 1-D dataset");
  if (c.loss == LossMode::Discrete) throw ConfigError("dot-train needs a continuous schedule");
  const std::string hash = config_hash(c);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.toml", canonical_toml(c));

  const Data data = load_data(c.data);
  std::mt19937_64 rng(c.seed);
  Transform tr = Transform::identity(1);
  if (c.dot.learnable_transform) {
    const NetSpec fs_ = NetSpec::for_data(1, c.transform_net.hidden, TimeEmbedding::Sinusoidal,
                                          c.transform_net.frequencies);
    tr = Transform::learnable(fs_, init_params(fs_, rng, true));
  }
  DotModel model{Schedule(c.schedule), std::move(tr), MonotoneMap::init(c.dot.hidden, rng)};

  auto snapshot = [&](const DotModel& m, std::int64_t step) {
    Checkpoint ck;
    ck.kind = Checkpoint::Kind::Dot;
    ck.schedule = m.schedule.config();
    ck.transform = m.transform;
    ck.dot_map = m.map;
    ck.normalization = data.normalization;
    ck.dataset = dataset_descriptor(c.data);
    ck.loss_mode = "ot";
    ck.config_hash = hash;
    ck.step = step;
    ck.seed = c.seed;
    return ck;
  };

  std::ofstream log = open_csv(dir / "train_log.csv", hash);
  log << "step,l_prior,l_rec,l_diff,total\n";
  DotTrainOptions opt;
  opt.iterations = c.dot.iterations;
  opt.batch_size = c.dot.batch_size;
  opt.lr = {c.dot.lr, c.dot.warmup};
  opt.log_every = 1;
  std::int64_t last_step = 0;
  opt.on_log = [&](int step, const DotLossEvaluation& ev) {
    log_row(log, step, ev.l_prior, ev.l_rec, ev.l_diff, ev.total);
    last_step = step;
  };
  try {
    train_dot(model, data.train, opt, rng);
  } catch (const NumericalError& e) {
    log.flush();
    save_checkpoint(snapshot(model, last_step), dir / "checkpoint.json");
    std::cerr << "ndm dot-train: numerical failure after step " << last_step << ": " << e.what() << "\n";
    return 3;
  }
  log.flush();
  save_checkpoint(snapshot(model, c.dot.iterations), dir / "checkpoint.json");

  std::ofstream samples = open_csv(dir / "samples.csv", hash);
  samples << "x0\n";
  if (c.dot.samples > 0) {
    const DotSamples s = dot_sample(model, c.dot.samples, rng);
    write_rows(samples, data.normalization.invert(Mat(s.x)));
  }
  std::cerr << "ndm dot-train: " << c.dot.iterations << " steps, checkpoint "
            << (dir / "checkpoint.json").string() << "\n";
  return 0;
}

// ----------------------------------------------------------------- sample

int cmd_sample(const SampleArgs& a) {
  if (a.n < 0) throw ConfigError("--n must be >= 0");
  const Checkpoint ck = load(a.checkpoint);
  const int d = ck.transform.data_dim();
  const bool continuous = ck.schedule.mode == TimeMode::Continuous;
  const bool ode = a.method == "rk45-ode";
  if (a.method != "ancestral" && a.method != "ddim" && a.method != "em-sde" && !ode)
    throw ConfigError("unknown sampling method " + a.method);
  if ((a.method == "em-sde" || ode) && !continuous)
    throw ConfigError(a.method + " needs a continuous-time model; this checkpoint is discrete");
  if (ck.kind == Checkpoint::Kind::Dot && !ode) throw ConfigError("restricted 1-D models sample with rk45-ode only");
  if (a.steps && *a.steps < 1) throw ConfigError("--steps must be >= 1");

  std::ofstream out = open_csv(a.out, ck.config_hash);
  write_header(out, d);
  std::ofstream traj;
  if (!a.trajectories.empty()) {
    traj = open_csv(a.trajectories, ck.config_hash);
    traj << "sample,t";
    for (int j = 0; j < d; ++j) traj << ",z" << j;
    traj << "\n";
  }
  if (a.n == 0) return 0;

  std::mt19937_64 rng(a.seed);
  Trajectory path;
  Trajectory* rec = a.trajectories.empty() ? nullptr : &path;
  Rk45Options o;
  o.atol = a.atol;
  o.rtol = a.rtol;
  Mat x;
  if (ck.kind == Checkpoint::Kind::Dot) {
    const DotSamples s = dot_sample(ck.dot_model(), a.n, rng, o, rec != nullptr);
    x = s.x;
    for (std::size_t k = 0; k < s.times.size(); ++k) {
      path.times.push_back(s.times[k]);
      path.states.push_back(s.states[k]);
    }
  } else {
    const NdmModel m = ck.ndm_model();
    const int steps = a.steps.value_or(continuous ? 1000 : m.schedule.steps() - 1);
    if (a.method == "ancestral") {
      x = ancestral_sample(m, a.n, steps, rng, 1.0, rec);
    } else if (a.method == "ddim") {
      std::normal_distribution<double> normal;
      Mat z(a.n, d);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
      x = ddim_sample(m, z, steps, rec);
    } else if (a.method == "em-sde") {
      x = em_sample(m, a.n, steps, rng, 1.0, rec);
    } else {
      std::normal_distribution<double> normal;
      Mat z(a.n, d);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
      x = ode_sample(m, z, o, rec);
    }
  }
  write_rows(out, ck.normalization.invert(x));
  if (rec) {
    for (std::size_t k = 0; k < path.times.size(); ++k)
      for (Eigen::Index i = 0; i < path.states[k].rows(); ++i) {
        traj << i << ',' << path.times[k];
        for (Eigen::Index j = 0; j < path.states[k].cols(); ++j) traj << ',' << path.states[k](i, j);
        traj << "\n";
      }
  }
  return 0;
}

// ------------------------------------------------------------------- eval

namespace {

Estimate mean_and_se(const std::vector<double>& v) {
  Estimate e;
  e.n = static_cast<long>(v.size());
  if (v.empty()) return e;
  for (double x : v) e.mean += x / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    e.standard_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return e;
}

double log_mean_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s / static_cast<double>(v.size()));
}

// -log p(x) for the restricted model by importance sampling of z_min.
Estimate dot_nll(const DotModel& m, const Mat& x, std::mt19937_64& rng) {
  const double t0 = m.schedule.time_min(), a0 = m.schedule.alpha(t0), sr = m.sigma_rec();
  std::normal_distribution<double> normal;
  std::vector<double> nll;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> w(4);
    for (double& wi : w) {
      const double z = a0 * (x(i, 0) + sr * normal(rng));
      wi = ot_log_density(m.map, t0, z) + std::log(a0);
    }
    nll.push_back(-log_mean_exp(w));
  }
  return mean_and_se(nll);
}

// Energy distance on four disjoint blocks; the spread gives a standard error.
Estimate blocked_energy(const Mat& a, const Mat& b) {
  const Eigen::Index k = 4, na = a.rows() / k, nb = b.rows() / k;
  std::vector<double> v;
  for (Eigen::Index i = 0; i < k; ++i) v.push_back(energy_distance(a.middleRows(i * na, na), b.middleRows(i * nb, nb)));
  Estimate e = mean_and_se(v);
  e.mean = energy_distance(a, b);
  e.n = static_cast<long>(a.rows());
  return e;
}

}  // namespace

int cmd_eval(const EvalArgs& a) {
  if (a.checkpoints.empty()) throw ConfigError("eval needs at least one --ckpt");
  if (a.mc < 1) throw ConfigError("--mc must be >= 1");
  const std::vector<std::string> known{"nelbo", "nll-ode", "energy-distance", "ks"};
  for (const std::string& m : a.metrics)
    if (std::find(known.begin(), known.end(), m) == known.end()) throw ConfigError("unknown metric " + m);
  auto wants = [&](const char* m) { return std::find(a.metrics.begin(), a.metrics.end(), m) != a.metrics.end(); };

  std::vector<Checkpoint> cks;
  for (const std::string& p : a.checkpoints) cks.push_back(load(p));
  for (const Checkpoint& ck : cks) {
    if (wants("nll-ode") && ck.schedule.mode != TimeMode::Continuous)
      throw ConfigError("nll-ode needs a continuous-time model");
    if (wants("ks") && ck.transform.data_dim() != 1) throw ConfigError("ks needs a 1-D model");
    if (wants("ks") && parse_dataset_descriptor(ck.dataset).kind != DatasetKind::GaussianMixture1d)
      throw ConfigError("ks needs a dataset with a known CDF (gaussian-mixture-1d)");
  }

  std::vector<MetricRow> rows;
  std::vector<ComparisonEntry> table;
  std::string hashes;
  for (std::size_t c = 0; c < cks.size(); ++c) {
    const Checkpoint& ck = cks[c];
    const std::string id = a.checkpoints[c];
    hashes += (c ? "+" : "") + ck.config_hash;
    const Data data = load_data(parse_dataset_descriptor(ck.dataset));
    Mat test = data.test;
    if (a.max_points > 0 && a.max_points < test.rows()) test = Mat(test.topRows(a.max_points));
    const int d = ck.transform.data_dim();
    // likelihoods are reported for the raw data, undoing the normalisation
    const double shift = -data.normalization.log_abs_det();
    const double to_bpd = 1.0 / (d * std::numbers::ln2);
    std::mt19937_64 rng(a.seed);
    ComparisonEntry entry{id, NAN, NAN, NAN, NAN};

    if (wants("nelbo")) {
      Estimate e;
      if (ck.kind == Checkpoint::Kind::Dot) {
        std::vector<double> reps;
        for (int r = 0; r < a.mc; ++r) reps.push_back(ot_loss(ck.dot_model(), test, rng, false).total);
        e = mean_and_se(reps);
        e.n = static_cast<long>(test.rows()) * a.mc;
      } else {
        const LossMode mode = ck.schedule.mode == TimeMode::Discrete ? LossMode::Discrete : LossMode::Continuous;
        e = nelbo_eval(ck.ndm_model(), mode, test, a.mc, rng).nats;
      }
      rows.push_back({id, "nelbo_nats", e.mean + shift, e.standard_error, e.n});
      rows.push_back({id, "nelbo_bpd", (e.mean + shift) * to_bpd, e.standard_error * to_bpd, e.n});
      entry.nelbo_bpd = (e.mean + shift) * to_bpd;
      entry.nelbo_se = e.standard_error * to_bpd;
    }
    if (wants("nll-ode")) {
      Estimate e;
      if (ck.kind == Checkpoint::Kind::Dot) {
        e = dot_nll(ck.dot_model(), test, rng);
      } else {
        const NllResult r = nll_ode(ck.ndm_model(), test, {}, rng);
        e = {r.mean, r.standard_error, static_cast<long>(test.rows())};
      }
      rows.push_back({id, "nll-ode_nats", e.mean + shift, e.standard_error, e.n});
      rows.push_back({id, "nll-ode_bpd", (e.mean + shift) * to_bpd, e.standard_error * to_bpd, e.n});
      entry.nll_bpd = (e.mean + shift) * to_bpd;
      entry.nll_se = e.standard_error * to_bpd;
    }
    Mat samples;
    if (wants("energy-distance") || wants("ks")) {
      if (ck.kind == Checkpoint::Kind::Dot) {
        samples = dot_sample(ck.dot_model(), test.rows(), rng).x;
      } else {
        const NdmModel m = ck.ndm_model();
        const int steps = m.schedule.continuous() ? 1000 : m.schedule.steps() - 1;
        samples = ancestral_sample(m, test.rows(), steps, rng);
      }
    }
    if (wants("energy-distance")) {
      const Mat raw_test = data.normalization.invert(test);
      const Estimate model = blocked_energy(data.normalization.invert(samples), raw_test);
      const Mat ref = data.normalization.invert(Mat(data.train.topRows(std::min(data.train.rows(), test.rows()))));
      const Estimate base = blocked_energy(ref, raw_test);
      rows.push_back({id, "energy-distance", model.mean, model.standard_error, model.n});
      rows.push_back({id, "energy-distance-baseline", base.mean, base.standard_error, base.n});
    }
    if (wants("ks")) {
      const KsResult r = ks_test_1d(data.normalization.invert(samples).col(0), gaussian_mixture_1d_cdf);
      rows.push_back({id, "ks-statistic", r.statistic, 0.0, static_cast<long>(samples.rows())});
      rows.push_back({id, "ks-pvalue", r.p_value, 0.0, static_cast<long>(samples.rows())});
    }
    table.push_back(entry);
  }

  const std::string hash = cks.size() == 1 ? cks[0].config_hash : fnv1a_hex(hashes);
  std::ofstream out(a.out);
  if (!out) throw ConfigError("cannot write " + a.out);
  write_metrics_csv(out, rows, hash);
  if (!a.table.empty()) {
    std::ofstream t(a.table);
    if (!t) throw ConfigError("cannot write " + a.table);
    write_comparison_table(t, table, hash);
  }
  return 0;
}

// ------------------------------------------------------- export-transform

namespace {

Vec parse_grid(const std::string& spec) {
  std::istringstream in(spec);
  std::string lo, hi, n;
  if (!std::getline(in, lo, ':') || !std::getline(in, hi, ':') || !std::getline(in, n))
    throw ConfigError("--grid must look like lo:hi:n");
  try {
    const double a = std::stod(lo), b = std::stod(hi);
    const long k = std::stol(n);
    if (k < 1 || !(b >= a)) throw ConfigError("--grid needs n >= 1 and hi >= lo");
    return k == 1 ? Vec::Constant(1, a) : Vec(Vec::LinSpaced(k, a, b));
  } catch (const std::logic_error&) {
    throw ConfigError("--grid must look like lo:hi:n");
  }
}

std::vector<double> parse_times(const std::string& spec) {
  std::vector<double> t;
  std::istringstream in(spec);
  for (std::string part; std::getline(in, part, ',');) {
    try {
      t.push_back(std::stod(part));
    } catch (const std::logic_error&) {
      throw ConfigError("--times must be a comma-separated list of numbers");
    }
    if (t.back() < 0 || t.back() > 1) throw ConfigError("--times entries must lie in [0, 1]");
  }
  if (t.empty()) throw ConfigError("--times is empty");
  return t;
}

}  // namespace

int cmd_export_transform(const ExportArgs& a) {
  const Checkpoint ck = load(a.checkpoint);
  const Vec g = parse_grid(a.grid);
  const std::vector<double> times = parse_times(a.times);
  const int d = ck.transform.data_dim();
  if (d > 2) throw ConfigError("export-transform supports 1-D and 2-D models");
  const Eigen::Index n = g.size();
  Mat x(d == 1 ? n : n * n, d);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = g(d == 1 ? i : i / n);
    if (d == 2) x(i, 1) = g(i % n);
  }
  std::ofstream out = open_csv(a.out, ck.config_hash);
  out << "t";
  for (int j = 0; j < d; ++j) out << ",x" << j;
  for (int j = 0; j < d; ++j) out << ",F" << j;
  out << "\n";
  for (double t : times) {
    const Mat f = ck.transform.apply(x, Vec::Constant(x.rows(), t));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out << t;
      for (int j = 0; j < d; ++j) out << ',' << x(i, j);
      for (int j = 0; j < d; ++j) out << ',' << f(i, j);
      out << "\n";
    }
  }
  return 0;
}

}  // namespace ndm::cli
