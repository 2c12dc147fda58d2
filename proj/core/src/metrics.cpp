#include "ndm/metrics.hpp"

#include "ndm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <vector>

namespace ndm {

namespace {

// Sum over ordered pairs of |x_i - x_j| for 1-D values.
double pairwise_abs_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * (2.0 * static_cast<double>(i) - n + 1.0);
  return 2.0 * s;
}

double energy_1d(const Mat& a, const Mat& b) {
  std::vector<double> va(a.data(), a.data() + a.rows());
  std::vector<double> vb(b.data(), b.data() + b.rows());
  std::vector<double> all = va;
  all.insert(all.end(), vb.begin(), vb.end());
  const double wa = pairwise_abs_sum(va);
  const double wb = pairwise_abs_sum(vb);
  const double cross = 0.5 * (pairwise_abs_sum(std::move(all)) - wa - wb);
  const double n = static_cast<double>(a.rows()), m = static_cast<double>(b.rows());
  return std::max(0.0, 2.0 * cross / (n * m) - wa / (n * n) - wb / (m * m));
}

double mean_distance(const Mat& a, const Mat& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += (b.rowwise() - a.row(i)).rowwise().norm().sum();
  return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double energy_distance(const Mat& a, const Mat& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ContractError("energy_distance: empty sample set");
  if (a.cols() != b.cols()) throw ContractError("energy_distance: dimension mismatch");
  if (a.cols() == 1) return energy_1d(a, b);
  return std::max(0.0, 2.0 * mean_distance(a, b) - mean_distance(a, a) - mean_distance(b, b));
}

PermutationTestResult energy_permutation_test(const Mat& a, const Mat& b, int permutations, std::mt19937_64& rng) {
  if (permutations < 1) throw ContractError("permutation test: need at least one permutation");
  PermutationTestResult r;
  r.statistic = energy_distance(a, b);
  Mat pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  std::vector<Eigen::Index> idx(pooled.rows());
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::vector<double> null(permutations);
  int exceed = 0;
  Mat pa(a.rows(), a.cols()), pb(b.rows(), b.cols());
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Eigen::Index i = 0; i < a.rows(); ++i) pa.row(i) = pooled.row(idx[i]);
    for (Eigen::Index i = 0; i < b.rows(); ++i) pb.row(i) = pooled.row(idx[a.rows() + i]);
    null[p] = energy_distance(pa, pb);
    if (null[p] >= r.statistic) ++exceed;
  }
  r.p_value = (1.0 + exceed) / (1.0 + permutations);
  std::sort(null.begin(), null.end());
  const auto q = static_cast<std::size_t>(std::ceil(0.999 * permutations)) - 1;
  r.null_quantile_999 = null[std::min(q, null.size() - 1)];
  return r;
}

double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test_1d(const Vec& samples, const std::function<double(double)>& cdf) {
  if (samples.size() == 0) throw ContractError("ks: empty sample");
  std::vector<double> v(samples.data(), samples.data() + samples.size());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

NelboResult nelbo_eval(const NdmModel& model, LossMode mode, const Mat& data, int mc_samples, std::mt19937_64& rng,
                       Eigen::Index chunk) {
  if (mode == LossMode::Simple) throw ContractError("nelbo: the simple loss is not a bound");
  if (mc_samples < 1) throw ContractError("nelbo: mc_samples must be >= 1");
  if (data.rows() < 1) throw ContractError("nelbo: empty data");
  if (chunk < 1) throw ContractError("nelbo: chunk must be >= 1");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(data.rows()) * mc_samples);
  NelboResult res;
  double prior = 0.0, rec = 0.0, diff = 0.0;
  for (int r = 0; r < mc_samples; ++r) {
    for (Eigen::Index start = 0; start < data.rows(); start += chunk) {
      const Eigen::Index m = std::min(chunk, data.rows() - start);
      const Mat x = data.middleRows(start, m);
      const LossNoise noise = draw_loss_noise(model, mode, m, rng);
      const LossEvaluation ev = evaluate_loss(model, mode, x, noise, false);
      for (Eigen::Index i = 0; i < m; ++i) values.push_back(ev.per_example(i));
      prior += ev.breakdown.l_prior * m;
      rec += ev.breakdown.l_rec * m;
      diff += ev.breakdown.l_diff * m;
    }
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double se = values.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  const double to_bpd = 1.0 / (static_cast<double>(model.data_dim()) * std::numbers::ln2);
  res.nats = {mean, se, static_cast<long>(values.size())};
  res.bits_per_dim = {mean * to_bpd, se * to_bpd, static_cast<long>(values.size())};
  res.terms = {prior / n, rec / n, diff / n, mean, static_cast<int>(data.rows())};
  return res;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows, const std::string& config_hash) {
  out << "# config_hash=" << config_hash << "\n";
  out << "run_id,metric,value,stderr,n\n";
  out.precision(17);
  for (const MetricRow& r : rows)
    out << r.run_id << ',' << r.metric << ',' << r.value << ',' << r.standard_error << ',' << r.n << "\n";
}

void write_comparison_table(std::ostream& out, const std::vector<ComparisonEntry>& rows,
                            const std::string& config_hash) {
  out << "# config_hash=" << config_hash << "\n";
  out << "model,NELBO,NELBO_stderr,NLL,NLL_stderr\n";
  out.precision(6);
  out << std::fixed;
  for (const ComparisonEntry& r : rows)
    out << r.run_id << ',' << r.nelbo_bpd << ',' << r.nelbo_se << ',' << r.nll_bpd << ',' << r.nll_se << "\n";
  out.unsetf(std::ios::floatfield);
}

}  // namespace ndm
