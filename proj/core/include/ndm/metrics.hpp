#pragma once

#include "ndm/model.hpp"
#include "ndm/objective.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace ndm {

/// 2 E|A - B| - E|A - A'| - E|B - B'| over all pairs (V-statistic), so
/// identical sample sets give exactly 0. Rows are samples.
double energy_distance(const Mat& a, const Mat& b);

struct PermutationTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double null_quantile_999 = 0.0;  // 99.9th percentile of the permutation null
};

PermutationTestResult energy_permutation_test(const Mat& a, const Mat& b, int permutations, std::mt19937_64& rng);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_survival(double lambda);

/// One-sample Kolmogorov-Smirnov test with the Stephens small-sample
/// correction of the asymptotic p-value.
KsResult ks_test_1d(const Vec& samples, const std::function<double(double)>& cdf);

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
  long n = 0;
};

struct NelboResult {
  Estimate nats;
  Estimate bits_per_dim;
  LossBreakdown terms;  // averaged over all draws
};

/// Monte-Carlo NELBO on held-out data with `mc_samples` independent noise
/// draws per point. The standard error is taken over all N * mc_samples draws.
NelboResult nelbo_eval(const NdmModel& model, LossMode mode, const Mat& data, int mc_samples, std::mt19937_64& rng,
                       Eigen::Index chunk = 1024);

/// One row of a metrics report.
struct MetricRow {
  std::string run_id;
  std::string metric;
  double value = 0.0;
  double standard_error = 0.0;
  long n = 0;
};

/// CSV with a leading "# config_hash=..." line and header run_id,metric,value,stderr,n.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows, const std::string& config_hash);

/// Model comparison table: one row per run with NELBO and NLL in bits/dim.
struct ComparisonEntry {
  std::string run_id;
  double nelbo_bpd = 0.0;
  double nelbo_se = 0.0;
  double nll_bpd = 0.0;
  double nll_se = 0.0;
};

void write_comparison_table(std::ostream& out, const std::vector<ComparisonEntry>& rows, const std::string& config_hash);

}  // namespace ndm
