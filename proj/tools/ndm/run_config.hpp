#pragma once

#include "ndm/data.hpp"
#include "ndm/objective.hpp"
#include "ndm/schedule.hpp"
#include "ndm/transform.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ndm::cli {

/// Invalid configuration or usage; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  DatasetKind kind = DatasetKind::Checkerboard2d;
  std::int64_t size = 20000;
  std::uint64_t seed = 1;
  double train_fraction = 0.9;
  std::uint64_t split_seed = 7;
};

struct NetConfig {
  std::vector<int> hidden;
  int frequencies = 8;
};

struct SamplerConfig {
  std::string method = "ancestral";
  int steps = 0;  // 0: every grid step (discrete) or 1000 (continuous)
  double atol = 1e-5;
  double rtol = 1e-5;
};

struct DotConfig {
  int hidden = 8;
  bool learnable_transform = true;
  int iterations = 3000;
  int batch_size = 256;
  double lr = 3e-3;
  int warmup = 100;
  std::int64_t samples = 2000;
};

struct RunConfig {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataConfig data;
  LossMode loss = LossMode::Continuous;
  ScheduleConfig schedule;
  TransformKind transform = TransformKind::Learnable;
  NetConfig transform_net{{64, 64}, 8};
  std::vector<double> transform_coefficients;  // fixed-diagonal only
  NetConfig eps_net{{64, 64, 64}, 8};
  int batch_size = 256;
  std::int64_t iterations = 20000;
  double lr = 2e-3;
  int warmup = 200;
  std::int64_t checkpoint_every = 1000;
  SamplerConfig sampler;
  DotConfig dot;
};

/// Parses TOML text, applies `overrides` ("section.key=value", later wins)
/// and fills unspecified fields with defaults. Unknown keys, bad enum names
/// and a missing seed are ConfigErrors.
RunConfig parse_run_config(const std::string& toml_text, const std::vector<std::string>& overrides);
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// Canonical TOML rendering of every field; equal configs give equal text.
std::string canonical_toml(const RunConfig& config);
/// FNV-1a of the canonical rendering, ignoring output_dir.
std::string config_hash(const RunConfig& config);

std::string to_string(LossMode mode);
std::string to_string(TransformKind kind);

/// Compact dataset descriptor stored in checkpoints, e.g.
/// "checkerboard-2d;size=20000;seed=1;train_fraction=0.9;split_seed=7".
std::string dataset_descriptor(const DataConfig& data);
DataConfig parse_dataset_descriptor(const std::string& text);

}  // namespace ndm::cli
