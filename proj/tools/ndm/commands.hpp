#pragma once

#include "run_config.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ndm::cli {

struct SampleArgs {
  std::string checkpoint;
  std::string method = "ancestral";
  std::int64_t n = 1000;
  std::optional<int> steps;
  double atol = 1e-5;
  double rtol = 1e-5;
  std::uint64_t seed = 0;
  std::string out = "samples.csv";
  std::string trajectories;  // empty: not exported
};

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::vector<std::string> metrics{"nelbo"};
  std::uint64_t seed = 0;
  int mc = 10;
  std::int64_t max_points = 0;  // 0: the whole held-out split
  std::string out = "metrics.csv";
  std::string table;            // comparison table path, optional
};

struct ExportArgs {
  std::string checkpoint;
  std::string grid = "-3:3:100";
  std::string times = "0,0.25,0.5,0.75,1";
  std::string out = "transform.csv";
};

int cmd_train(const RunConfig& config);
int cmd_dot_train(const RunConfig& config);
int cmd_sample(const SampleArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_export_transform(const ExportArgs& args);

}  // namespace ndm::cli
