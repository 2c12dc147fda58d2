#include "commands.hpp"

#include "ndm/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace ndm::cli;

// Explicit flags are appended after --set overrides, so they win over both
// the file and --set.
void add_run_flags(CLI::App& cmd, std::string& config, std::vector<std::string>& sets,
                   std::vector<std::string>& flags, bool iterations) {
  cmd.add_option("--config", config, "TOML run configuration")->required()->check(CLI::ExistingFile);
  cmd.add_option("--set", sets, "override a key, e.g. --set train.lr=1e-3 (repeatable)");
  cmd.add_option_function<std::uint64_t>(
      "--seed", [&flags](std::uint64_t s) { flags.push_back("run.seed=" + std::to_string(s)); }, "random seed");
  if (iterations)
    cmd.add_option_function<std::int64_t>(
        "--iterations", [&flags](std::int64_t n) { flags.push_back("train.iterations=" + std::to_string(n)); },
        "training iterations");
  cmd.add_option_function<std::string>(
      "--output-dir", [&flags](const std::string& d) { flags.push_back("run.output_dir=\"" + d + "\""); },
      "output directory");
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const std::string& item : items) {
    std::size_t start = 0;
    while (start <= item.size()) {
      const std::size_t comma = item.find(',', start);
      const std::string part = item.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (!part.empty()) out.push_back(part);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion models with learnable forward transforms"};
  app.require_subcommand(1);

  std::string train_config;
  std::vector<std::string> train_sets, train_flags;
  CLI::App* train = app.add_subcommand("train", "train a model");
  add_run_flags(*train, train_config, train_sets, train_flags, true);

  std::string dot_config;
  std::vector<std::string> dot_sets, dot_flags;
  CLI::App* dot = app.add_subcommand("dot-train", "train the restricted straight-line 1-D model");
  add_run_flags(*dot, dot_config, dot_sets, dot_flags, false);
  dot->add_option_function<int>(
      "--iterations", [&dot_flags](int n) { dot_flags.push_back("dot.iterations=" + std::to_string(n)); },
      "training iterations");

  SampleArgs sa;
  int sample_steps = 0;
  CLI::App* sample = app.add_subcommand("sample", "draw samples from a checkpoint");
  sample->add_option("--ckpt", sa.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  sample->add_option("--method", sa.method, "ancestral | ddim | em-sde | rk45-ode")
      ->check(CLI::IsMember({"ancestral", "ddim", "em-sde", "rk45-ode"}));
  sample->add_option("--n", sa.n, "number of samples")->check(CLI::NonNegativeNumber);
  CLI::Option* steps_opt = sample->add_option("--steps", sample_steps, "sampler steps")->check(CLI::PositiveNumber);
  sample->add_option("--atol", sa.atol, "ODE absolute tolerance")->check(CLI::PositiveNumber);
  sample->add_option("--rtol", sa.rtol, "ODE relative tolerance")->check(CLI::PositiveNumber);
  sample->add_option("--seed", sa.seed, "random seed");
  sample->add_option("--trajectories", sa.trajectories, "also write the solver trajectories here");
  sample->add_option("--out", sa.out, "output CSV");

  EvalArgs ea;
  std::vector<std::string> metric_list;
  CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on held-out data");
  eval->add_option("--ckpt", ea.checkpoints, "checkpoint file (repeatable)")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", metric_list, "nelbo,nll-ode,energy-distance,ks");
  eval->add_option("--seed", ea.seed, "random seed");
  eval->add_option("--mc", ea.mc, "noise draws per point for the NELBO")->check(CLI::PositiveNumber);
  eval->add_option("--max-points", ea.max_points, "limit on held-out points (0: all)")->check(CLI::NonNegativeNumber);
  eval->add_option("--out", ea.out, "metrics CSV");
  eval->add_option("--table", ea.table, "comparison table in Markdown");

  ExportArgs xa;
  CLI::App* exp = app.add_subcommand("export-transform", "evaluate F(x, t) on a grid");
  exp->add_option("--ckpt", xa.checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  exp->add_option("--grid", xa.grid, "lo:hi:n per axis");
  exp->add_option("--times", xa.times, "comma-separated times in [0, 1]");
  exp->add_option("--out", xa.out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      std::vector<std::string> ov = train_sets;
      ov.insert(ov.end(), train_flags.begin(), train_flags.end());
      return cmd_train(load_run_config(train_config, ov));
    }
    if (*dot) {
      std::vector<std::string> ov = dot_sets;
      ov.insert(ov.end(), dot_flags.begin(), dot_flags.end());
      return cmd_dot_train(load_run_config(dot_config, ov));
    }
    if (*sample) {
      if (*steps_opt) sa.steps = sample_steps;
      return cmd_sample(sa);
    }
    if (*eval) {
      if (!metric_list.empty()) ea.metrics = split_list(metric_list);
      return cmd_eval(ea);
    }
    if (*exp) return cmd_export_transform(xa);
  } catch (const ConfigError& e) {
    std::cerr << "ndm: " << e.what() << "\n";
    return 2;
  } catch (const ndm::ContractError& e) {
    std::cerr << "ndm: " << e.what() << "\n";
    return 2;
  } catch (const ndm::DomainError& e) {
    std::cerr << "ndm: " << e.what() << "\n";
    return 2;
  } catch (const ndm::NumericalError& e) {
    std::cerr << "ndm: numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "ndm: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
