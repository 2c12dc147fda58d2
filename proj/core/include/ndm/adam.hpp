#pragma once

#include "ndm/net.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ndm {

/// Constant learning rate after a linear warmup from 1e-8.
struct LrSchedule {
  double peak = 1e-3;
  std::int64_t warmup_steps = 0;

  /// Rate used for the update numbered `step` (1-based).
  double at(std::int64_t step) const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LrSchedule lr;

  static AdamState for_params(const NetParams& params, LrSchedule lr);
};

/// Bias-corrected Adam update, applied in place. Non-finite gradients are
/// rejected with NumericalError before anything is modified.
void adam_step(NetParams& params, std::span<const double> grads, AdamState& state);

}  // namespace ndm
