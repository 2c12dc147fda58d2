#include "ndm/adam.hpp"

#include "ndm/errors.hpp"

#include <cmath>

namespace ndm {

double LrSchedule::at(std::int64_t step) const {
  if (warmup_steps <= 0 || step >= warmup_steps) return peak;
  constexpr double start = 1e-8;
  const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
  return start + (peak - start) * frac;
}

AdamState AdamState::for_params(const NetParams& params, LrSchedule lr) {
  AdamState s;
  s.m.assign(params.values.size(), 0.0);
  s.v.assign(params.values.size(), 0.0);
  s.lr = lr;
  return s;
}

void adam_step(NetParams& params, std::span<const double> grads, AdamState& state) {
  const std::size_t n = params.values.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n)
    throw ContractError("adam_step: parameter, gradient and moment lengths differ");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(grads[i])) throw NumericalError("adam_step: non-finite gradient at index " + std::to_string(i));

  const std::int64_t step = state.step + 1;
  const double lr = state.lr.at(step);
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params.values[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
  state.step = step;
  ++params.version;
}

}  // namespace ndm
