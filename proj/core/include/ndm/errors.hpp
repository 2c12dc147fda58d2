#pragma once

#include <stdexcept>
#include <string>

namespace ndm {

/// Caller broke a precondition (shape mismatch, invalid configuration, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a function (e.g. t < t_min).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite or singular value produced during evaluation.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, int layer = -1)
      : std::runtime_error(layer >= 0 ? what + " (layer " + std::to_string(layer) + ")" : what),
        layer_(layer) {}

  /// Index of the offending network layer, or -1 when not layer-specific.
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

/// Adaptive integrator could not make progress.
class StiffIntegrationError : public NumericalError {
 public:
  StiffIntegrationError(const std::string& what, double t, double step)
      : NumericalError(what + " at t=" + std::to_string(t) + " with step " + std::to_string(step)),
        t_(t),
        step_(step) {}

  double time() const noexcept { return t_; }
  double step() const noexcept { return step_; }

 private:
  double t_;
  double step_;
};

/// Monotone-map inversion failed even after the bisection fallback.
class InversionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ndm
