#pragma once

#include "ndm/net.hpp"
#include "ndm/schedule.hpp"
#include "ndm/transform.hpp"

namespace ndm {

/// Everything needed to evaluate an NDM: schedule, forward transform F and
/// the noise-prediction network eps_hat.
struct NdmModel {
  Schedule schedule;
  Transform transform;
  NetSpec eps_spec;
  NetParams eps_params;

  int data_dim() const { return transform.data_dim(); }

  /// Standard deviation of the Gaussian decoder p(x | z) at the smallest time.
  double sigma_rec() const;
};

}  // namespace ndm
