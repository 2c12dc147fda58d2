#pragma once

#include "ndm/adam.hpp"
#include "ndm/model.hpp"
#include "ndm/objective.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace ndm {

struct TrainLogRow {
  std::int64_t step = 0;
  LossBreakdown loss;
};

struct TrainOptions {
  LossMode mode = LossMode::Continuous;
  int batch_size = 256;
  std::int64_t iterations = 1000;
  LrSchedule lr;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::function<void(const TrainLogRow&)> on_step;
  std::function<void(const NdmModel&, std::int64_t step)> on_checkpoint;
};

struct TrainOutcome {
  std::int64_t steps_completed = 0;
  bool diverged = false;
  std::string error;  // set when diverged
};

/// Adam on the eps network and, for a learnable transform, on F jointly.
/// Minibatches are drawn with replacement. A non-finite loss or gradient
/// stops training before the offending update, leaving the model at its
/// last good parameters.
TrainOutcome train_ndm(NdmModel& model, const Mat& data, const TrainOptions& options, std::mt19937_64& rng);

}  // namespace ndm
