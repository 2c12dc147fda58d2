#include "ndm/train.hpp"

#include "ndm/errors.hpp"

#include <cmath>

namespace ndm {

TrainOutcome train_ndm(NdmModel& model, const Mat& data, const TrainOptions& options, std::mt19937_64& rng) {
  if (data.rows() < 1 || data.cols() != model.data_dim()) throw ContractError("train: data shape mismatch");
  if (options.batch_size < 1) throw ContractError("train: batch_size must be >= 1");
  if (options.iterations < 0) throw ContractError("train: negative iteration count");

  AdamState eps_adam = AdamState::for_params(model.eps_params, options.lr);
  const bool learn_f = model.transform.is_learnable();
  AdamState f_adam;
  if (learn_f) f_adam = AdamState::for_params(model.transform.params(), options.lr);

  std::uniform_int_distribution<Eigen::Index> pick(0, data.rows() - 1);
  Mat batch(options.batch_size, data.cols());
  TrainOutcome out;
  for (std::int64_t step = 1; step <= options.iterations; ++step) {
    for (int i = 0; i < options.batch_size; ++i) batch.row(i) = data.row(pick(rng));
    try {
      const LossNoise noise = draw_loss_noise(model, options.mode, batch.rows(), rng);
      const LossEvaluation ev = evaluate_loss(model, options.mode, batch, noise, true);
      for (double g : ev.transform_grad)
        if (!std::isfinite(g)) throw NumericalError("train: non-finite transform gradient");
      adam_step(model.eps_params, ev.eps_grad, eps_adam);
      if (learn_f) adam_step(model.transform.params(), ev.transform_grad, f_adam);
      out.steps_completed = step;
      if (options.on_step) options.on_step({step, ev.breakdown});
    } catch (const NumericalError& e) {
      out.diverged = true;
      out.error = e.what();
      return out;
    }
    if (options.checkpoint_every > 0 && options.on_checkpoint && step % options.checkpoint_every == 0)
      options.on_checkpoint(model, step);
  }
  return out;
}

}  // namespace ndm
