#pragma once

#include <vector>

#include "ocl/model.hpp"

namespace ocl {

// Adam with decoupled weight decay, linear warmup and step decay at fixed
// epochs.
struct OptimState {
  double base_lr = 1e-3;
  int warmup_steps = 0;
  std::vector<int> decay_epochs = {80, 180, 300};
  double decay_factor = 0.1;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  long step_count = 0;
  std::vector<VecD> m, v;  // one slot per parameter tensor

  void init(const std::vector<Tensor*>& params);
};

// Linear ramp from base_lr/warmup_steps up to base_lr over warmup_steps
// steps, then base_lr * decay_factor^(number of decay epochs passed).
// Epochs are 1-based; a decay epoch counts from the epoch itself onward.
double lr_at(long step, int epoch, const OptimState& opt);

// One update over all trainable parameters. Throws DivergenceError on
// non-finite gradients or parameters.
void adam_step(const std::vector<Tensor*>& params, OptimState& opt, double lr);

}  // namespace ocl
