#include "ocl/optim.hpp"

#include <cmath>

namespace ocl {

void OptimState::init(const std::vector<Tensor*>& params) {
  m.clear();
  v.clear();
  for (const Tensor* t : params) {
    m.emplace_back(t->size(), 0.0);
    v.emplace_back(t->size(), 0.0);
  }
  step_count = 0;
}

double lr_at(long step, int epoch, const OptimState& opt) {
  if (step < 0) throw InvalidInput("lr_at: step must be >= 0");
  if (opt.warmup_steps > 0 && step < opt.warmup_steps)
    return opt.base_lr * static_cast<double>(step + 1) / opt.warmup_steps;
  double lr = opt.base_lr;
  for (int e : opt.decay_epochs)
    if (epoch >= e) lr *= opt.decay_factor;
  return lr;
}

void adam_step(const std::vector<Tensor*>& params, OptimState& opt,
               double lr) {
  if (params.size() != opt.m.size())
    throw InvalidInput("adam_step: optimizer state not initialized");
  opt.step_count += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, opt.step_count);
  const double bc2 = 1.0 - std::pow(opt.beta2, opt.step_count);

  for (size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    if (!p.trainable) continue;
    VecD& m = opt.m[t];
    VecD& v = opt.v[t];
    for (size_t i = 0; i < p.value.size(); ++i) {
      double g = p.grad[i];
      if (!std::isfinite(g))
        throw DivergenceError("non-finite gradient in tensor " + p.name,
                              opt.step_count);
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.value[i] -= lr * (mhat / (std::sqrt(vhat) + opt.eps) +
                          opt.weight_decay * p.value[i]);
      if (!std::isfinite(p.value[i]))
        throw DivergenceError("non-finite parameter in tensor " + p.name,
                              opt.step_count);
    }
  }
}

}  // namespace ocl
