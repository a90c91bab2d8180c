#pragma once

#include <span>
#include <vector>

#include "mcrfm/autodiff.hpp"

namespace mcrfm::optim {

struct AdamWConfig {
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamWConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  long step = 0;
};

OptimState make_state(std::span<ad::ParamTensor* const> params, AdamWConfig config);

/// Decoupled weight decay followed by the bias-corrected Adam update.
/// Throws DivergenceError naming the parameter if any updated value is non-finite.
void adamw_step(std::span<ad::ParamTensor* const> params, OptimState& state, double lr);

double global_grad_norm(std::span<ad::ParamTensor* const> params);

/// Scales every gradient by max_norm / norm when the global L2 norm exceeds
/// max_norm. Returns the norm before clipping.
double clip_global_norm(std::span<ad::ParamTensor* const> params, double max_norm);

struct LrSchedule {
  double base_lr = 5e-4;
  int warmup_epochs = 5;
  int total_epochs = 50;
};

/// Linear warmup base*(e+1)/warmup for e < warmup, then cosine from base to 0:
/// base * (1 + cos(pi * (e - warmup) / (total - warmup))) / 2.
double lr_at(const LrSchedule& schedule, int epoch);

}  // namespace mcrfm::optim
