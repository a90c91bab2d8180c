#include "mcrfm/optim.hpp"

#include <cmath>
#include <numbers>

#include "mcrfm/error.hpp"

namespace mcrfm::optim {

OptimState make_state(std::span<ad::ParamTensor* const> params, AdamWConfig config) {
  OptimState s;
  s.config = config;
  for (const ad::ParamTensor* p : params) {
    s.first_moment.emplace_back(p->value.rows, p->value.cols);
    s.second_moment.emplace_back(p->value.rows, p->value.cols);
  }
  return s;
}

void adamw_step(std::span<ad::ParamTensor* const> params, OptimState& state, double lr) {
  if (state.first_moment.size() != params.size()) {
    throw InvalidArgument("adamw_step: optimizer state does not match parameter list");
  }
  const AdamWConfig& cfg = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::ParamTensor& p = *params[i];
    Matrix& m = state.first_moment[i];
    Matrix& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad.data[k];
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * g;
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      double& w = p.value.data[k];
      w -= lr * cfg.weight_decay * w;
      w -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (!std::isfinite(w)) throw DivergenceError("adamw_step: non-finite value in " + p.name);
    }
  }
}

double global_grad_norm(std::span<ad::ParamTensor* const> params) {
  double s = 0.0;
  for (const ad::ParamTensor* p : params)
    for (double g : p->grad.data) s += g * g;
  return std::sqrt(s);
}

double clip_global_norm(std::span<ad::ParamTensor* const> params, double max_norm) {
  if (!(max_norm > 0.0)) throw InvalidArgument("clip_global_norm: max_norm must be positive");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double k = max_norm / norm;
    for (ad::ParamTensor* p : params)
      for (double& g : p->grad.data) g *= k;
  }
  return norm;
}

double lr_at(const LrSchedule& s, int epoch) {
  if (s.warmup_epochs < 0 || s.warmup_epochs > s.total_epochs) {
    throw InvalidArgument("lr_at: warmup_epochs must lie in [0, total_epochs]");
  }
  if (epoch < 0 || epoch >= s.total_epochs) throw InvalidArgument("lr_at: epoch out of range");
  if (epoch < s.warmup_epochs) {
    return s.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(s.warmup_epochs);
  }
  const int span = s.total_epochs - s.warmup_epochs;
  const double progress = static_cast<double>(epoch - s.warmup_epochs) / static_cast<double>(span);
  return s.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace mcrfm::optim
