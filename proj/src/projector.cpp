#include "mcrfm/projector.hpp"

#include <cmath>

#include "mcrfm/error.hpp"

namespace mcrfm::projector {

ProjectorParams ProjectorParams::make(const ModelConfig& cfg, CounterRng& rng) {
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  const auto dh = static_cast<std::size_t>(cfg.d_h);
  const auto de = static_cast<std::size_t>(cfg.d_e);
  ProjectorParams p;
  p.hyperbolic = nn::Dense::make("projector.hyperbolic", d, dh, rng);
  p.euclidean = nn::Dense::make("projector.euclidean", d, de, rng);
  const double frac = (cfg.alpha_h_init - cfg.alpha_min) / (cfg.alpha_max - cfg.alpha_min);
  p.alpha_h_raw = nn::constant_param("projector.alpha_h_raw", 1, 1, nn::logit(frac));
  p.alpha_e_raw = nn::constant_param("projector.alpha_e_raw", 1, 1, nn::softplus_inverse(cfg.alpha_e_init));
  p.ln_gain = nn::constant_param("projector.ln_gain", 1, de, 1.0);
  p.ln_bias = nn::constant_param("projector.ln_bias", 1, de, 0.0);
  return p;
}

void ProjectorParams::collect(nn::ParamList& out) {
  hyperbolic.collect(out);
  euclidean.collect(out);
  out.push_back(&alpha_h_raw);
  out.push_back(&alpha_e_raw);
  out.push_back(&ln_gain);
  out.push_back(&ln_bias);
}

Bound bind(ad::Tape& tape, ProjectorParams& p, const ModelConfig& cfg) {
  Bound b;
  b.hyperbolic = p.hyperbolic.bind(tape);
  b.euclidean = p.euclidean.bind(tape);
  b.alpha_h_raw = tape.param(p.alpha_h_raw);
  b.alpha_e_raw = tape.param(p.alpha_e_raw);
  b.ln_affine = cfg.euclid_ln_affine;
  if (b.ln_affine) {
    b.ln_gain = tape.param(p.ln_gain);
    b.ln_bias = tape.param(p.ln_bias);
  }
  return b;
}

double clamp_alpha_h(double raw, double alpha_min, double alpha_max) {
  const double s = raw >= 0.0 ? 1.0 / (1.0 + std::exp(-raw)) : std::exp(raw) / (1.0 + std::exp(raw));
  return alpha_min + (alpha_max - alpha_min) * s;
}

ad::Var clamp_alpha_h(ad::Var raw, double alpha_min, double alpha_max) {
  return ad::add_scalar(ad::scale(ad::sigmoid(raw), alpha_max - alpha_min), alpha_min);
}

Projection project(const Bound& b, ad::Var h, const ModelConfig& cfg, double eps_ball) {
  if (h.cols() != static_cast<std::size_t>(cfg.feature_dim)) {
    throw InvalidArgument("project: feature length " + std::to_string(h.cols()) + " != " +
                          std::to_string(cfg.feature_dim));
  }
  Projection out;
  ad::Var raw_h = b.hyperbolic(h);
  ad::Var norm_h = ad::add_scalar(ad::sqrt_safe(ad::row_sum(ad::square(raw_h))), cfg.eps_norm);
  ad::Var alpha_h = clamp_alpha_h(b.alpha_h_raw, cfg.alpha_min, cfg.alpha_max);
  out.u_h = ad::mul(ad::div(raw_h, norm_h), alpha_h);
  out.z_h = ad::project_ball(ad::exp0(out.u_h, cfg.curvature), cfg.curvature, eps_ball);

  ad::Var ln = ad::layer_norm(b.euclidean(h));
  if (b.ln_affine) ln = ad::add(ad::mul(ln, b.ln_gain), b.ln_bias);
  out.u_e = ad::mul(ln, ad::softplus(b.alpha_e_raw));
  out.z_e = out.u_e;
  return out;
}

}  // namespace mcrfm::projector
