#pragma once

#include "mcrfm/config.hpp"
#include "mcrfm/nn.hpp"

namespace mcrfm::projector {

/// Bottleneck from a frozen feature h (dim d) into the product manifold.
struct ProjectorParams {
  nn::Dense hyperbolic;    // W_h, b_h : d -> d_h
  nn::Dense euclidean;     // W_e, b_e : d -> d_e
  ad::ParamTensor alpha_h_raw;  // 1 x 1, smooth-clamped on use
  ad::ParamTensor alpha_e_raw;  // 1 x 1, softplus on use
  ad::ParamTensor ln_gain;      // 1 x d_e
  ad::ParamTensor ln_bias;      // 1 x d_e

  static ProjectorParams make(const ModelConfig& cfg, CounterRng& rng);
  void collect(nn::ParamList& out);
};

struct Bound {
  nn::Dense::Bound hyperbolic;
  nn::Dense::Bound euclidean;
  ad::Var alpha_h_raw, alpha_e_raw, ln_gain, ln_bias;
  bool ln_affine = true;
};
Bound bind(ad::Tape& tape, ProjectorParams& p, const ModelConfig& cfg);

/// Bottleneck pair (u_h, u_e) and lifted state z = (exp0(u_h), u_e).
struct Projection {
  ad::Var u_h, u_e;
  ad::Var z_h, z_e;
};

/// alpha_min + (alpha_max - alpha_min) * sigmoid(raw).
double clamp_alpha_h(double raw, double alpha_min, double alpha_max);
ad::Var clamp_alpha_h(ad::Var raw, double alpha_min, double alpha_max);

/// h: n x d rows of features.
Projection project(const Bound& b, ad::Var h, const ModelConfig& cfg, double eps_ball);

}  // namespace mcrfm::projector
