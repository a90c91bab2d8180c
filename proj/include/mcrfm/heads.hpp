#pragma once

#include "mcrfm/config.hpp"
#include "mcrfm/nn.hpp"
#include "mcrfm/product_manifold.hpp"
#include "mcrfm/task_context.hpp"

namespace mcrfm::heads {

/// sigmoid(rho + Delta([r_h; r_e]) + b(c_S)) with a one-hidden-layer Delta.
/// The last Delta layer and b start at zero, so the initial output is sigmoid(rho).
struct MixerParams {
  ad::ParamTensor rho;  // 1 x 1
  nn::Dense hidden;     // m -> mix_hidden
  nn::Dense out;        // mix_hidden -> 1
  nn::Dense context;    // d_c -> 1

  static MixerParams make(const std::string& name, const ModelConfig& cfg, CounterRng& rng);
  void collect(nn::ParamList& out);
};

struct HeadParams {
  // Branch layer-norm affine terms shared by the gate, the mixer and the linear head.
  ad::ParamTensor ln_h_gain, ln_h_bias;  // 1 x d_h
  ad::ParamTensor ln_e_gain, ln_e_bias;  // 1 x d_e
  MixerParams gate;
  MixerParams beta;
  ad::ParamTensor rho_h, rho_e;  // 1 x 1, gamma = softplus(rho)
  nn::Dense classifier;          // m -> K

  static HeadParams make(const ModelConfig& cfg, std::size_t num_classes, CounterRng& rng);
  void collect(nn::ParamList& out);
};

struct MixerBound {
  ad::Var rho;
  nn::Dense::Bound hidden, out, context;
};

struct Bound {
  ad::Var ln_h_gain, ln_h_bias, ln_e_gain, ln_e_bias;
  MixerBound gate, beta;
  ad::Var rho_h, rho_e;
  nn::Dense::Bound classifier;
};
Bound bind(ad::Tape& tape, HeadParams& p);

/// Initial calibration scales: gamma_h = 1 and gamma_e = 1/d_e.
double initial_gamma_h();
double initial_gamma_e(int d_e);

/// r_h = LN(log0 z_h), r_e = LN(z_e), with the shared affine terms.
struct Features {
  ad::Var r_h, r_e;
};
Features features(const Bound& b, const pm::Batch& z, const ModelConfig& cfg);

/// Per-sample gate g (n x 1 or 1 x 1) and multipliers m_h = 2g, m_e = 2(1 - g).
/// Single-geometry models pin g to 1 (hyperbolic) or 0 (Euclidean).
struct Gate {
  ad::Var g, m_h, m_e;
};
Gate gate(const Bound& b, const Features& r, ad::Var ctx, const ModelConfig& cfg);

/// -(m_h gamma_h d(z_h, p_h,k)^2 + m_e gamma_e |z_e - p_e,k|^2): n x K.
ad::Var proto_logits(const Bound& b, const pm::Batch& z, const task::PrototypeBank& bank, const Gate& gt,
                     const ModelConfig& cfg);

/// W_c [sqrt(m_h) r_h; sqrt(m_e) r_e] + b_c: n x K.
ad::Var linear_logits(const Bound& b, const Features& r, const Gate& gt, const ModelConfig& cfg);

struct Hybrid {
  ad::Var logits;  // n x K
  ad::Var beta;    // n x 1 or 1 x 1
  Gate gate;
};
/// Gate recomputed at z, then beta * proto + (1 - beta) * linear.
Hybrid hybrid_logits(const Bound& b, const pm::Batch& z, const task::PrototypeBank& bank, ad::Var ctx,
                     const ModelConfig& cfg);

}  // namespace mcrfm::heads
