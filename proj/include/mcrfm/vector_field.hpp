#pragma once

#include <vector>

#include "mcrfm/config.hpp"
#include "mcrfm/nn.hpp"
#include "mcrfm/product_manifold.hpp"

namespace mcrfm::field {

/// Interleaved (sin(w_j t), cos(w_j t)) for j < d_t/2, w_j geometric from 1
/// to omega_max. t: n x 1 -> n x d_t.
Matrix time_embed(const Matrix& t, int d_t, double omega_max);
std::vector<double> time_embed(double t, int d_t, double omega_max);

/// Shared trunk with x*sigmoid(x) activations and two zero-initialized
/// heads, so the untrained field is identically zero.
struct VectorFieldParams {
  std::vector<nn::Dense> trunk;
  nn::Dense head_h;
  nn::Dense head_e;

  static VectorFieldParams make(const ModelConfig& cfg, CounterRng& rng);
  void collect(nn::ParamList& out);
};

struct Bound {
  std::vector<nn::Dense::Bound> trunk;
  nn::Dense::Bound head_h, head_e;
};
Bound bind(ad::Tape& tape, VectorFieldParams& p);

/// Network input [log0(z_h); z_e; phi(t); c_S] -> (v_h, v_e) in chart coordinates.
/// t: n x 1 constant times; ctx: 1 x d_c.
pm::Velocity eval_field(const Bound& f, const pm::Batch& z, const Matrix& t, ad::Var ctx,
                        const ModelConfig& cfg);

}  // namespace mcrfm::field
