#pragma once

#include <vector>

#include "mcrfm/config.hpp"
#include "mcrfm/nn.hpp"

namespace mcrfm::task {

/// Per-class targets on the product manifold (K rows each).
struct PrototypeBank {
  ad::Var p_h;  // K x d_h, interior ball points
  ad::Var p_e;  // K x d_e
  std::size_t num_classes = 0;
  double tau = 0.0;
};

/// Shrunken class means of the bottleneck vectors, lifted with exp0.
/// labels[i] in [0, K); every class needs at least one row.
PrototypeBank build_prototypes(ad::Var u_h, ad::Var u_e, const std::vector<int>& labels,
                               std::size_t num_classes, double tau, double c, double eps_ball);

/// Returns a copy of the bank whose prototypes are constants on the tape.
PrototypeBank detach(const PrototypeBank& bank);

/// Task encoder: token projection, single-head attention pooling with a
/// learned query, and a summary-statistics projection.
struct EncoderParams {
  nn::Dense token;   // m -> token_dim
  nn::Dense key;     // token_dim -> token_dim
  nn::Dense value;   // token_dim -> token_dim
  ad::ParamTensor query;  // 1 x token_dim
  nn::Dense stats;   // kNumStats -> token_dim
  nn::Dense output;  // 2 token_dim -> d_c

  static EncoderParams make(const ModelConfig& cfg, CounterRng& rng);
  void collect(nn::ParamList& out);
};

struct EncoderBound {
  nn::Dense::Bound token, key, value, stats, output;
  ad::Var query;
};
EncoderBound bind(ad::Tape& tape, EncoderParams& p);

/// mean/max chart norm per branch, mean pairwise token distance, K / K_max.
inline constexpr std::size_t kNumStats = 6;

/// 1 x kNumStats statistics vector of the prototype tokens.
ad::Var context_stats(const PrototypeBank& bank, double c, int k_max);

/// c_S: 1 x d_c. A zero constant when the context is disabled.
ad::Var encode_context(const PrototypeBank& bank, const EncoderBound& enc, const ModelConfig& cfg);

}  // namespace mcrfm::task
