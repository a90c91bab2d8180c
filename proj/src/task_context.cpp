#include "mcrfm/task_context.hpp"

#include <cmath>
#include <string>

#include "mcrfm/error.hpp"

namespace mcrfm::task {

PrototypeBank build_prototypes(ad::Var u_h, ad::Var u_e, const std::vector<int>& labels,
                               std::size_t num_classes, double tau, double c, double eps_ball) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("build_prototypes: tau must lie in [0, 1]");
  if (labels.size() != u_h.rows() || labels.size() != u_e.rows()) {
    throw InvalidArgument("build_prototypes: label count does not match bottleneck rows");
  }
  std::vector<std::size_t> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidArgument("build_prototypes: label out of range");
    }
    counts[static_cast<std::size_t>(y)]++;
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (counts[k] == 0) throw InvalidEpisode("build_prototypes: class " + std::to_string(k) + " has no support samples");
  }
  // Shrunken mean as a single averaging matrix:
  // A[k, i] = (1 - tau) [y_i = k] / |S_k| + tau / N.
  ad::Tape& tape = *u_h.tape;
  const std::size_t n = labels.size();
  Matrix avg(num_classes, n, tau / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    avg(k, i) += (1.0 - tau) / static_cast<double>(counts[k]);
  }
  ad::Var a = tape.constant(std::move(avg));
  PrototypeBank bank;
  bank.num_classes = num_classes;
  bank.tau = tau;
  bank.p_h = ad::project_ball(ad::exp0(ad::matmul(a, u_h), c), c, eps_ball);
  bank.p_e = ad::matmul(a, u_e);
  return bank;
}

PrototypeBank detach(const PrototypeBank& bank) {
  PrototypeBank out = bank;
  out.p_h = ad::stop_gradient(bank.p_h);
  out.p_e = ad::stop_gradient(bank.p_e);
  return out;
}

EncoderParams EncoderParams::make(const ModelConfig& cfg, CounterRng& rng) {
  const auto m = static_cast<std::size_t>(cfg.d_h + cfg.d_e);
  const auto td = static_cast<std::size_t>(cfg.token_dim);
  EncoderParams p;
  p.token = nn::Dense::make("encoder.token", m, td, rng);
  p.key = nn::Dense::make("encoder.key", td, td, rng, false, false);
  p.value = nn::Dense::make("encoder.value", td, td, rng, false, false);
  Matrix q(1, td);
  const double bound = 1.0 / std::sqrt(static_cast<double>(td));
  for (double& v : q.data) v = rng.uniform(-bound, bound);
  p.query = ad::ParamTensor("encoder.query", std::move(q));
  p.stats = nn::Dense::make("encoder.stats", kNumStats, td, rng);
  p.output = nn::Dense::make("encoder.output", 2 * td, static_cast<std::size_t>(cfg.d_c), rng);
  return p;
}

void EncoderParams::collect(nn::ParamList& out) {
  token.collect(out);
  key.collect(out);
  value.collect(out);
  out.push_back(&query);
  stats.collect(out);
  output.collect(out);
}

EncoderBound bind(ad::Tape& tape, EncoderParams& p) {
  EncoderBound b;
  b.token = p.token.bind(tape);
  b.key = p.key.bind(tape);
  b.value = p.value.bind(tape);
  b.query = tape.param(p.query);
  b.stats = p.stats.bind(tape);
  b.output = p.output.bind(tape);
  return b;
}

namespace {

ad::Var row_norms(ad::Var x) { return ad::sqrt_safe(ad::row_sum(ad::square(x))); }

}  // namespace

ad::Var context_stats(const PrototypeBank& bank, double c, int k_max) {
  ad::Tape& tape = *bank.p_h.tape;
  const std::size_t k = bank.num_classes;
  ad::Var xi_h = ad::log0(bank.p_h, c);
  ad::Var norm_h = row_norms(xi_h);
  ad::Var norm_e = row_norms(bank.p_e);
  const ad::Var tok_parts[] = {xi_h, bank.p_e};
  ad::Var tokens = ad::concat_cols(tok_parts);

  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      left.push_back(i);
      right.push_back(j);
    }
  }
  ad::Var pair_mean = tape.constant(Matrix(1, 1));
  if (!left.empty()) {
    ad::Var diff = ad::sub(ad::gather_rows(tokens, std::move(left)), ad::gather_rows(tokens, std::move(right)));
    pair_mean = ad::mean_all(row_norms(diff));
  }
  ad::Var k_frac = tape.constant(Matrix(1, 1, static_cast<double>(k) / static_cast<double>(k_max)));
  const ad::Var parts[] = {ad::mean_all(norm_h), ad::max_all(norm_h), ad::mean_all(norm_e),
                           ad::max_all(norm_e), pair_mean,           k_frac};
  return ad::concat_cols(parts);
}

ad::Var encode_context(const PrototypeBank& bank, const EncoderBound& enc, const ModelConfig& cfg) {
  ad::Tape& tape = *bank.p_h.tape;
  if (!cfg.use_context) return tape.constant(Matrix(1, static_cast<std::size_t>(cfg.d_c)));
  const double c = cfg.curvature;
  const ad::Var tok_parts[] = {ad::log0(bank.p_h, c), bank.p_e};
  ad::Var tokens = ad::silu(enc.token(ad::concat_cols(tok_parts)));
  ad::Var keys = enc.key(tokens);
  ad::Var values = enc.value(tokens);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.token_dim));
  ad::Var scores = ad::scale(ad::linear(enc.query, keys), inv_sqrt);  // 1 x K
  ad::Var pooled = ad::matmul(ad::softmax_rows(scores), values);     // 1 x token_dim
  ad::Var stats = ad::silu(enc.stats(context_stats(bank, c, cfg.k_max)));
  const ad::Var parts[] = {pooled, stats};
  return enc.output(ad::concat_cols(parts));
}

}  // namespace mcrfm::task
