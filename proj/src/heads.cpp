#include "mcrfm/heads.hpp"

#include <cmath>

#include "mcrfm/error.hpp"

namespace mcrfm::heads {

namespace {

bool has_h(const ModelConfig& cfg) { return cfg.d_h > 0; }
bool has_e(const ModelConfig& cfg) { return cfg.d_e > 0; }

ad::Var constant(ad::Tape& tape, double v) { return tape.constant(Matrix(1, 1, v)); }

ad::Var concat_features(const Features& r, const ModelConfig& cfg, ad::Var scale_h, ad::Var scale_e) {
  std::vector<ad::Var> parts;
  if (has_h(cfg)) parts.push_back(scale_h.tape ? ad::mul(r.r_h, scale_h) : r.r_h);
  if (has_e(cfg)) parts.push_back(scale_e.tape ? ad::mul(r.r_e, scale_e) : r.r_e);
  return parts.size() == 1 ? parts[0] : ad::concat_cols(parts);
}

ad::Var mix(const MixerBound& m, MixMode mode, const Features& r, ad::Var ctx, const ModelConfig& cfg) {
  if (mode == MixMode::kGlobal) return ad::sigmoid(m.rho);
  ad::Var delta = m.out(ad::silu(m.hidden(concat_features(r, cfg, {}, {}))));
  return ad::sigmoid(ad::add(ad::add(delta, m.rho), m.context(ctx)));
}

}  // namespace

MixerParams MixerParams::make(const std::string& name, const ModelConfig& cfg, CounterRng& rng) {
  const auto m = static_cast<std::size_t>(cfg.d_h + cfg.d_e);
  const auto hid = static_cast<std::size_t>(cfg.mix_hidden);
  MixerParams p;
  p.rho = nn::constant_param(name + ".rho", 1, 1, 0.0);
  p.hidden = nn::Dense::make(name + ".hidden", m, hid, rng);
  p.out = nn::Dense::make(name + ".out", hid, 1, rng, true);
  p.context = nn::Dense::make(name + ".context", static_cast<std::size_t>(cfg.d_c), 1, rng, true);
  return p;
}

void MixerParams::collect(nn::ParamList& out) {
  out.push_back(&rho);
  hidden.collect(out);
  this->out.collect(out);
  context.collect(out);
}

double initial_gamma_h() { return 1.0; }
double initial_gamma_e(int d_e) { return d_e > 0 ? 1.0 / static_cast<double>(d_e) : 1.0; }

HeadParams HeadParams::make(const ModelConfig& cfg, std::size_t num_classes, CounterRng& rng) {
  if (num_classes < 2) throw InvalidArgument("heads: need at least two classes");
  const auto dh = static_cast<std::size_t>(cfg.d_h);
  const auto de = static_cast<std::size_t>(cfg.d_e);
  HeadParams p;
  p.ln_h_gain = nn::constant_param("head.ln_h_gain", 1, dh, 1.0);
  p.ln_h_bias = nn::constant_param("head.ln_h_bias", 1, dh, 0.0);
  p.ln_e_gain = nn::constant_param("head.ln_e_gain", 1, de, 1.0);
  p.ln_e_bias = nn::constant_param("head.ln_e_bias", 1, de, 0.0);
  p.gate = MixerParams::make("gate", cfg, rng);
  p.beta = MixerParams::make("beta", cfg, rng);
  p.rho_h = nn::constant_param("head.rho_h", 1, 1, nn::softplus_inverse(initial_gamma_h()));
  p.rho_e = nn::constant_param("head.rho_e", 1, 1, nn::softplus_inverse(initial_gamma_e(cfg.d_e)));
  p.classifier = nn::Dense::make("head.classifier", dh + de, num_classes, rng, true);
  return p;
}

void HeadParams::collect(nn::ParamList& out) {
  out.push_back(&ln_h_gain);
  out.push_back(&ln_h_bias);
  out.push_back(&ln_e_gain);
  out.push_back(&ln_e_bias);
  gate.collect(out);
  beta.collect(out);
  out.push_back(&rho_h);
  out.push_back(&rho_e);
  classifier.collect(out);
}

Bound bind(ad::Tape& tape, HeadParams& p) {
  auto mixer = [&](MixerParams& m) {
    return MixerBound{tape.param(m.rho), m.hidden.bind(tape), m.out.bind(tape), m.context.bind(tape)};
  };
  Bound b;
  b.ln_h_gain = tape.param(p.ln_h_gain);
  b.ln_h_bias = tape.param(p.ln_h_bias);
  b.ln_e_gain = tape.param(p.ln_e_gain);
  b.ln_e_bias = tape.param(p.ln_e_bias);
  b.gate = mixer(p.gate);
  b.beta = mixer(p.beta);
  b.rho_h = tape.param(p.rho_h);
  b.rho_e = tape.param(p.rho_e);
  b.classifier = p.classifier.bind(tape);
  return b;
}

Features features(const Bound& b, const pm::Batch& z, const ModelConfig& cfg) {
  Features r;
  if (has_h(cfg)) {
    r.r_h = ad::add(ad::mul(ad::layer_norm(ad::log0(z.z_h, cfg.curvature)), b.ln_h_gain), b.ln_h_bias);
  }
  if (has_e(cfg)) r.r_e = ad::add(ad::mul(ad::layer_norm(z.z_e), b.ln_e_gain), b.ln_e_bias);
  return r;
}

Gate gate(const Bound& b, const Features& r, ad::Var ctx, const ModelConfig& cfg) {
  ad::Tape& tape = *ctx.tape;
  Gate out;
  if (cfg.geometry == Geometry::kEuclidean) {
    out.g = constant(tape, 0.0);
  } else if (cfg.geometry == Geometry::kHyperbolic) {
    out.g = constant(tape, 1.0);
  } else {
    out.g = mix(b.gate, cfg.gate, r, ctx, cfg);
  }
  out.m_h = ad::scale(out.g, 2.0);
  out.m_e = ad::add_scalar(ad::scale(out.g, -2.0), 2.0);
  return out;
}

ad::Var proto_logits(const Bound& b, const pm::Batch& z, const task::PrototypeBank& bank, const Gate& gt,
                     const ModelConfig& cfg) {
  const std::size_t n = has_h(cfg) ? z.z_h.rows() : z.z_e.rows();
  const std::size_t k = bank.num_classes;
  std::vector<std::size_t> zi(n * k), pi(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      zi[i * k + j] = i;
      pi[i * k + j] = j;
    }
  }
  std::vector<ad::Var> terms;
  if (has_h(cfg)) {
    ad::Var d2 = pm::sq_dist_rows(ad::gather_rows(z.z_h, zi), ad::gather_rows(bank.p_h, pi), cfg.curvature);
    terms.push_back(ad::mul(ad::mul(ad::reshape(d2, n, k), gt.m_h), ad::softplus(b.rho_h)));
  }
  if (has_e(cfg)) {
    ad::Var diff = ad::sub(ad::gather_rows(z.z_e, zi), ad::gather_rows(bank.p_e, pi));
    ad::Var d2 = ad::row_sum(ad::square(diff));
    terms.push_back(ad::mul(ad::mul(ad::reshape(d2, n, k), gt.m_e), ad::softplus(b.rho_e)));
  }
  ad::Var total = terms.size() == 1 ? terms[0] : ad::add(terms[0], terms[1]);
  return ad::neg(total);
}

ad::Var linear_logits(const Bound& b, const Features& r, const Gate& gt, const ModelConfig& cfg) {
  return b.classifier(concat_features(r, cfg, ad::sqrt_safe(gt.m_h), ad::sqrt_safe(gt.m_e)));
}

Hybrid hybrid_logits(const Bound& b, const pm::Batch& z, const task::PrototypeBank& bank, ad::Var ctx,
                     const ModelConfig& cfg) {
  ad::Tape& tape = *ctx.tape;
  const Features r = features(b, z, cfg);
  Hybrid out;
  out.gate = gate(b, r, ctx, cfg);
  switch (cfg.head) {
    case HeadMode::kLinear:
      out.beta = constant(tape, 0.0);
      out.logits = linear_logits(b, r, out.gate, cfg);
      break;
    case HeadMode::kPrototype:
      out.beta = constant(tape, 1.0);
      out.logits = proto_logits(b, z, bank, out.gate, cfg);
      break;
    case HeadMode::kHybrid: {
      out.beta = mix(b.beta, cfg.beta, r, ctx, cfg);
      ad::Var proto = proto_logits(b, z, bank, out.gate, cfg);
      ad::Var lin = linear_logits(b, r, out.gate, cfg);
      out.logits = ad::add(ad::mul(proto, out.beta), ad::mul(lin, ad::add_scalar(ad::neg(out.beta), 1.0)));
      break;
    }
  }
  return out;
}

}  // namespace mcrfm::heads
