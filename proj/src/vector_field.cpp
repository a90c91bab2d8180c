#include "mcrfm/vector_field.hpp"

#include <cmath>
#include <string>

#include "mcrfm/error.hpp"

namespace mcrfm::field {

namespace {

double omega(int j, int pairs, double omega_max) {
  if (pairs <= 1) return 1.0;
  return std::pow(omega_max, static_cast<double>(j) / static_cast<double>(pairs - 1));
}

}  // namespace

std::vector<double> time_embed(double t, int d_t, double omega_max) {
  const int pairs = d_t / 2;
  std::vector<double> out(static_cast<std::size_t>(d_t));
  for (int j = 0; j < pairs; ++j) {
    const double w = omega(j, pairs, omega_max);
    out[static_cast<std::size_t>(2 * j)] = std::sin(w * t);
    out[static_cast<std::size_t>(2 * j + 1)] = std::cos(w * t);
  }
  return out;
}

Matrix time_embed(const Matrix& t, int d_t, double omega_max) {
  Matrix out(t.rows, static_cast<std::size_t>(d_t));
  for (std::size_t r = 0; r < t.rows; ++r) {
    const std::vector<double> e = time_embed(t.data[r], d_t, omega_max);
    std::copy(e.begin(), e.end(), out.row(r).begin());
  }
  return out;
}

VectorFieldParams VectorFieldParams::make(const ModelConfig& cfg, CounterRng& rng) {
  VectorFieldParams p;
  std::size_t in = static_cast<std::size_t>(cfg.d_h + cfg.d_e + cfg.d_t + cfg.d_c);
  const auto w = static_cast<std::size_t>(cfg.field_width);
  for (int l = 0; l < cfg.field_layers; ++l) {
    p.trunk.push_back(nn::Dense::make("field.trunk" + std::to_string(l), in, w, rng));
    in = w;
  }
  p.head_h = nn::Dense::make("field.head_h", w, static_cast<std::size_t>(cfg.d_h), rng, true);
  p.head_e = nn::Dense::make("field.head_e", w, static_cast<std::size_t>(cfg.d_e), rng, true);
  return p;
}

void VectorFieldParams::collect(nn::ParamList& out) {
  for (nn::Dense& d : trunk) d.collect(out);
  head_h.collect(out);
  head_e.collect(out);
}

Bound bind(ad::Tape& tape, VectorFieldParams& p) {
  Bound b;
  for (nn::Dense& d : p.trunk) b.trunk.push_back(d.bind(tape));
  b.head_h = p.head_h.bind(tape);
  b.head_e = p.head_e.bind(tape);
  return b;
}

pm::Velocity eval_field(const Bound& f, const pm::Batch& z, const Matrix& t, ad::Var ctx,
                        const ModelConfig& cfg) {
  const std::size_t n = z.z_h.rows();
  if (z.z_h.cols() != static_cast<std::size_t>(cfg.d_h) || z.z_e.cols() != static_cast<std::size_t>(cfg.d_e) ||
      z.z_e.rows() != n || t.rows != n || t.cols != 1) {
    throw InvalidArgument("eval_field: state/time dimension mismatch");
  }
  if (ctx.rows() != 1 || ctx.cols() != static_cast<std::size_t>(cfg.d_c)) {
    throw InvalidArgument("eval_field: context must be 1 x d_c");
  }
  ad::Tape& tape = *z.z_h.tape;
  const ad::Var parts[] = {ad::log0(z.z_h, cfg.curvature), z.z_e,
                           tape.constant(time_embed(t, cfg.d_t, cfg.omega_max)),
                           ad::gather_rows(ctx, std::vector<std::size_t>(n, 0))};
  ad::Var h = ad::concat_cols(parts);
  for (const nn::Dense::Bound& layer : f.trunk) h = ad::silu(layer(h));
  return {f.head_h(h), f.head_e(h)};
}

}  // namespace mcrfm::field
