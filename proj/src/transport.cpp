#include "mcrfm/transport.hpp"

#include <cmath>
#include <string>

#include "mcrfm/error.hpp"

namespace mcrfm::transport {

std::vector<double> boundary_gaps(const Matrix& z_h, double c) {
  const double sc = std::sqrt(c);
  std::vector<double> gaps(z_h.rows);
  for (std::size_t r = 0; r < z_h.rows; ++r) gaps[r] = 1.0 - sc * geo::row::norm(z_h.row(r));
  return gaps;
}

Result integrate(const pm::Batch& z0, const Field& field, double c, const SolverConfig& cfg) {
  if (cfg.nfe < 1) throw InvalidArgument("transport: nfe must be >= 1");
  ad::Tape& tape = *z0.z_h.tape;
  const std::size_t n = z0.z_h.rows();
  const double dt = 1.0 / static_cast<double>(cfg.nfe);
  Result out;
  out.state = z0;
  if (cfg.record_trajectory) out.gaps.push_back(boundary_gaps(z0.z_h.value(), c));
  for (int s = 0; s < cfg.nfe; ++s) {
    const Matrix t(n, 1, static_cast<double>(s) * dt);
    try {
      const pm::Velocity v = field(out.state, t);
      ad::Var dt_k = tape.constant(Matrix(1, 1, dt));
      pm::Batch next;
      next.z_e = ad::add(out.state.z_e, ad::mul(v.v_e, dt_k));
      ad::Var chart = ad::add(ad::log0(out.state.z_h, c), ad::mul(v.v_h, dt_k));
      next.z_h = ad::project_ball(ad::exp0(chart, c), c, cfg.eps_ball);
      for (double e : next.z_e.value().data) {
        if (!std::isfinite(e)) throw DivergenceError("non-finite Euclidean state");
      }
      out.state = next;
    } catch (const DivergenceError& e) {
      throw DivergenceError("transport diverged at step " + std::to_string(s) + ": " + e.what());
    }
    if (cfg.record_trajectory) out.gaps.push_back(boundary_gaps(out.state.z_h.value(), c));
  }
  return out;
}

}  // namespace mcrfm::transport
