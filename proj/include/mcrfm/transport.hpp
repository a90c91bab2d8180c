#pragma once

#include <functional>
#include <vector>

#include "mcrfm/product_manifold.hpp"

namespace mcrfm::transport {

struct SolverConfig {
  int nfe = 3;
  double eps_ball = 1e-5;
  bool record_trajectory = false;
};

/// Velocity callback: (state, times n x 1) -> chart velocity.
using Field = std::function<pm::Velocity(const pm::Batch&, const Matrix&)>;

struct Result {
  pm::Batch state;
  /// Boundary gaps 1 - sqrt(c)|z_h| per step (nfe + 1 entries incl. the start), filled when recording.
  std::vector<std::vector<double>> gaps;
};

/// Fixed-step Euler from t = 0 to 1 with dt = 1/nfe:
///   z_e <- z_e + dt v_e
///   z_h <- Pi_eps(exp0(log0(z_h) + dt v_h))
/// Throws DivergenceError naming the step if the state becomes non-finite.
Result integrate(const pm::Batch& z0, const Field& field, double c, const SolverConfig& cfg);

/// Boundary gaps of every row of a ball batch.
std::vector<double> boundary_gaps(const Matrix& z_h, double c);

}  // namespace mcrfm::transport
