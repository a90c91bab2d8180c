#pragma once

// States on D_c^{d_h} x R^{d_e}: interpolation paths, origin-chart target
// velocities and calibrated product distances. Value-level functions for the
// library surface, and batched differentiable counterparts used in training.

#include "mcrfm/autodiff.hpp"
#include "mcrfm/geometry.hpp"

namespace mcrfm::pm {

inline constexpr double kTimeEps = 0.01;

struct ProductState {
  geo::BallPoint z_h;
  geo::Vec z_e;
};

struct ProductVelocity {
  geo::TangentVector v_h;
  geo::Vec v_e;
};

/// (geodesic(z_h0, z_h1, t), (1 - t) z_e0 + t z_e1).
ProductState interpolate(const ProductState& z0, const ProductState& z1, double t);

/// u_h* = (log0(z_h1) - log0(z_ht)) / (1 - t), u_e* = (z_e1 - z_et) / (1 - t).
/// Throws InvalidArgument for t >= 1 - eps_t.
ProductVelocity target_velocity(const ProductState& zt, const ProductState& z1, double t,
                                double eps_t = kTimeEps);

/// m_h gamma_h dist(z_h, p_h)^2 + m_e gamma_e |z_e - p_e|^2.
double product_sq_dist(const ProductState& z, const ProductState& p, double gamma_h, double gamma_e,
                       double m_h, double m_e);

// Batched (one sample per row) differentiable forms. `t` is n x 1.
struct Batch {
  ad::Var z_h;
  ad::Var z_e;
};

ad::Var geodesic(ad::Var z0, ad::Var z1, ad::Var t, double c, double eps_ball);
Batch interpolate(const Batch& z0, const Batch& z1, ad::Var t, double c, double eps_ball);
struct Velocity {
  ad::Var v_h;
  ad::Var v_e;
};
Velocity target_velocity(const Batch& zt, const Batch& z1, ad::Var t, double c);

/// Squared Poincare distance between matching rows of x and y: n x 1.
ad::Var sq_dist_rows(ad::Var x, ad::Var y, double c);

}  // namespace mcrfm::pm
