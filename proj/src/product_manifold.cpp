#include "mcrfm/product_manifold.hpp"

#include "mcrfm/error.hpp"

namespace mcrfm::pm {

namespace {

void require_compatible(const ProductState& a, const ProductState& b) {
  if (a.z_h.dim() != b.z_h.dim() || a.z_e.size() != b.z_e.size()) {
    throw InvalidArgument("product states differ in dimension");
  }
  if (!(a.z_h.curvature() == b.z_h.curvature())) throw InvalidArgument("product states differ in curvature");
}

}  // namespace

ProductState interpolate(const ProductState& z0, const ProductState& z1, double t) {
  require_compatible(z0, z1);
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("interpolate: t must lie in [0, 1]");
  geo::Vec ze(z0.z_e.size());
  for (std::size_t i = 0; i < ze.size(); ++i) ze[i] = (1.0 - t) * z0.z_e[i] + t * z1.z_e[i];
  return {geo::geodesic(z0.z_h, z1.z_h, t), std::move(ze)};
}

ProductVelocity target_velocity(const ProductState& zt, const ProductState& z1, double t, double eps_t) {
  require_compatible(zt, z1);
  if (!(t >= 0.0) || t >= 1.0 - eps_t) {
    throw InvalidArgument("target_velocity: t must lie in [0, 1 - eps_t)");
  }
  const double inv = 1.0 / (1.0 - t);
  geo::TangentVector xi_t = geo::log0(zt.z_h);
  const geo::TangentVector xi_1 = geo::log0(z1.z_h);
  ProductVelocity v{{geo::Vec(xi_t.coords.size())}, geo::Vec(zt.z_e.size())};
  for (std::size_t i = 0; i < xi_t.coords.size(); ++i) v.v_h.coords[i] = (xi_1.coords[i] - xi_t.coords[i]) * inv;
  for (std::size_t i = 0; i < zt.z_e.size(); ++i) v.v_e[i] = (z1.z_e[i] - zt.z_e[i]) * inv;
  return v;
}

double product_sq_dist(const ProductState& z, const ProductState& p, double gamma_h, double gamma_e,
                       double m_h, double m_e) {
  require_compatible(z, p);
  if (!(gamma_h > 0.0 && gamma_e > 0.0)) throw InvalidArgument("product_sq_dist: gammas must be positive");
  if (m_h < 0.0 || m_e < 0.0) throw InvalidArgument("product_sq_dist: multipliers must be non-negative");
  const double dh = geo::dist(z.z_h, p.z_h);
  double de2 = 0.0;
  for (std::size_t i = 0; i < z.z_e.size(); ++i) de2 += (z.z_e[i] - p.z_e[i]) * (z.z_e[i] - p.z_e[i]);
  return m_h * gamma_h * dh * dh + m_e * gamma_e * de2;
}

ad::Var geodesic(ad::Var z0, ad::Var z1, ad::Var t, double c, double eps) {
  ad::Var diff = ad::project_ball(ad::mobius_add_raw(ad::neg(z0), z1, c), c, eps);
  ad::Var scaled = ad::project_ball(ad::exp0(ad::mul(ad::log0(diff, c), t), c), c, eps);
  return ad::project_ball(ad::mobius_add_raw(z0, scaled, c), c, eps);
}

Batch interpolate(const Batch& z0, const Batch& z1, ad::Var t, double c, double eps) {
  Batch out;
  out.z_h = geodesic(z0.z_h, z1.z_h, t, c, eps);
  ad::Var one_minus_t = ad::add_scalar(ad::neg(t), 1.0);
  out.z_e = ad::add(ad::mul(z0.z_e, one_minus_t), ad::mul(z1.z_e, t));
  return out;
}

Velocity target_velocity(const Batch& zt, const Batch& z1, ad::Var t, double c) {
  ad::Var one_minus_t = ad::add_scalar(ad::neg(t), 1.0);
  Velocity v;
  v.v_h = ad::div(ad::sub(ad::log0(z1.z_h, c), ad::log0(zt.z_h, c)), one_minus_t);
  v.v_e = ad::div(ad::sub(z1.z_e, zt.z_e), one_minus_t);
  return v;
}

ad::Var sq_dist_rows(ad::Var x, ad::Var y, double c) {
  return ad::ball_sq_norm_dist(ad::mobius_add_raw(ad::neg(x), y, c), c);
}

}  // namespace mcrfm::pm
