#include "mcrfm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mcrfm/error.hpp"

namespace mcrfm::geo {

namespace {

void require_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + ": non-finite coordinate");
  }
}

void require_compatible(const BallPoint& x, const BallPoint& y) {
  if (x.dim() != y.dim()) throw InvalidArgument("ball points differ in dimension");
  if (!(x.curvature() == y.curvature())) throw InvalidArgument("ball points differ in curvature");
}

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("curvature must be positive and finite");
}

BallPoint::BallPoint(Vec coords, Curvature c) : coords_(std::move(coords)), c_(c) {
  require_finite(coords_, "BallPoint");
  if (c_.sqrt_c() * row::norm(coords_) > 1.0 - kBallEps) {
    throw DomainError("BallPoint outside the interior ball");
  }
}

BallPoint BallPoint::origin(std::size_t dim, Curvature c) { return {Vec(dim, 0.0), c, Unchecked{}}; }

double BallPoint::boundary_gap() const { return 1.0 - c_.sqrt_c() * row::norm(coords_); }

namespace row {

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double artanh_safe(double s) {
  constexpr double kMax = 1.0 - std::numeric_limits<double>::epsilon();
  return std::atanh(std::min(s, kMax));
}

void exp0(std::span<const double> u, double sqrt_c, std::span<double> out) {
  const double n = norm(u);
  const double s = sqrt_c * n;
  if (s < kNearOrigin) {
    std::copy(u.begin(), u.end(), out.begin());
    return;
  }
  const double f = std::tanh(s) / (sqrt_c * (n + kNormGuard));
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = f * u[i];
}

void log0(std::span<const double> x, double sqrt_c, std::span<double> out) {
  const double n = norm(x);
  const double s = sqrt_c * n;
  if (s >= 1.0) throw DomainError("log0: point on or outside the ball boundary");
  if (s < kNearOrigin) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  const double f = std::atanh(s) / (sqrt_c * (n + kNormGuard));
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f * x[i];
}

bool project(std::span<const double> x, double sqrt_c, double eps, std::span<double> out) {
  const double limit = 1.0 - eps;
  const double n = norm(x);
  if (sqrt_c * n <= limit) {
    std::copy(x.begin(), x.end(), out.begin());
    return false;
  }
  double scale = limit / (sqrt_c * n);
  for (;;) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * x[i];
    // Rounding can leave the rescaled norm an ulp above the limit; shrink
    // until a second projection would be the identity.
    if (sqrt_c * norm(std::span<const double>(out.data(), out.size())) <= limit) break;
    scale *= 1.0 - 4.0 * std::numeric_limits<double>::epsilon();
  }
  return true;
}

void mobius_add(std::span<const double> x, std::span<const double> y, double c,
                std::span<double> out) {
  const double xy = dot(x, y);
  const double x2 = dot(x, x);
  const double y2 = dot(y, y);
  const double a = 1.0 + 2.0 * c * xy + c * y2;
  const double b = 1.0 - c * x2;
  const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / den;
}

}  // namespace row

BallPoint project_interior(std::span<const double> x, Curvature c, double eps) {
  require_finite(x, "project_interior");
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("project_interior: eps must lie in (0, 1)");
  Vec out(x.size());
  row::project(x, c.sqrt_c(), eps, out);
  return {std::move(out), c, BallPoint::Unchecked{}};
}

BallPoint exp0(const TangentVector& u, Curvature c) {
  require_finite(u.coords, "exp0");
  Vec out(u.coords.size());
  row::exp0(u.coords, c.sqrt_c(), out);
  return project_interior(out, c);
}

TangentVector log0(const BallPoint& x) {
  TangentVector out{Vec(x.dim())};
  row::log0(x.coords(), x.curvature().sqrt_c(), out.coords);
  return out;
}

BallPoint mobius_neg(const BallPoint& x) {
  Vec v = x.coords();
  for (double& e : v) e = -e;
  return project_interior(v, x.curvature());
}

BallPoint mobius_add(const BallPoint& x, const BallPoint& y) {
  require_compatible(x, y);
  Vec out(x.dim());
  row::mobius_add(x.coords(), y.coords(), x.curvature().value(), out);
  return project_interior(out, x.curvature());
}

BallPoint mobius_scale(double t, const BallPoint& x) {
  if (!std::isfinite(t)) throw InvalidArgument("mobius_scale: non-finite scalar");
  // t (x) x = exp0(t log0(x)).
  TangentVector u = log0(x);
  for (double& e : u.coords) e *= t;
  return exp0(u, x.curvature());
}

BallPoint geodesic(const BallPoint& z0, const BallPoint& z1, double t) {
  require_compatible(z0, z1);
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("geodesic: t must lie in [0, 1]");
  if (t == 0.0) return z0;
  if (t == 1.0) return z1;
  return mobius_add(z0, mobius_scale(t, mobius_add(mobius_neg(z0), z1)));
}

double dist(const BallPoint& x, const BallPoint& y) {
  require_compatible(x, y);
  // |(-x) (+) y| = |x - y| / sqrt((1 - c|x|^2)(1 - c|y|^2) + c|x - y|^2), exactly symmetric in x and y.
  const double c = x.curvature().value();
  const Vec& a = x.coords();
  const Vec& b = y.coords();
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  const double na = row::dot(a, a), nb = row::dot(b, b);
  const double den = (1.0 - c * na) * (1.0 - c * nb) + c * d2;
  const double sc = x.curvature().sqrt_c();
  return 2.0 / sc * row::artanh_safe(sc * std::sqrt(d2 / den));
}

}  // namespace mcrfm::geo
