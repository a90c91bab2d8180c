#pragma once

// Poincare-ball primitives in the origin chart.
//
// Conventions (curvature -c, c > 0):
//   exp0(u) = tanh(sqrt(c)|u|) u / (sqrt(c)|u|)
//   log0(x) = artanh(sqrt(c)|x|) x / (sqrt(c)|x|)
//   dist(x, y) = (2 / sqrt(c)) artanh(sqrt(c) |(-x) (+) y|)
// so dist(0, exp0(u)) = 2|u|. Every function returning a BallPoint leaves
// sqrt(c)|x| <= 1 - eps_ball.

#include <span>
#include <vector>

namespace mcrfm::geo {

inline constexpr double kBallEps = 1e-5;
// Below this value of sqrt(c)|u| the maps are replaced by the identity.
inline constexpr double kNearOrigin = 1e-12;
inline constexpr double kNormGuard = 1e-15;

class Curvature {
 public:
  explicit Curvature(double c);
  double value() const { return c_; }
  double sqrt_c() const { return sqrt_c_; }
  bool operator==(const Curvature&) const = default;

 private:
  double c_;
  double sqrt_c_;
};

using Vec = std::vector<double>;

struct TangentVector {
  Vec coords;
};

class BallPoint {
 public:
  /// Validates sqrt(c)|coords| <= 1 - eps_ball; throws DomainError otherwise.
  BallPoint(Vec coords, Curvature c);
  static BallPoint origin(std::size_t dim, Curvature c);

  const Vec& coords() const { return coords_; }
  Curvature curvature() const { return c_; }
  std::size_t dim() const { return coords_.size(); }
  /// 1 - sqrt(c)|x|.
  double boundary_gap() const;

 private:
  struct Unchecked {};
  BallPoint(Vec coords, Curvature c, Unchecked) : coords_(std::move(coords)), c_(c) {}
  friend BallPoint project_interior(std::span<const double>, Curvature, double);

  Vec coords_;
  Curvature c_;
};

// Row-level kernels on raw spans. `out` may alias `in` only where noted.
// These are shared by the value API below, the batched kernels, and the
// differentiable ops, so every route evaluates the same floating-point code.
namespace row {
double norm(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
void exp0(std::span<const double> u, double sqrt_c, std::span<double> out);  // may alias
void log0(std::span<const double> x, double sqrt_c, std::span<double> out);  // may alias
/// Returns true when the radial rescale was active.
bool project(std::span<const double> x, double sqrt_c, double eps, std::span<double> out);  // may alias
/// Unprojected Mobius addition; out must not alias x or y.
void mobius_add(std::span<const double> x, std::span<const double> y, double c,
                std::span<double> out);
/// artanh with the argument clamped just below 1.
double artanh_safe(double s);
}  // namespace row

/// Throws InvalidArgument on non-finite input.
BallPoint exp0(const TangentVector& u, Curvature c);
/// Throws DomainError if sqrt(c)|x| >= 1.
TangentVector log0(const BallPoint& x);
BallPoint mobius_neg(const BallPoint& x);
BallPoint mobius_add(const BallPoint& x, const BallPoint& y);
BallPoint mobius_scale(double t, const BallPoint& x);
/// Geodesic x -> y on the ball; t in [0, 1].
BallPoint geodesic(const BallPoint& z0, const BallPoint& z1, double t);
double dist(const BallPoint& x, const BallPoint& y);
/// Radial projection onto sqrt(c)|x| <= 1 - eps. Idempotent bit for bit.
BallPoint project_interior(std::span<const double> x, Curvature c, double eps = kBallEps);

}  // namespace mcrfm::geo
