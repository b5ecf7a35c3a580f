#pragma once
// Hyperboloid (Lorentz) model of hyperbolic space with curvature -1.
//
// Points live on the upper sheet {x in R^{n+1} : <x,x>_l = -1, x_0 > 0} where
// <x,y>_l = -x_0 y_0 + sum_i x_i y_i. Coordinate 0 is the time-like axis.
// Everything here is a pure function on double-precision vectors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hyperdet/errors.hpp"

namespace hyperdet {

using Vector = std::vector<double>;

inline constexpr double kManifoldTolerance = 1e-9;
inline constexpr double kTangentTolerance = 1e-8;

namespace detail {

inline void require_same_size(std::span<const double> a, std::span<const double> b,
                              const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
  }
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline double euclidean_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// sinh(t)/t with the removable singularity at 0.
inline double sinhc(double t) {
  if (std::abs(t) < 1e-6) return 1.0 + t * t / 6.0;
  return std::sinh(t) / t;
}

}  // namespace detail

inline double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  detail::require_same_size(x, y, "lorentz_inner");
  if (x.size() < 2) throw DimensionError("lorentz_inner: need at least 2 coordinates");
  double s = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// |<p,p>_l + 1|. Absolute, so it grows with x_0^2 through rounding alone.
inline double manifold_violation(std::span<const double> p) {
  return std::abs(lorentz_inner(p, p) + 1.0);
}

/// A point on the upper hyperboloid sheet. Construction validates the manifold
/// constraint, so every HyperboloidPoint in circulation is on the manifold.
class HyperboloidPoint {
 public:
  /// Validates `coords`; throws ContractError if it is off the manifold.
  /// The tolerance is scaled by max(1, x_0^2) because rounding in <p,p>_l is
  /// proportional to the magnitude of the coordinates.
  static HyperboloidPoint from_coords(Vector coords) {
    if (coords.size() < 2) throw DimensionError("HyperboloidPoint: need n+1 >= 2 coordinates");
    if (!detail::all_finite(coords)) throw ContractError("HyperboloidPoint: non-finite coordinate");
    if (!(coords[0] > 0.0)) throw ContractError("HyperboloidPoint: x_0 must be positive");
    const double scale = std::max(1.0, coords[0] * coords[0]);
    if (manifold_violation(coords) > kManifoldTolerance * scale) {
      throw ContractError("HyperboloidPoint: <x,x>_l != -1 (violation " +
                          std::to_string(manifold_violation(coords)) + ")");
    }
    return HyperboloidPoint(std::move(coords));
  }

  static HyperboloidPoint origin(std::size_t n) {
    Vector c(n + 1, 0.0);
    c[0] = 1.0;
    return HyperboloidPoint(std::move(c));
  }

  /// Intrinsic dimension n.
  std::size_t dim() const { return coords_.size() - 1; }
  std::size_t ambient_dim() const { return coords_.size(); }
  std::span<const double> coords() const { return coords_; }
  std::span<const double> spatial() const { return std::span<const double>(coords_).subspan(1); }
  double operator[](std::size_t i) const { return coords_[i]; }
  double time() const { return coords_[0]; }

  operator std::span<const double>() const { return coords_; }

  friend bool operator==(const HyperboloidPoint&, const HyperboloidPoint&) = default;

 private:
  explicit HyperboloidPoint(Vector coords) : coords_(std::move(coords)) {}
  friend HyperboloidPoint project_to_manifold(std::span<const double> raw);

  Vector coords_;
};

/// A vector in the tangent space of some base point, in ambient coordinates.
/// The base point is supplied by the caller of the operation that consumes it.
struct TangentVector {
  Vector components;

  std::size_t size() const { return components.size(); }
  operator std::span<const double>() const { return components; }
  friend bool operator==(const TangentVector&, const TangentVector&) = default;
};

/// Keeps the spatial coordinates and recomputes x_0 = sqrt(1 + |spatial|^2).
inline HyperboloidPoint project_to_manifold(std::span<const double> raw) {
  if (raw.size() < 2) throw DimensionError("project_to_manifold: need n+1 >= 2 coordinates");
  Vector c(raw.begin(), raw.end());
  double s = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) s += c[i] * c[i];
  if (!std::isfinite(s)) throw ContractError("project_to_manifold: non-finite spatial part");
  c[0] = std::sqrt(1.0 + s);
  return HyperboloidPoint(std::move(c));
}

/// Exponential map at the origin for spatial tangent coordinates v in R^n:
/// (cosh|v|, sinh|v| v/|v|).
inline HyperboloidPoint exp_map_origin(std::span<const double> v) {
  if (v.empty()) throw DimensionError("exp_map_origin: empty vector");
  if (!detail::all_finite(v)) throw ContractError("exp_map_origin: non-finite input");
  const double r = detail::euclidean_norm(v);
  Vector c(v.size() + 1, 0.0);
  const double f = detail::sinhc(r);
  for (std::size_t i = 0; i < v.size(); ++i) c[i + 1] = f * v[i];
  // x_0 is recomputed from the spatial part; equals cosh(r) analytically.
  return project_to_manifold(c);
}

/// Ambient-coordinate tangency test at x, relative to the operand magnitudes.
inline bool is_tangent(const HyperboloidPoint& x, std::span<const double> u,
                       double tol = kTangentTolerance) {
  const double scale = std::max(1.0, detail::euclidean_norm(x.coords()) * detail::euclidean_norm(u));
  return std::abs(lorentz_inner(x.coords(), u)) <= tol * scale;
}

/// Lorentzian norm sqrt(<u,u>_l) of a tangent vector (clamped at 0).
inline double lorentz_norm(std::span<const double> u) {
  return std::sqrt(std::max(0.0, lorentz_inner(u, u)));
}

/// Orthogonal projection of an ambient vector onto T_x H^n: g + <x,g>_l x.
inline TangentVector tangent_project(const HyperboloidPoint& x, std::span<const double> g) {
  detail::require_same_size(x.coords(), g, "tangent_project");
  const double k = lorentz_inner(x.coords(), g);
  TangentVector out{Vector(g.begin(), g.end())};
  for (std::size_t i = 0; i < out.components.size(); ++i) out.components[i] += k * x[i];
  return out;
}

/// Exponential map at x. Throws ContractError if u is not tangent at x.
inline HyperboloidPoint exp_map_at(const HyperboloidPoint& x, std::span<const double> u) {
  detail::require_same_size(x.coords(), u, "exp_map_at");
  if (!detail::all_finite(u)) throw ContractError("exp_map_at: non-finite tangent vector");
  if (!is_tangent(x, u)) throw ContractError("exp_map_at: vector is not tangent at base point");
  const double n = lorentz_norm(u);
  if (n == 0.0) return x;
  const double ch = std::cosh(n);
  const double sc = detail::sinhc(n);
  Vector c(x.ambient_dim());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = ch * x[i] + sc * u[i];
  return project_to_manifold(c);
}

/// Geodesic distance arccosh(-<x,y>_l).
///
/// Close to coincidence the equivalent form 2 asinh(|x-y|_l / 2) is used, since
/// arccosh loses half of the significant digits as its argument approaches 1.
inline double hyperbolic_distance(const HyperboloidPoint& x, const HyperboloidPoint& y) {
  detail::require_same_size(x.coords(), y.coords(), "hyperbolic_distance");
  const double a = -lorentz_inner(x.coords(), y.coords());
  if (a >= 2.0) return std::acosh(a);
  double q = -(x[0] - y[0]) * (x[0] - y[0]);
  for (std::size_t i = 1; i < x.ambient_dim(); ++i) q += (x[i] - y[i]) * (x[i] - y[i]);
  q = std::max(q, 0.0);
  const double d = 2.0 * std::asinh(std::sqrt(q) / 2.0);
  // Guard: both branches agree analytically; fall back to the clamped arccosh
  // if the difference form is swamped by rounding.
  return std::isfinite(d) ? d : std::acosh(std::max(a, 1.0));
}

/// Inverse of exp_map_at: the tangent vector at x pointing to y with length d(x,y).
inline TangentVector log_map_at(const HyperboloidPoint& x, const HyperboloidPoint& y) {
  detail::require_same_size(x.coords(), y.coords(), "log_map_at");
  const double d = hyperbolic_distance(x, y);
  if (d == 0.0) return TangentVector{Vector(x.ambient_dim(), 0.0)};
  const double a = std::max(1.0, -lorentz_inner(x.coords(), y.coords()));
  Vector u(x.ambient_dim());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = y[i] - a * x[i];
  // |u|_l = sinh(d) analytically.
  const double scale = 1.0 / detail::sinhc(d);
  for (double& c : u) c *= scale;
  return tangent_project(x, u);
}

// --- derivatives used by the classification head ---------------------------

inline constexpr double kDistanceGradientCutoff = 1e-7;

/// d/dx of hyperbolic_distance(x, y), as an ambient Euclidean gradient in R^{n+1}.
/// Zero when d < 1e-7, where the distance is not differentiable.
inline Vector distance_gradient(const HyperboloidPoint& x, const HyperboloidPoint& y, double d) {
  Vector g(x.ambient_dim(), 0.0);
  if (d < kDistanceGradientCutoff) return g;
  const double k = 1.0 / std::sinh(d);
  g[0] = k * y[0];
  for (std::size_t i = 1; i < g.size(); ++i) g[i] = -k * y[i];
  return g;
}

/// Pulls an ambient gradient on x = exp_map_origin(v) back to v (vector-Jacobian product).
inline Vector exp_map_origin_vjp(std::span<const double> v, std::span<const double> grad_x) {
  if (grad_x.size() != v.size() + 1) throw DimensionError("exp_map_origin_vjp: shape mismatch");
  const double r = detail::euclidean_norm(v);
  const double f = detail::sinhc(r);
  // time part: d cosh(r)/dv = sinh(r)/r * v
  // spatial part: f I + (cosh r - f)/r^2 v v^T
  double g_curv;
  if (r < 1e-3) {
    const double r2 = r * r;
    g_curv = 1.0 / 3.0 + r2 / 30.0 + r2 * r2 / 840.0;
  } else {
    g_curv = (std::cosh(r) - f) / (r * r);
  }
  double vg = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) vg += v[i] * grad_x[i + 1];
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = grad_x[0] * f * v[i] + f * grad_x[i + 1] + g_curv * vg * v[i];
  }
  return out;
}

}  // namespace hyperdet
