#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <optional>

#include "selfsim/geometry.hpp"

namespace selfsim {

/// Piecewise interpolant through the samples of a ProfileCurve.
///
/// r and u use quintic Hermite data (value, first and second derivative are
/// all known from theta and k), theta uses cubic Hermite with slope k, and k
/// uses cubic Hermite with finite-difference slopes.
class CurveInterpolant {
 public:
  explicit CurveInterpolant(const ProfileCurve& curve);

  std::size_t panels() const noexcept { return curve_->points.size() - 1; }
  double panel_length(std::size_t i) const;
  /// Point at local parameter t in [0, 1] of panel i.
  ProfilePoint at(std::size_t i, double t) const;
  /// Point at arclength s (clamped to the curve).
  ProfilePoint at_arclength(double s) const;

 private:
  const ProfileCurve* curve_;
  std::vector<double> dk_;
};

/// Gauss-Legendre nodes/weights on [0, 1].
inline constexpr int kGaussOrder = 8;
const std::array<double, kGaussOrder>& gauss_nodes();
const std::array<double, kGaussOrder>& gauss_weights();

/// Integrand evaluated at an interpolated profile point.
using ProfileIntegrand = std::function<double(const ProfilePoint&)>;

/// Composite Gauss quadrature of `f` over arclength, restricted to the closed
/// ball |x| <= window when given. Panel boundaries are the curve samples;
/// panels cut by the ball boundary are split at the crossing.
double integrate_arclength(const ProfileCurve& curve, const ProfileIntegrand& f,
                           std::optional<double> window = std::nullopt);

/// Integral over the hypersurface M(curve):
/// omega_{p-1} omega_{q-1} \int f r^{p-1} u^{q-1} ds.
double integrate_surface(const ProfileCurve& curve, const ProfileIntegrand& f,
                         std::optional<double> window = std::nullopt);

}  // namespace selfsim
