#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "selfsim/geometry.hpp"

namespace selfsim {

enum class EquationKind { Minimal, Expander, Shrinker, LinearizedExpander, LinearizedShrinker };

std::string to_string(EquationKind kind);

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double r_max = 10.0;
  long max_steps = 2'000'000;
  /// Width of the shrinker escape test, in radians of tangent angle.
  double escape_band = 0.02;
  /// Shrinker only: stop with EscapeUp/EscapeDown once the profile turns.
  bool detect_escape = false;
  /// Stop when the tangent becomes vertical (cos theta = 0).
  bool stop_on_vertical = false;
  /// Largest arclength between stored samples.
  double max_ds = 0.05;

  /// Throws DomainError for out-of-range fields. Shrinker runs additionally
  /// refuse r_max > 15 unless `allow_far_shrinker` is set.
  void check(EquationKind kind) const;
  bool allow_far_shrinker = false;
};

struct PhaseState {
  double X = 0.0;  // u / r
  double Y = 0.0;  // du/dr
  double eta = 0.0;  // log r
};

/// Curvature k(r, u, theta) of the Minimal, Expander or Shrinker profile law.
double curvature_law(EquationKind kind, const FlowParams& params, double r, double u,
                     double theta);

/// Coefficient c of u = a + c r^2 near the axis.
double series_coefficient(EquationKind kind, double a, const FlowParams& params);

/// Second-order start on the regular singular point r = 0, evaluated at
/// r0 (default 1e-4 a).
ProfilePoint series_start(EquationKind kind, double a, const FlowParams& params,
                          std::optional<double> r0 = std::nullopt);

/// Arclength integration of dr/ds = cos theta, du/ds = sin theta,
/// dtheta/ds = k(r, u, theta). Samples are the accepted steps (capped at
/// cfg.max_ds apart).
ProfileCurve integrate_profile(EquationKind kind, const ProfilePoint& start,
                               const FlowParams& params, const IntegratorConfig& cfg);

/// Phase-plane trajectory in (X, Y) against eta = log r, up to log(cfg.r_max).
/// Throws NumericalError if X reaches 0.
std::vector<PhaseState> integrate_phase(EquationKind kind, const PhaseState& init,
                                        const FlowParams& params, const IntegratorConfig& cfg);

struct FixedPointSpectrum {
  std::array<std::array<double, 2>, 2> jacobian{};
  std::complex<double> lambda_plus;
  std::complex<double> lambda_minus;
  bool oscillatory = false;
};

/// Linearization of the Minimal phase system at (lambda_s, lambda_s).
FixedPointSpectrum fixed_point_linearization(const FlowParams& params);

/// A solution of a linear ODE sampled on an increasing r grid.
struct SampledFunction {
  std::vector<double> r;
  std::vector<double> g;
  std::vector<double> dg;

  /// Cubic Hermite evaluation (value, derivative) at r inside the range.
  std::pair<double, double> at(double x) const;
};

struct LinearBasis {
  SampledFunction h1;
  SampledFunction h2;
  std::optional<SampledFunction> g3;
  double r0 = 1e-3;
};

/// Basis of the equation linearized over the cone. h1 + i h2 ~ r^{-beta + i mu}
/// near r = 0; for the shrinker kind g3 (~ r at infinity) is obtained by
/// integrating backwards from cfg.r_max. Forward shrinker solutions are only
/// integrated to r = min(cfg.r_max, forward_limit).
LinearBasis linear_basis(EquationKind kind, const FlowParams& params, const IntegratorConfig& cfg,
                         double forward_limit = 4.0, int samples_per_unit_log = 200);

/// Residual of the linearized equation at (r, g, g', g'').
double linearized_residual(EquationKind kind, const FlowParams& params, double r, double g,
                           double dg, double ddg);

}  // namespace selfsim
