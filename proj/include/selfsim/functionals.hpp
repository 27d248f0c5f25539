#pragma once

#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "selfsim/evolve.hpp"
#include "selfsim/geometry.hpp"

namespace selfsim {

/// Backwards heat kernel rho(x, t) = (4 pi (t0 - t))^{-(n-1)/2} exp(-|x - x0|^2 / (c (t0 - t)))
/// with c = `diffusion` (4 for the true kernel). The center x0 is given by its
/// (r, u) chart coordinates: x0 = (x0_r e_1, x0_u e_1) in R^p x R^q.
struct HeatKernelSpec {
  double x0_r = 0.0;
  double x0_u = 0.0;
  double t0 = 0.0;
  int n = 0;  // ambient dimension; 0 takes it from the flow parameters
  double diffusion = 4.0;
};

struct DensityValue {
  double phi = 0.0;
  double tail_bound = 0.0;  // estimate of the mass beyond a free curve end
  bool truncated = false;   // tail_bound exceeds 1e-12 phi
};

DensityValue gaussian_density(const ProfileCurve& curve, const FlowParams& params,
                              const HeatKernelSpec& spec, double t);

/// Density of a hyperplane at distance `offset` from the center.
double hyperplane_density(const HeatKernelSpec& spec, double t, double offset = 0.0);

struct DensitySample {
  double t = 0.0;
  double phi = 0.0;
  double err = 0.0;
};

struct DensityTrace {
  std::vector<DensitySample> samples;
  double max_upward_violation = 0.0;
};

DensityTrace density_trace(const FlowTrajectory& traj, const FlowParams& params,
                           const HeatKernelSpec& spec);

/// div_P(D rho) + (D rho . nu)^2 / rho + rho_t for the (n-1)-plane through x
/// spanned by `frame` (orthonormal, n-1 vectors of length n).
double kernel_identity_residual(const std::vector<double>& x, double t,
                                const std::vector<std::vector<double>>& frame,
                                const HeatKernelSpec& spec);

/// Heat kernel value at x (full R^n point), same conventions.
double heat_kernel(const std::vector<double>& x, double t, const HeatKernelSpec& spec);

enum class Functional { J, K };

/// Normal perturbation X = phi(s) nu of a profile, s the curve's arclength.
struct NormalPerturbation {
  std::function<double(double)> phi;
  std::function<double(double)> dphi;
  double s_lo = 0.0;
  double s_hi = 0.0;
  bool whole_curve = false;

  /// C^2 bump amplitude (1 - ((s-c)/w)^2)^3 on |s - c| < w.
  static NormalPerturbation bump(double center, double half_width, double amplitude = 1.0);
  /// phi = 1 everywhere (radial motion for spheres).
  static NormalPerturbation uniform();
};

struct FirstVariation {
  double fd = 0.0;            // central difference at step h
  double analytic = 0.0;      // -int (f H - Df . nu) phi dmu
  double scale = 0.0;         // int |phi| (|f H| + |Df . nu|) dmu
  double relative = 0.0;      // |fd| / scale
  double richardson_order = 0.0;
  std::array<double, 3> steps{};   // h, h/2, h/4
  std::array<double, 3> values{};  // central differences at those steps
};

/// Weighted area of the perturbed curve, integrated over the unperturbed
/// parameter so no re-interpolation enters the difference quotient.
double perturbed_weighted_area(const ProfileCurve& curve, Functional functional,
                               const NormalPerturbation& dir, double eps,
                               std::optional<double> window = std::nullopt);

FirstVariation first_variation(const ProfileCurve& curve, Functional functional,
                               const NormalPerturbation& dir, double h,
                               std::optional<double> window = std::nullopt);

struct GaussBonnetReport {
  double epsilon = 0.5;
  double lhs = 0.0;          // (1 - eps) int_{B1} |A|^2
  double H2_integral = 0.0;  // int_{B2} H^2
  double genus_term = 0.0;   // 8 pi g
  double area_term = 0.0;    // 96 pi D / eps
  double D_ratio = 0.0;
  int genus = 0;
  bool holds = false;
  bool D_partial = false;    // a free end stops inside B2
  // Same estimate with the cutoff phi = min(1, (2 - |x|)^2) kept explicit.
  double cutoff_lhs = 0.0;   // (1 - eps) int phi |A|^2
  double cutoff_rhs = 0.0;   // int phi H^2 + 8 pi g + int (4|Dphi|^2/(eps phi) + 4|Dphi|)
  bool cutoff_holds = false;
  double stated_constant = 0.0;   // 96 pi
  double cutoff_constant = 0.0;  // constant implied by the explicit cutoff, times D / eps
};

GaussBonnetReport gauss_bonnet_audit(const ProfileCurve& curve, const FlowParams& params, int genus,
                                     double epsilon = 0.5, std::pair<double, double> radii = {1.0, 2.0});

std::vector<GaussBonnetReport> gauss_bonnet_sweep(const ProfileCurve& curve, const FlowParams& params,
                                                  int genus);

using SpacePoint = std::array<double, 3>;

struct TotalCurvature {
  double integral = 0.0;
  int components = 0;
  bool bound_holds = false;  // integral >= 2 pi components - tolerance
};

/// Closed polygons (the last vertex connects back to the first).
TotalCurvature total_curvature(const std::vector<std::vector<SpacePoint>>& components,
                               double tolerance = 1e-9);

/// |k| <= (|A_M| + |A_N|) / sin(alpha) + tolerance.
bool transverse_bound_check(double A_M, double A_N, double sin_alpha, double k_measured,
                            double tolerance = 1e-12);

struct SectionCheck {
  double r = 0.0, u = 0.0;  // where the profile meets |x| = rho
  double k = 0.0;
  double bound = 0.0;
  bool holds = false;
};

/// For n = 3 surfaces of revolution: every circle M n dB_rho against
/// |k| <= (|A_M| + 1/rho) / sin(alpha).
std::vector<SectionCheck> sphere_section_checks(const ProfileCurve& curve, const FlowParams& params,
                                                double rho);

/// Catenoid u = a cosh(r/a) over |r| <= half_width, for (p, q) = (1, 2).
ProfileCurve catenoid_profile(double neck, double half_width, int samples = 2000);

/// Closed circle of radius `radius` about (0, center_u), for (p, q) = (1, 2):
/// a torus of revolution.
ProfileCurve torus_profile(double center_u, double radius, int samples = 2000);

}  // namespace selfsim
