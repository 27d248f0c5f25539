#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "selfsim/error.hpp"

namespace selfsim {

/// Symmetry data for SO(p) x SO(q)-invariant hypersurfaces in R^n, n = p + q.
///
/// p = 1 is allowed and describes surfaces of revolution about the r-axis
/// (the "orbit" of r is the two-point set {+r, -r}). Consumers that need the
/// Simons cone slope reject p = 1.
class FlowParams {
 public:
  FlowParams(int p, int q);

  /// Rotation about one axis in R^n: p = 1, q = n - 1.
  static FlowParams axial(int n);

  int p() const noexcept { return p_; }
  int q() const noexcept { return q_; }
  int n() const noexcept { return p_ + q_; }

  friend bool operator==(const FlowParams&, const FlowParams&) = default;

 private:
  int p_;
  int q_;
};

struct ConeData {
  double lambda_s;  // slope of u = lambda_s * r
  double alpha_s;   // arctan(lambda_s), radians
};

/// A sample of a planar profile in the (r, u) quadrant.
/// Tangent is (cos theta, sin theta), normal nu = (-sin theta, cos theta),
/// k = d theta / ds is the curvature with respect to nu.
struct ProfilePoint {
  double s = 0.0;
  double r = 0.0;
  double u = 0.0;
  double theta = 0.0;
  double k = 0.0;
};

enum class TerminationTag {
  None,
  ReachedRmax,
  VerticalTangent,
  AxisHit,
  EscapeUp,
  EscapeDown,
  StepLimit,
  Overflow,
};

std::string to_string(TerminationTag tag);

struct TerminationEvent {
  TerminationTag tag = TerminationTag::None;
  ProfilePoint location{};
};

struct ProfileCurve {
  std::vector<ProfilePoint> points;
  FlowParams params{2, 2};
  TerminationEvent termination{};

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  const ProfilePoint& front() const { return points.front(); }
  const ProfilePoint& back() const { return points.back(); }
};

/// Checks arclength monotonicity and finiteness; throws DomainError otherwise.
void validate(const ProfileCurve& curve);

/// Surface area of the unit m-sphere; the 0-sphere counts its two points.
double unit_sphere_area(int m);

ConeData cone_slope(const FlowParams& params);

struct PrincipalCurvature {
  double value;
  int multiplicity;
};

std::vector<PrincipalCurvature> principal_curvatures(const ProfilePoint& pt,
                                                     const FlowParams& params);
double mean_curvature(const ProfilePoint& pt, const FlowParams& params);
/// |A|^2, the squared norm of the second fundamental form.
double second_fundamental_norm(const ProfilePoint& pt, const FlowParams& params);

enum class Weight { Unit, GaussianMinus, GaussianPlus };

/// Integral of the weight over the hypersurface M(curve), optionally
/// restricted to the closed ball of radius `window` about the origin.
double weighted_area(const ProfileCurve& curve, Weight weight,
                     std::optional<double> window = std::nullopt);

/// Result of counting transverse crossings between two curves (or a curve and
/// a ray from the origin).
struct IntersectionResult {
  int crossings = 0;
  int tangencies = 0;
  bool ambiguous = false;
};

/// Ray u = slope * r, r >= 0.
struct Ray {
  double slope;
};

IntersectionResult intersection_count(const ProfileCurve& a, const ProfileCurve& b);
IntersectionResult intersection_count(const ProfileCurve& a, const Ray& ray);

/// Polyline variant used by the flow audits; points are (r, u) pairs.
using Polyline = std::vector<std::pair<double, double>>;
IntersectionResult intersection_count(const Polyline& a, const Polyline& b);
IntersectionResult intersection_count(const Polyline& a, const Ray& ray);
Polyline to_polyline(const ProfileCurve& curve);

/// CSV with header `s,r,u,theta,k`, 17 significant digits.
void write_profile_csv(std::ostream& os, const ProfileCurve& curve);
ProfileCurve read_profile_csv(std::istream& is, const FlowParams& params);

}  // namespace selfsim
