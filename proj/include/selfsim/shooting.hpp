#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "selfsim/geometry.hpp"
#include "selfsim/ode.hpp"

namespace selfsim {

struct ExpanderRecord {
  double a = 0.0;
  double lambda_a = 0.0;
  double alpha_a = 0.0;
  int crossings = -1;  // -1 when the cone is undefined (p = 1)
  bool stabilized = false;
  double error_bar = 0.0;
  std::string status;  // empty on success, otherwise the failure reason
};

struct CompanionResult {
  ProfileCurve curve;
  int crossings = 0;
  double X = 0.0;  // u/r at the last sample
  double Y = 0.0;  // u_r at the last sample
  double distance = 0.0;  // |(X, Y) - (lambda_s, lambda_s)|
};

/// Minimal profile with v(0) = a (default 1), integrated to cfg.r_max.
CompanionResult companion(const FlowParams& params, const IntegratorConfig& cfg, double a = 1.0);

/// Slope of the asymptotic ray through a sample of a conical-ended expander or
/// shrinker, using the large-r series u = lambda r + c1/r + c3/r^3.
double asymptotic_slope(EquationKind kind, const FlowParams& params, const ProfilePoint& pt);

ExpanderRecord expander_slope(double a, const FlowParams& params, const IntegratorConfig& cfg);

std::vector<double> log_grid(double lo, double hi, int per_decade);

struct AlphaCurve {
  std::vector<ExpanderRecord> records;   // sweep, ascending in a
  std::vector<ExpanderRecord> extrema;   // refined local extrema of alpha(a)
};

/// expander_slope over the grid, then golden-section refinement of every
/// interior local extremum of alpha(a).
AlphaCurve alpha_curve(const std::vector<double>& grid, const FlowParams& params,
                       const IntegratorConfig& cfg, int threads = 1);

struct CriticalAngleResult {
  double alpha_crit = 0.0;
  double argmin_a = 0.0;
  std::vector<ExpanderRecord> sweep;
  bool widened = false;
};

/// Smallest limiting angle of the p = 1 expanders u(0) = b.
CriticalAngleResult critical_angle(const FlowParams& params, const IntegratorConfig& cfg,
                                   int threads = 1);

/// The values b with alpha(b) = alpha, found by bracketing on the sweep.
std::vector<double> solutions_at_angle(double alpha, const std::vector<ExpanderRecord>& sweep,
                                       const FlowParams& params, const IntegratorConfig& cfg);

enum class ShrinkerTag { Up, Down, Complete };
std::string to_string(ShrinkerTag tag);

struct ShrinkerClass {
  ShrinkerTag tag = ShrinkerTag::Complete;
  std::optional<double> escape_r;
  TerminationTag termination = TerminationTag::None;
  bool ambiguous = false;
};

ShrinkerClass classify_shrinker(double a, const FlowParams& params, const IntegratorConfig& cfg);

struct ShrinkerRecord {
  int k = 0;
  double a_k = 0.0;
  double lambda_k = 0.0;
  double alpha_k = 0.0;
  double bracket_width = 0.0;
  double a_lo = 0.0;
  double a_hi = 0.0;
  ShrinkerTag tag_lo = ShrinkerTag::Complete;
  ShrinkerTag tag_hi = ShrinkerTag::Complete;
  int crossings = 0;
  double readout_r1 = 0.0;
  double readout_r2 = 0.0;
  bool cylinder = false;  // the exact cylinder, k = 1
};

/// Conical-ended shrinkers N^1..N^k_max, ordered by k (a_k decreasing).
std::vector<ShrinkerRecord> find_shrinkers(int k_max, const FlowParams& params,
                                           const IntegratorConfig& cfg);

/// Profile of a found shrinker at its bracket midpoint, cut at the end of the
/// slope read-out window.
ProfileCurve shrinker_profile(const ShrinkerRecord& rec, const FlowParams& params,
                              const IntegratorConfig& cfg);

struct ContinuationResult {
  std::vector<ExpanderRecord> records;
  int L = 0;
  bool lower_bound = false;
};

/// Every a on the refined alpha curve with alpha(a) = alpha.
ContinuationResult count_continuations(double alpha, const AlphaCurve& curve,
                                       const FlowParams& params, const IntegratorConfig& cfg);

struct TripleJunctionResult {
  double a_star = 0.0;
  double b = 0.0;                    // junction at (b, b)
  double crossing_angle = 0.0;       // angle between profile and u = r, radians
  std::array<double, 3> angles{};    // the three angles at the junction
  double cylinder_angle = 0.0;
  double sphere_angle = 0.0;
};

TripleJunctionResult triple_junction(const FlowParams& params, const IntegratorConfig& cfg);

/// Angle at which a shrinker profile from u(0) = a meets u = r, measured as
/// the angle between the outgoing profile and the ray beyond the crossing.
double diagonal_crossing_angle(double a, const FlowParams& params, const IntegratorConfig& cfg,
                               double* b_out = nullptr);

}  // namespace selfsim
