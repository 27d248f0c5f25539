#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "selfsim/geometry.hpp"

namespace selfsim {

enum class OuterBoundary {
  Extrapolate,  // free end, ghost by linear extrapolation
  Ray,          // free end slides on the ray through its starting point
};

enum class KernelChoice { Auto, Scalar, Avx2 };

struct SchemeConfig {
  double dt_safety = 0.5;
  double resample_tol = 0.01;  // target marker spacing
  std::vector<ProfileCurve> reference_curves;  // static curves counted against at snapshots
  OuterBoundary outer = OuterBoundary::Extrapolate;
  double snapshot_dt = 0.0;  // 0 selects (t_end - t0) / 100
  KernelChoice kernel = KernelChoice::Auto;
  long max_steps = 20'000'000;
  int min_points = 8;

  void check() const;
};

struct FlowState {
  double t = 0.0;
  ProfileCurve curve;
};

struct StepRecord {
  double t = 0.0;
  double dt = 0.0;
  double max_H = 0.0;
  double min_u = 0.0;
  double scale = 0.0;  // extent (compact curves) or smallest neck, drives the singular stop
  bool resampled = false;
};

struct SnapshotRecord {
  double t = 0.0;
  double max_H = 0.0;
  double min_u = 0.0;
  std::vector<IntersectionResult> counts;  // against scheme.reference_curves
};

enum class FlowStop { Completed, Singular };

struct FlowTrajectory {
  std::vector<FlowState> states;
  std::vector<SnapshotRecord> snapshots;  // parallel to states
  std::vector<StepRecord> steps;
  SchemeConfig scheme;
  FlowStop stop = FlowStop::Completed;
  std::optional<double> singular_time;
  std::string kernel;
};

/// Front tracking of the reduced flow: every marker moves with H nu, where
/// H = k + (p-1) sin(theta)/r - (q-1) cos(theta)/u.
FlowTrajectory run_flow(const ProfileCurve& init, double t_end, const FlowParams& params,
                        const SchemeConfig& scheme, double t0 = 0.0);

/// One explicit step's velocities on raw markers, exposed for kernel tests.
/// Markers must include a ghost at each end.
void normal_velocity(const std::vector<double>& r, const std::vector<double>& u,
                     const FlowParams& params, KernelChoice kernel, std::vector<double>& vr,
                     std::vector<double>& vu, std::vector<double>& H);
bool avx2_available();

// Exact solutions.
ProfileCurve sphere_profile(double R, const FlowParams& params, int samples = 400);
ProfileCurve cylinder_profile(double R, double r_max, const FlowParams& params, int samples = 400);
ProfileCurve dilate(const ProfileCurve& curve, double factor);

enum class ScalingMode { Shrink, Expand };

/// Largest over the states of a symmetric Hausdorff distance between the
/// rescaled state and the profile, both cut to a common ball about the origin.
double self_similarity_residual(const FlowTrajectory& traj, const ProfileCurve& profile,
                                ScalingMode mode);

/// Distance-based comparison of two single curves (the building block of the
/// residual above); `window` limits the compared points to |x| <= window.
double hausdorff_distance(const Polyline& a, const Polyline& b, double window);

struct MovingReference {
  enum class Kind { StaticMinimal, RescaledShrinker };
  Kind kind = Kind::StaticMinimal;
  ProfileCurve profile;
};

struct AuditEvent {
  double t = 0.0;
  std::string what;
};

struct AuditReport {
  std::vector<double> times;
  std::vector<int> counts;
  std::vector<bool> interpolated;
  std::vector<AuditEvent> events;
  bool nonincreasing = true;
};

AuditReport intersection_audit(const FlowTrajectory& traj, const MovingReference& ref);

struct ConeDrop {
  int before = 0;  // shrinker at t = -1 against the cone
  int after = 0;   // expander at t = +1 against the cone
  int drop() const { return before - after; }
};

ConeDrop cone_intersection_drop(const ProfileCurve& shrinker, const ProfileCurve& expander,
                                const FlowParams& params);

/// One CSV per snapshot plus index.json; returns the files written.
std::vector<std::filesystem::path> write_trajectory_archive(const FlowTrajectory& traj,
                                                            const std::filesystem::path& dir);

}  // namespace selfsim
