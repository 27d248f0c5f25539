#pragma once

#include <string>
#include <utility>
#include <vector>

#include "selfsim/geometry.hpp"
#include "selfsim/ode.hpp"
#include "selfsim/shooting.hpp"

namespace selfsim {

struct DecayConstants {
  double beta = 0.0;
  double mu = 0.0;
  double tau = 0.0;
  double sigma = 0.0;
};

DecayConstants decay_constants(int n);

struct OscillatoryFit {
  double A1 = 0.0;
  double A2 = 0.0;
  std::pair<double, double> window{};
  double residual_rms = 0.0;
  double amplitude() const;
};

/// Least squares of r^beta w(r) against cos(mu log r), sin(mu log r) over the
/// samples with r inside `window`. Throws NumericalError when the normal
/// equations are ill-conditioned.
OscillatoryFit fit_oscillation(const std::vector<double>& r, const std::vector<double>& w,
                               const DecayConstants& dc, std::pair<double, double> window);

/// Same fit with an extra power: r^{beta + extra} w against the two modes.
OscillatoryFit fit_oscillation(const std::vector<double>& r, const std::vector<double>& w,
                               const DecayConstants& dc, std::pair<double, double> window,
                               double extra_power);

struct MatchingConstants {
  double A1 = 0.0, A2 = 0.0;          // companion tail, v(0) = 1
  double lambda1 = 0.0, lambda2 = 0.0;  // large-r slopes of h1, h2
  double B1 = 0.0, B2 = 0.0;          // g3 = B1 g1 + B2 g2 (fit near r = 0)
  double B1_wronskian = 0.0, B2_wronskian = 0.0;  // same, by a 2x2 solve at r = 1
  double D1 = 0.0, D2 = 0.0;
  double D = 0.0;
  double E = 0.0;  // in [0, pi)
  OscillatoryFit companion_fit;
};

/// (D1, D2) from (A1, A2) and (lambda1, lambda2).
std::pair<double, double> assemble_d(double A1, double A2, double lambda1, double lambda2);

MatchingConstants matching_constants(const FlowParams& params, const IntegratorConfig& cfg);

/// lambda(a) ~ lambda_s + a^{beta+1}(D1 cos(mu log a) + D2 sin(mu log a)), a <= 0.1.
double predict_expander_slope(double a, const FlowParams& params, const MatchingConstants& mc,
                              const DecayConstants& dc);

struct ShrinkerSequenceReport {
  std::vector<int> k;                 // k of the first record in each consecutive pair
  std::vector<double> a_ratio;        // a_k / a_{k+1}
  std::vector<double> gap_ratio;      // |tan a_k - l_s| / |tan a_{k+1} - l_s|
  std::vector<double> a_ratio_dev;    // relative deviation from e^{pi/mu}
  std::vector<double> gap_ratio_dev;  // relative deviation from e^{pi(beta+1)/mu}
  std::vector<double> phase;          // mu log a_k mod pi, per record
  bool alternating = true;
  double expected_a_ratio = 0.0;
  double expected_gap_ratio = 0.0;
};

ShrinkerSequenceReport verify_shrinker_sequence(const std::vector<ShrinkerRecord>& records,
                                                const FlowParams& params, const DecayConstants& dc);

}  // namespace selfsim
