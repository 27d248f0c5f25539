#include "selfsim/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "dop853.hpp"

namespace selfsim {

namespace {

constexpr double kPi = std::numbers::pi;

// Condition number beyond which the two-mode normal equations are rejected.
constexpr double kMaxCondition = 1e6;

double wrap_pi(double x) {
  double y = std::fmod(x, kPi);
  if (y < 0) y += kPi;
  return y;
}

}  // namespace

DecayConstants decay_constants(int n) {
  if (n < 4 || n > 7) throw DomainError("decay_constants: oscillatory regime needs 4 <= n <= 7");
  DecayConstants dc;
  dc.beta = (n - 3) / 2.0;
  dc.mu = std::sqrt(8.0 - (n - 5.0) * (n - 5.0)) / 2.0;
  dc.tau = std::exp(-kPi / dc.mu);
  dc.sigma = std::pow(dc.tau, dc.beta + 1.0);
  return dc;
}

double OscillatoryFit::amplitude() const { return std::hypot(A1, A2); }

OscillatoryFit fit_oscillation(const std::vector<double>& r, const std::vector<double>& w,
                               const DecayConstants& dc, std::pair<double, double> window) {
  return fit_oscillation(r, w, dc, window, 0.0);
}

OscillatoryFit fit_oscillation(const std::vector<double>& r, const std::vector<double>& w,
                               const DecayConstants& dc, std::pair<double, double> window,
                               double extra_power) {
  if (r.size() != w.size()) throw DomainError("fit_oscillation: r and w differ in length");
  const auto [lo, hi] = window;
  if (!(lo > 0) || !(hi > lo)) throw DomainError("fit_oscillation: window must satisfy 0 < r_lo < r_hi");
  if (r.empty() || lo < r.front() * (1 - 1e-12) || hi > r.back() * (1 + 1e-12)) {
    throw DomainError("fit_oscillation: window outside the sampled range");
  }

  double scc = 0, scs = 0, sss = 0, syc = 0, sys = 0;
  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (r[i] < lo || r[i] > hi) continue;
    const double ph = dc.mu * std::log(r[i]);
    const double c = std::cos(ph), s = std::sin(ph);
    const double y = std::pow(r[i], dc.beta + extra_power) * w[i];
    scc += c * c;
    scs += c * s;
    sss += s * s;
    syc += y * c;
    sys += y * s;
    used.push_back(i);
  }
  const double periods = dc.mu * std::log(hi / lo) / (2 * kPi);
  if (used.size() < 3 || static_cast<double>(used.size()) < 50.0 * periods) {
    throw DomainError("fit_oscillation: fewer than 50 samples per oscillation period");
  }
  // Eigenvalues of the symmetric 2x2 normal matrix give its condition number.
  const double tr = scc + sss;
  const double det = scc * sss - scs * scs;
  const double disc = std::sqrt(std::max(0.0, tr * tr / 4 - det));
  const double ev_hi = tr / 2 + disc, ev_lo = tr / 2 - disc;
  if (!(ev_lo > 0) || ev_hi / ev_lo > kMaxCondition) {
    throw NumericalError("fit_oscillation: normal equations ill-conditioned (window too short)");
  }

  OscillatoryFit fit;
  fit.window = window;
  fit.A1 = (sss * syc - scs * sys) / det;
  fit.A2 = (scc * sys - scs * syc) / det;
  double ss = 0;
  for (auto i : used) {
    const double ph = dc.mu * std::log(r[i]);
    const double y = std::pow(r[i], dc.beta + extra_power) * w[i];
    const double e = y - fit.A1 * std::cos(ph) - fit.A2 * std::sin(ph);
    ss += e * e;
  }
  fit.residual_rms = std::sqrt(ss / used.size());
  return fit;
}

std::pair<double, double> assemble_d(double A1, double A2, double lambda1, double lambda2) {
  return {lambda1 * A1 + lambda2 * A2, -lambda1 * A2 + lambda2 * A1};
}

namespace {

struct Tail {
  std::vector<double> r;
  std::vector<double> w;  // u - lambda_s r
};

// Companion tail in the phase plane, carried as the deviation (x, y) from the
// fixed point so that the decaying oscillation keeps full relative precision.
Tail companion_tail(const FlowParams& params, const IntegratorConfig& cfg, double r_end) {
  IntegratorConfig near = cfg;
  near.r_max = 1.0;
  const auto comp = companion(params, near);
  const auto& last = comp.curve.back();
  const double lam = cone_slope(params).lambda_s;
  const int p = params.p();

  using Stepper = detail::Dop853<2>;
  using State = Stepper::State;
  auto rhs = [&](double, const State& d, State& dd) {
    const double X = lam + d[0], Y = lam + d[1];
    dd[0] = d[1] - d[0];
    dd[1] = -(1 + Y * Y) * (p - 1) * (lam * (d[0] + d[1]) + d[0] * d[1]) / X;
  };
  detail::StepperOptions opt;
  opt.rel_tol = std::min(cfg.rel_tol, 1e-12);
  opt.abs_tol = 1e-300;
  opt.max_step = 0.05;
  const double eta0 = std::log(last.r);
  const double eta1 = std::log(r_end);
  Stepper st(rhs, eta0, {last.u / last.r - lam, std::tan(last.theta) - lam}, eta1, opt);

  constexpr int per_unit = 200;
  const int n = static_cast<int>(std::ceil((eta1 - eta0) * per_unit)) + 1;
  Tail out;
  int next = 0;
  auto push = [&](double eta, const State& d) {
    const double r = std::exp(eta);
    out.r.push_back(r);
    out.w.push_back(r * d[0]);
  };
  push(eta0, st.y());
  ++next;
  long steps = 0;
  while (next < n) {
    if (++steps > cfg.max_steps) throw NumericalError("matching_constants: companion tail step limit");
    st.step();
    while (next < n) {
      const double eta = next + 1 == n ? eta1 : eta0 + (eta1 - eta0) * next / (n - 1);
      if (eta > st.t()) break;
      push(eta, next + 1 == n ? st.y() : st.dense(eta));
      ++next;
    }
  }
  return out;
}

// lambda_i from the averaged read-out (h/r + h_r)/2 = lambda (1 - c3/r^4),
// c3 = 2(p-1)/(1+lambda_s^2) for the linearized expander.
double linear_slope(const SampledFunction& h, const FlowParams& params) {
  const double R = h.r.back();
  const double lam2 = std::pow(cone_slope(params).lambda_s, 2);
  const double c3 = 2.0 * (params.p() - 1) / (1 + lam2);
  const double avg = 0.5 * (h.g.back() / R + h.dg.back());
  return avg / (1 - c3 / std::pow(R, 4));
}

}  // namespace

MatchingConstants matching_constants(const FlowParams& params, const IntegratorConfig& cfg) {
  const int n = params.n();
  if (n < 4 || n > 7) throw DomainError("matching_constants: needs 4 <= n <= 7");
  if (params.p() < 2) throw DomainError("matching_constants: needs p >= 2");
  const auto dc = decay_constants(n);
  const double lam = cone_slope(params).lambda_s;
  MatchingConstants mc;

  // A: companion tail. The window starts where the nonlinear correction
  // (relative size |w|/(lambda r)) has fallen below 1% for good, and spans
  // two periods.
  const double two_periods = std::exp(4 * kPi / dc.mu);
  const auto tail = companion_tail(params, cfg, 1e3 * two_periods);
  std::size_t start = tail.r.size();
  while (start > 0 && std::abs(tail.w[start - 1]) < 1e-2 * lam * tail.r[start - 1]) --start;
  if (start >= tail.r.size()) throw NumericalError("matching_constants: companion never settles");
  const double r_lo = std::max(tail.r[start], 1.0);
  const double r_hi = r_lo * two_periods;
  if (r_hi > tail.r.back()) throw NumericalError("matching_constants: companion tail too short for the fit window");
  mc.companion_fit = fit_oscillation(tail.r, tail.w, dc, {r_lo, r_hi});
  mc.A1 = mc.companion_fit.A1;
  mc.A2 = mc.companion_fit.A2;

  // lambda_i: forward basis of the linearized expander.
  const auto ex = linear_basis(EquationKind::LinearizedExpander, params, cfg);
  mc.lambda1 = linear_slope(ex.h1, params);
  mc.lambda2 = linear_slope(ex.h2, params);

  // B: g3 near the axis. Stop the window where the r^2 correction of the
  // indicial series reaches 1e-4.
  const auto sh = linear_basis(EquationKind::LinearizedShrinker, params, cfg);
  const auto& g3 = *sh.g3;
  {
    const double lam2 = lam * lam;
    const std::complex<double> s(-dc.beta, dc.mu);
    auto P = [&](std::complex<double> x) {
      return x * (x - 1.0) / (1.0 + lam2) + double(params.p() - 1) * (x + 1.0);
    };
    const double c = std::abs((s - 1.0) / (2.0 * P(s + 2.0)));
    const double lo = g3.r.front();
    const double hi = std::min(1.0, std::max(std::sqrt(1e-4 / c), lo * std::exp(kPi / dc.mu)));
    const auto fb = fit_oscillation(g3.r, g3.g, dc, {lo, hi});
    mc.B1 = fb.A1;
    mc.B2 = fb.A2;
  }
  // Cross-check: g3 = B1 h1 + B2 h2 solved exactly at r = 1 (h_i are the
  // shrinker basis, normalized like r^{-beta} cos, r^{-beta} sin at the axis).
  {
    const auto [a1, da1] = sh.h1.at(1.0);
    const auto [a2, da2] = sh.h2.at(1.0);
    const auto [b, db] = g3.at(1.0);
    const double det = a1 * da2 - a2 * da1;
    mc.B1_wronskian = (b * da2 - a2 * db) / det;
    mc.B2_wronskian = (a1 * db - b * da1) / det;
  }

  const auto [d1, d2] = assemble_d(mc.A1, mc.A2, mc.lambda1, mc.lambda2);
  mc.D1 = d1;
  mc.D2 = d2;
  mc.D = std::hypot(mc.A1, mc.A2) / std::hypot(mc.B1, mc.B2);
  mc.E = wrap_pi(std::atan2(mc.B2, mc.B1) - std::atan2(mc.A2, mc.A1));
  return mc;
}

double predict_expander_slope(double a, const FlowParams& params, const MatchingConstants& mc,
                              const DecayConstants& dc) {
  if (!(a > 0) || a > 0.1) throw DomainError("predict_expander_slope: a must lie in (0, 0.1]");
  const double lam = cone_slope(params).lambda_s;
  const double ph = dc.mu * std::log(a);
  return lam + std::pow(a, dc.beta + 1) * (mc.D1 * std::cos(ph) + mc.D2 * std::sin(ph));
}

ShrinkerSequenceReport verify_shrinker_sequence(const std::vector<ShrinkerRecord>& records,
                                                const FlowParams& params, const DecayConstants& dc) {
  const double lam = cone_slope(params).lambda_s;
  ShrinkerSequenceReport rep;
  rep.expected_a_ratio = std::exp(kPi / dc.mu);
  rep.expected_gap_ratio = std::exp(kPi * (dc.beta + 1) / dc.mu);
  for (const auto& rec : records) rep.phase.push_back(wrap_pi(dc.mu * std::log(rec.a_k)));
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    const auto& x = records[i];
    const auto& y = records[i + 1];
    const double gx = std::tan(x.alpha_k) - lam;
    const double gy = std::tan(y.alpha_k) - lam;
    rep.k.push_back(x.k);
    rep.a_ratio.push_back(x.a_k / y.a_k);
    rep.gap_ratio.push_back(std::abs(gx) / std::abs(gy));
    rep.a_ratio_dev.push_back(std::abs(rep.a_ratio.back() / rep.expected_a_ratio - 1));
    rep.gap_ratio_dev.push_back(std::abs(rep.gap_ratio.back() / rep.expected_gap_ratio - 1));
    if (!(gx * gy < 0)) rep.alternating = false;
  }
  return rep;
}

}  // namespace selfsim
