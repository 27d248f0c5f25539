#include "selfsim/ode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dop853.hpp"

namespace selfsim {

std::string to_string(EquationKind kind) {
  switch (kind) {
    case EquationKind::Minimal: return "Minimal";
    case EquationKind::Expander: return "Expander";
    case EquationKind::Shrinker: return "Shrinker";
    case EquationKind::LinearizedExpander: return "LinearizedExpander";
    case EquationKind::LinearizedShrinker: return "LinearizedShrinker";
  }
  return "Unknown";
}

void IntegratorConfig::check(EquationKind kind) const {
  if (!(rel_tol > 0 && rel_tol < 1) || !(abs_tol > 0 && abs_tol < 1)) {
    throw DomainError("IntegratorConfig: tolerances must lie in (0, 1)");
  }
  if (!(r_max > 0)) throw DomainError("IntegratorConfig: r_max must be positive");
  if (max_steps <= 0) throw DomainError("IntegratorConfig: max_steps must be positive");
  if (!(escape_band > 0)) throw DomainError("IntegratorConfig: escape_band must be positive");
  if (!(max_ds > 0)) throw DomainError("IntegratorConfig: max_ds must be positive");
  const bool shrinker = kind == EquationKind::Shrinker || kind == EquationKind::LinearizedShrinker;
  if (shrinker && r_max > 15.0 && !allow_far_shrinker) {
    throw DomainError("IntegratorConfig: shrinker r_max beyond 15 exhausts double precision");
  }
}

double curvature_law(EquationKind kind, const FlowParams& params, double r, double u,
                     double theta) {
  const int p = params.p();
  const int q = params.q();
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double radial = p > 1 ? (p - 1) / r : 0.0;
  switch (kind) {
    case EquationKind::Minimal: return (q - 1) / u * c - radial * s;
    case EquationKind::Expander: return ((q - 1) / u + 0.5 * u) * c - (radial + 0.5 * r) * s;
    case EquationKind::Shrinker: return ((q - 1) / u - 0.5 * u) * c - (radial - 0.5 * r) * s;
    default: throw DomainError("curvature_law: linearized kinds have no profile law");
  }
}

double series_coefficient(EquationKind kind, double a, const FlowParams& params) {
  if (!(a > 0)) throw DomainError("series_start: a must be positive");
  const int p = params.p();
  const int q = params.q();
  switch (kind) {
    case EquationKind::Minimal: return (q - 1) / (2.0 * p * a);
    case EquationKind::Expander: return (0.5 * a + (q - 1) / a) / (2.0 * p);
    case EquationKind::Shrinker: return ((q - 1) / a - 0.5 * a) / (2.0 * p);
    default: throw DomainError("series_start: linearized kinds start from linear_basis");
  }
}

ProfilePoint series_start(EquationKind kind, double a, const FlowParams& params,
                          std::optional<double> r0) {
  const double c = series_coefficient(kind, a, params);
  const double r = r0.value_or(1e-4 * a);
  if (!(r > 0)) throw DomainError("series_start: r0 must be positive");
  const double slope = 2.0 * c * r;
  ProfilePoint pt;
  pt.r = r;
  pt.u = a + c * r * r;
  pt.theta = std::atan(slope);
  pt.k = 2.0 * c / std::pow(1.0 + slope * slope, 1.5);
  pt.s = r + 2.0 * c * c * r * r * r / 3.0;
  return pt;
}

ProfileCurve integrate_profile(EquationKind kind, const ProfilePoint& start,
                               const FlowParams& params, const IntegratorConfig& cfg) {
  if (kind != EquationKind::Minimal && kind != EquationKind::Expander &&
      kind != EquationKind::Shrinker) {
    throw DomainError("integrate_profile: kind must be Minimal, Expander or Shrinker");
  }
  cfg.check(kind);
  if (!(start.u > 0) || start.r < 0) throw DomainError("integrate_profile: start outside the quadrant");

  using Stepper = detail::Dop853<3>;
  using State = Stepper::State;
  auto rhs = [&](double, const State& y, State& dy) {
    dy[0] = std::cos(y[2]);
    dy[1] = std::sin(y[2]);
    dy[2] = curvature_law(kind, params, y[0], y[1], y[2]);
  };
  detail::StepperOptions opt;
  opt.rel_tol = cfg.rel_tol;
  // Profiles starting at height a live on length scale a near the axis.
  opt.abs_tol = cfg.abs_tol * std::min(1.0, start.u);
  opt.max_step = cfg.max_ds;
  // Near the axis the natural length scale is r itself.
  opt.first_step = std::min(cfg.max_ds, 0.1 * std::max(start.r, 1e-3 * start.u));
  const double s_bound = start.s + 1e6;
  Stepper st(rhs, start.s, {start.r, start.u, start.theta}, s_bound, opt);

  ProfileCurve curve;
  curve.params = params;
  auto make_point = [&](double s, const State& y) {
    ProfilePoint p{s, y[0], y[1], y[2], 0.0};
    p.k = curvature_law(kind, params, y[0], y[1], y[2]);
    return p;
  };
  curve.points.push_back(make_point(start.s, {start.r, start.u, start.theta}));

  const bool shrink_escape = cfg.detect_escape && kind == EquationKind::Shrinker;
  const double up_level = std::numbers::pi / 2 - cfg.escape_band;

  struct Event {
    TerminationTag tag;
    std::function<double(const State&)> g;
  };
  std::vector<Event> events = {
      {TerminationTag::ReachedRmax, [&](const State& y) { return y[0] - cfg.r_max; }},
      {TerminationTag::AxisHit, [](const State& y) { return -y[1]; }},
      {TerminationTag::AxisHit, [](const State& y) { return -y[0]; }},
  };
  if (shrink_escape) {
    events.push_back({TerminationTag::EscapeUp, [up_level](const State& y) { return y[2] - up_level; }});
    events.push_back({TerminationTag::EscapeDown, [up_level](const State& y) { return -y[2] - up_level; }});
  }
  if (cfg.stop_on_vertical) {
    events.push_back({TerminationTag::VerticalTangent, [](const State& y) { return -std::cos(y[2]); }});
  }
  std::vector<double> g_old(events.size());
  for (std::size_t e = 0; e < events.size(); ++e) g_old[e] = events[e].g(st.y());

  for (long step = 0;; ++step) {
    if (step >= cfg.max_steps) {
      curve.termination = {TerminationTag::StepLimit, curve.points.back()};
      return curve;
    }
    try {
      st.step();
    } catch (const NumericalError&) {
      curve.termination = {TerminationTag::Overflow, curve.points.back()};
      return curve;
    }
    // Earliest event in this step, if any (events fire on a rise through 0).
    double t_hit = INFINITY;
    TerminationTag tag = TerminationTag::None;
    for (std::size_t e = 0; e < events.size(); ++e) {
      const double g_new = events[e].g(st.y());
      if (g_old[e] < 0 && g_new >= 0) {
        const double th = st.locate([&](double, const State& y) { return events[e].g(y); }, g_old[e]);
        if (th < t_hit) {
          t_hit = th;
          tag = events[e].tag;
        }
      }
      g_old[e] = g_new;
    }
    if (tag != TerminationTag::None) {
      auto pt = make_point(t_hit, st.dense(t_hit));
      if (tag == TerminationTag::ReachedRmax) pt.r = cfg.r_max;
      if (tag == TerminationTag::AxisHit) {
        pt.u = std::max(pt.u, 0.0);
        pt.r = std::max(pt.r, 0.0);
        if (pt.u > 0 && pt.r > 0) pt.k = curvature_law(kind, params, pt.r, pt.u, pt.theta);
      }
      if (t_hit > curve.points.back().s) curve.points.push_back(pt);
      curve.termination = {tag, pt};
      return curve;
    }
    const auto pt = make_point(st.t(), st.y());
    if (!std::isfinite(pt.k) || std::abs(pt.k) > 1e12 || std::abs(pt.u) > 1e12) {
      curve.termination = {TerminationTag::Overflow, pt};
      return curve;
    }
    curve.points.push_back(pt);
  }
}

std::vector<PhaseState> integrate_phase(EquationKind kind, const PhaseState& init,
                                        const FlowParams& params, const IntegratorConfig& cfg) {
  if (kind != EquationKind::Minimal && kind != EquationKind::Expander) {
    throw DomainError("integrate_phase: kind must be Minimal or Expander");
  }
  cfg.check(kind);
  const double lam2 = cone_slope(params).lambda_s * cone_slope(params).lambda_s;
  if (!(init.X > 0)) throw DomainError("integrate_phase: X must be positive");
  const int p = params.p();
  const double eta_max = std::log(cfg.r_max);
  if (!(eta_max > init.eta)) throw DomainError("integrate_phase: start beyond r_max");

  using Stepper = detail::Dop853<2>;
  using State = Stepper::State;
  auto rhs = [&](double eta, const State& y, State& dy) {
    const double X = y[0], Y = y[1];
    dy[0] = Y - X;
    dy[1] = (1 + Y * Y) * (p - 1) * (lam2 - X * Y) / X;
    if (kind == EquationKind::Expander) dy[1] -= (1 + Y * Y) * std::exp(2 * eta) * (Y - X) / 2;
  };
  detail::StepperOptions opt;
  opt.rel_tol = cfg.rel_tol;
  opt.abs_tol = cfg.abs_tol;
  opt.max_step = 0.05;
  Stepper st(rhs, init.eta, {init.X, init.Y}, eta_max, opt);
  std::vector<PhaseState> out{init};
  for (long step = 0; !st.finished(); ++step) {
    if (step >= cfg.max_steps) throw NumericalError("integrate_phase: step limit reached");
    st.step();
    if (!(st.y()[0] > 0)) throw NumericalError("integrate_phase: trajectory reached X = 0 (axis)");
    out.push_back({st.y()[0], st.y()[1], st.t()});
  }
  return out;
}

FixedPointSpectrum fixed_point_linearization(const FlowParams& params) {
  const auto cone = cone_slope(params);
  const double lam = cone.lambda_s;
  const int p = params.p();
  FixedPointSpectrum out;
  // d/dX and d/dY of (p-1)(1+Y^2)(lam^2 - XY)/X at X = Y = lam.
  const double fx = -(p - 1) * (1 + lam * lam);
  const double fy = -(p - 1) * (1 + lam * lam);
  out.jacobian = {{{-1.0, 1.0}, {fx, fy}}};
  const double tr = out.jacobian[0][0] + out.jacobian[1][1];
  const double det = out.jacobian[0][0] * out.jacobian[1][1] - out.jacobian[0][1] * out.jacobian[1][0];
  const double disc = tr * tr / 4 - det;
  if (disc < 0) {
    out.oscillatory = true;
    out.lambda_plus = {tr / 2, std::sqrt(-disc)};
    out.lambda_minus = {tr / 2, -std::sqrt(-disc)};
  } else {
    out.lambda_plus = {tr / 2 + std::sqrt(disc), 0.0};
    out.lambda_minus = {tr / 2 - std::sqrt(disc), 0.0};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linearized equations over the cone

std::pair<double, double> SampledFunction::at(double x) const {
  if (r.size() < 2 || x < r.front() || x > r.back()) {
    throw DomainError("SampledFunction::at: argument outside the sampled range");
  }
  std::size_t i = static_cast<std::size_t>(std::upper_bound(r.begin(), r.end(), x) - r.begin());
  i = std::clamp<std::size_t>(i, 1, r.size() - 1) - 1;
  const double h = r[i + 1] - r[i];
  const double t = (x - r[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double v = (2 * t3 - 3 * t2 + 1) * g[i] + (t3 - 2 * t2 + t) * h * dg[i] +
                   (-2 * t3 + 3 * t2) * g[i + 1] + (t3 - t2) * h * dg[i + 1];
  const double d = ((6 * t2 - 6 * t) * g[i] + (3 * t2 - 4 * t + 1) * h * dg[i] +
                    (-6 * t2 + 6 * t) * g[i + 1] + (3 * t2 - 2 * t) * h * dg[i + 1]) /
                   h;
  return {v, d};
}

namespace {

double linear_sign(EquationKind kind) {
  if (kind == EquationKind::LinearizedExpander) return 1.0;
  if (kind == EquationKind::LinearizedShrinker) return -1.0;
  throw DomainError("linear_basis: kind must be LinearizedExpander or LinearizedShrinker");
}

// g'' from g/(1+lam^2) g'' + ((p-1)/r + eps r/2) g' + (-eps/2 + (p-1)/r^2) g = 0.
double linear_accel(double eps, double lam2, int p, double r, double g, double dg) {
  return -(1 + lam2) * (((p - 1) / r + eps * r / 2) * dg + (-eps / 2 + (p - 1) / (r * r)) * g);
}

SampledFunction integrate_linear(double eps, double lam2, int p, double r_from, double r_to,
                                 double g0, double dg0, const IntegratorConfig& cfg,
                                 int samples_per_unit_log) {
  using Stepper = detail::Dop853<2>;
  using State = Stepper::State;
  auto rhs = [&](double r, const State& y, State& dy) {
    dy[0] = y[1];
    dy[1] = linear_accel(eps, lam2, p, r, y[0], y[1]);
  };
  detail::StepperOptions opt;
  opt.rel_tol = cfg.rel_tol;
  opt.abs_tol = cfg.abs_tol * std::min(1.0, std::abs(g0) + std::abs(dg0) * r_from);
  opt.first_step = 1e-2 * std::min(r_from, r_to);
  Stepper st(rhs, r_from, {g0, dg0}, r_to, opt);

  const double lo = std::min(r_from, r_to), hi = std::max(r_from, r_to);
  const int n = std::max(2, static_cast<int>(std::ceil(std::log(hi / lo) * samples_per_unit_log)) + 1);
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) grid[i] = lo * std::exp(std::log(hi / lo) * i / (n - 1));
  grid.front() = lo;
  grid.back() = hi;
  if (r_to < r_from) std::reverse(grid.begin(), grid.end());

  SampledFunction out;
  std::size_t next = 0;
  auto push = [&](double r, const State& y) {
    out.r.push_back(r);
    out.g.push_back(y[0]);
    out.dg.push_back(y[1]);
  };
  push(grid[next++], st.y());
  long steps = 0;
  while (next < grid.size()) {
    if (++steps > cfg.max_steps) throw NumericalError("linear_basis: step limit reached");
    st.step();
    if (!std::isfinite(st.y()[0]) || std::abs(st.y()[0]) > 1e12) {
      throw NumericalError("linear_basis: overflow (growing mode)");
    }
    const double dir = r_to > r_from ? 1.0 : -1.0;
    while (next < grid.size() && dir * (grid[next] - st.t()) <= 0) {
      push(grid[next], next + 1 == grid.size() ? st.y() : st.dense(grid[next]));
      ++next;
    }
  }
  if (r_to < r_from) {
    std::reverse(out.r.begin(), out.r.end());
    std::reverse(out.g.begin(), out.g.end());
    std::reverse(out.dg.begin(), out.dg.end());
  }
  return out;
}

}  // namespace

double linearized_residual(EquationKind kind, const FlowParams& params, double r, double g,
                           double dg, double ddg) {
  const double eps = linear_sign(kind);
  const double lam2 = std::pow(cone_slope(params).lambda_s, 2);
  return ddg - linear_accel(eps, lam2, params.p(), r, g, dg);
}

LinearBasis linear_basis(EquationKind kind, const FlowParams& params, const IntegratorConfig& cfg,
                         double forward_limit, int samples_per_unit_log) {
  const double eps = linear_sign(kind);
  const int n = params.n();
  if (n < 4 || n > 7) throw DomainError("linear_basis: oscillatory basis needs 4 <= n <= 7");
  cfg.check(kind);
  const double lam2 = std::pow(cone_slope(params).lambda_s, 2);
  const int p = params.p();

  const double beta = (n - 3) / 2.0;
  const double mu = std::sqrt(8.0 - (n - 5.0) * (n - 5.0)) / 2.0;
  const std::complex<double> s(-beta, mu);
  auto P = [&](std::complex<double> x) { return x * (x - 1.0) / (1.0 + lam2) + double(p - 1) * (x + 1.0); };
  const std::complex<double> c = -eps * (s - 1.0) / (2.0 * P(s + 2.0));

  LinearBasis out;
  const double r0 = out.r0;
  const std::complex<double> rs = std::exp(s * std::log(r0));
  const std::complex<double> h0 = rs * (1.0 + c * r0 * r0);
  const std::complex<double> dh0 = rs / r0 * (s + c * (s + 2.0) * r0 * r0);

  const double r_fwd = kind == EquationKind::LinearizedShrinker ? std::min(cfg.r_max, forward_limit) : cfg.r_max;
  out.h1 = integrate_linear(eps, lam2, p, r0, r_fwd, h0.real(), dh0.real(), cfg, samples_per_unit_log);
  out.h2 = integrate_linear(eps, lam2, p, r0, r_fwd, h0.imag(), dh0.imag(), cfg, samples_per_unit_log);
  if (kind == EquationKind::LinearizedShrinker) {
    const double R = cfg.r_max;
    const double g = R - 2.0 * (p - 1) / R;
    const double dg = 1.0 + 2.0 * (p - 1) / (R * R);
    out.g3 = integrate_linear(eps, lam2, p, R, r0, g, dg, cfg, samples_per_unit_log);
  }
  return out;
}

}  // namespace selfsim
