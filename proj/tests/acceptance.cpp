// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion numbers...]   (no arguments runs all twelve)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "selfsim/asymptotics.hpp"
#include "selfsim/evolve.hpp"
#include "selfsim/functionals.hpp"
#include "selfsim/shooting.hpp"

using namespace selfsim;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = 180.0 / kPi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int threads() { return std::max(1u, std::thread::hardware_concurrency()); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared between criteria 6 through 10.
const std::vector<ShrinkerRecord>& shrinkers22() {
  static const auto recs = find_shrinkers(6, FlowParams(2, 2), IntegratorConfig{});
  return recs;
}

IntegratorConfig continuation_config() {
  IntegratorConfig cfg;
  cfg.r_max = 10.0;
  cfg.max_ds = 0.2;
  return cfg;
}

const AlphaCurve& continuation_curve() {
  static const auto curve = alpha_curve(log_grid(1e-8, 10.0, 400), FlowParams(2, 2), continuation_config(), threads());
  return curve;
}

const std::map<int, ContinuationResult>& continuations() {
  static const auto res = [] {
    std::map<int, ContinuationResult> out;
    for (const auto& rec : shrinkers22()) {
      if (rec.k < 2) continue;
      out[rec.k] = count_continuations(rec.alpha_k, continuation_curve(), FlowParams(2, 2), continuation_config());
    }
    return out;
  }();
  return res;
}

ProfileCurve expander_profile(double a, const FlowParams& P, double r_max, double max_ds = 0.05) {
  IntegratorConfig cfg;
  cfg.r_max = r_max;
  cfg.max_ds = max_ds;
  return integrate_profile(EquationKind::Expander, series_start(EquationKind::Expander, a, P), P, cfg);
}

// ------------------------------------------------------------------ criteria

Outcome c1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto res = critical_angle(FlowParams::axial(3), IntegratorConfig{}, threads());
  const double deg = res.alpha_crit * kDeg;
  const double secs = seconds_since(t0);
  return {std::abs(deg - 66.04) <= 0.1 && secs <= 60,
          fmt("alpha_crit = %.4f deg (target 66.04 +/- 0.1) at b = %.5f, %.1f s", deg, res.argmin_a, secs)};
}

Outcome c2() {
  const auto t0 = std::chrono::steady_clock::now();
  const FlowParams P = FlowParams::axial(3);
  const auto tr = run_flow(sphere_profile(1.0, P), 1.0, P, SchemeConfig{});
  const double secs = seconds_since(t0);
  if (!tr.singular_time) return {false, "flow did not reach a singular stop"};
  return {std::abs(*tr.singular_time - 0.25) <= 1e-3 && secs <= 30,
          fmt("extinction at t = %.6f (target 0.25 +/- 0.001), %.2f s, %s kernel", *tr.singular_time, secs, tr.kernel.c_str())};
}

Outcome c3() {
  double worst = 0.0;
  int cases = 0;
  for (int n = 4; n <= 7; ++n) {
    const auto dc = decay_constants(n);
    for (int p = 2; p <= n - 2; ++p) {
      const auto sp = fixed_point_linearization(FlowParams(p, n - p));
      worst = std::max({worst, std::abs(sp.lambda_plus.real() + dc.beta + 1), std::abs(sp.lambda_plus.imag() - dc.mu),
                        std::abs(sp.lambda_minus.real() + dc.beta + 1), std::abs(sp.lambda_minus.imag() + dc.mu)});
      ++cases;
    }
  }
  return {worst <= 1e-12, fmt("largest eigenvalue deviation %.2e over %d (p,q) splits of n = 4..7", worst, cases)};
}

Outcome c4() {
  const int pairs[8][2] = {{2, 2}, {2, 3}, {3, 2}, {3, 3}, {2, 4}, {4, 2}, {3, 4}, {4, 3}};
  bool ok = true;
  std::string d;
  double worst_dist = 0.0, worst_secs = 0.0;
  int min_cross = 1 << 30;
  for (const auto& pq : pairs) {
    const auto t0 = std::chrono::steady_clock::now();
    IntegratorConfig cfg;
    cfg.r_max = 10.0;
    const auto c = companion(FlowParams(pq[0], pq[1]), cfg);
    const double secs = seconds_since(t0);
    ok = ok && c.distance < 0.05 && c.crossings >= 4 && secs <= 10;
    worst_dist = std::max(worst_dist, c.distance);
    worst_secs = std::max(worst_secs, secs);
    min_cross = std::min(min_cross, c.crossings);
    d += fmt(" (%d,%d):%d", pq[0], pq[1], c.crossings);
  }
  return {ok, fmt("max distance to fixed point %.4f (< 0.05), fewest cone crossings by r = 10: %d (need >= 4), slowest %.2f s; crossings", worst_dist,
                  min_cross, worst_secs) + d};
}

Outcome c5() {
  const auto t0 = std::chrono::steady_clock::now();
  const FlowParams P(2, 2);
  const auto dc = decay_constants(4);
  const auto ac = alpha_curve(log_grid(1e-4, 1e-1, 100), P, IntegratorConfig{}, threads());
  const double secs = seconds_since(t0);
  const auto& ex = ac.extrema;
  if (ex.size() < 3) return {false, fmt("only %zu extrema found", ex.size())};
  const double expect = std::exp(kPi / dc.mu);
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < ex.size(); ++i) worst = std::max(worst, std::abs(ex[i + 1].a / ex[i].a / expect - 1));
  // Least-squares slope of log|tan alpha - lambda_s| against log a at the extrema.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& e : ex) {
    const double x = std::log(e.a), y = std::log(std::abs(e.lambda_a - 1.0));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(ex.size());
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return {worst <= 0.05 && std::abs(slope - 1.5) <= 0.05 && secs <= 300,
          fmt("%zu extrema, a-ratio deviation %.3f%% from e^{pi/mu} = %.4f, envelope slope %.4f (target 1.5 +/- 0.05), %.1f s", ex.size(),
              100 * worst, expect, slope, secs)};
}

Outcome c6() {
  const auto t0 = std::chrono::steady_clock::now();
  const FlowParams P(2, 2);
  const auto& recs = shrinkers22();
  const double secs = seconds_since(t0);
  bool ok = recs.size() == 6;
  for (std::size_t i = 0; i < recs.size(); ++i) ok = ok && recs[i].k == int(i) + 1 && recs[i].crossings == recs[i].k;
  const auto rep = verify_shrinker_sequence(recs, P, decay_constants(4));
  double worst_a = 0.0, worst_g = 0.0;
  for (std::size_t i = 0; i < rep.k.size(); ++i) {
    if (rep.k[i] + 1 < 3) continue;  // pairs ending at k >= 3
    worst_a = std::max(worst_a, rep.a_ratio_dev[i]);
    worst_g = std::max(worst_g, rep.gap_ratio_dev[i]);
  }
  ok = ok && rep.alternating && worst_a <= 0.05 && worst_g <= 0.10 && secs <= 600;
  std::string counts;
  for (const auto& r : recs) counts += fmt("%d", r.crossings);
  return {ok, fmt("found %zu, crossing counts %s, alternating %s, a-ratio dev %.3f%%, gap-ratio dev %.3f%%, %.2f s", recs.size(), counts.c_str(),
                  rep.alternating ? "yes" : "no", 100 * worst_a, 100 * worst_g, secs)};
}

Outcome c7() {
  bool ok = true;
  std::string d;
  for (int k = 3; k <= 6; ++k) {
    const auto it = continuations().find(k);
    if (it == continuations().end()) return {false, fmt("N^%d missing", k)};
    ok = ok && std::abs(it->second.L - k) <= 3;
    d += fmt(" k=%d:L=%d", k, it->second.L);
  }
  return {ok, "|L - k| <= 3 for" + d};
}

Outcome c8() {
  const FlowParams P(2, 2);
  bool ok = true;
  std::string d = "drops";
  for (const auto& [k, res] : continuations()) {
    if (res.records.empty()) {
      ok = false;
      d += fmt(" k=%d:none", k);
      continue;
    }
    const auto shr = shrinker_profile(shrinkers22()[k - 1], P, IntegratorConfig{});
    const auto exp = expander_profile(res.records.front().a, P, 10.0);
    const auto drop = cone_intersection_drop(shr, exp, P);
    ok = ok && drop.drop() >= 2;
    d += fmt(" k=%d:%d->%d", k, drop.before, drop.after);
  }
  // Audit every evolved (2,2) test flow against the static companion.
  MovingReference ref;
  ref.profile = companion(P, IntegratorConfig{}).curve;
  struct Flow {
    const char* name;
    ProfileCurve init;
    double t0, t1, h;
  };
  const auto n1 = shrinker_profile(shrinkers22()[0], P, IntegratorConfig{});
  const auto n2 = shrinker_profile(shrinkers22()[1], P, IntegratorConfig{});
  const std::vector<Flow> flows = {{"expander a=1", expander_profile(1.0, P, 8.0), 1.0, 3.0, 0.03},
                                   {"expander a=0.3", expander_profile(0.3, P, 8.0), 1.0, 3.0, 0.03},
                                   {"N^1", n1, -1.0, -0.25, 0.01},
                                   {"N^2", n2, -1.0, -0.5, 0.01},
                                   {"sphere", sphere_profile(std::sqrt(6.0), P), -1.0, -0.05, 0.01}};
  d += "; audits";
  for (const auto& f : flows) {
    SchemeConfig sc;
    sc.resample_tol = f.h;
    const auto tr = run_flow(f.init, f.t1, P, sc, f.t0);
    const auto rep = intersection_audit(tr, ref);
    ok = ok && rep.nonincreasing;
    d += fmt(" %s:%s(%d->%d)", f.name, rep.nonincreasing ? "ok" : "UP", rep.counts.front(), rep.counts.back());
  }
  return {ok, d};
}

Outcome c9() {
  bool ok = true;
  std::string d;
  const double e = std::exp(1.0);
  // Three evolved flows.
  {
    struct Trace {
      const char* name;
      FlowParams P;
      ProfileCurve init;
      double t0, t1;
      HeatKernelSpec spec;
    };
    const FlowParams A(1, 2), B(2, 2);
    const std::vector<Trace> traces = {
        {"sphere off-centre", A, sphere_profile(2.0, A), 0.0, 0.9, {0.3, 0.4, 1.2, 0, 4.0}},
        {"cylinder", A, cylinder_profile(1.0, 12.0, A), 0.0, 0.2, {0.0, 0.0, 0.5, 0, 4.0}},
        {"expander", B, expander_profile(1.0, B, 8.0), 1.0, 2.0, {0.0, 0.0, 3.0, 0, 4.0}},
    };
    d += "violations";
    for (const auto& t : traces) {
      SchemeConfig sc;
      sc.resample_tol = 0.02;
      const auto tr = run_flow(t.init, t.t1, t.P, sc, t.t0);
      const auto dt = density_trace(tr, t.P, t.spec);
      ok = ok && dt.max_upward_violation <= 1e-3;
      d += fmt(" %s:%.1e", t.name, dt.max_upward_violation);
    }
  }
  // Constant along rescaled shrinkers; N^1 is cut at its read-out radius, so
  // the missing tail mass enters through err.
  {
    const FlowParams A(1, 2), B(2, 2);
    SchemeConfig sc;
    const auto ts = run_flow(sphere_profile(2.0, A), -0.2, A, sc, -1.0);
    double dev = 0.0;
    for (const auto& s : density_trace(ts, A, HeatKernelSpec{}).samples) dev = std::max(dev, std::abs(s.phi - 4 / e) - s.err);
    const auto n1 = shrinker_profile(shrinkers22()[0], B, IntegratorConfig{});
    const auto tn = run_flow(n1, -0.25, B, sc, -1.0);
    for (const auto& s : density_trace(tn, B, HeatKernelSpec{}).samples) dev = std::max(dev, std::abs(s.phi - std::sqrt(2 * kPi / e)) - s.err);
    ok = ok && dev <= 1e-4;
    d += fmt("; shrinker deviation beyond tail bound %.1e", dev);
  }
  // Closed forms.
  {
    const FlowParams A(1, 2);
    HeatKernelSpec spec;
    const double s = gaussian_density(sphere_profile(2.0, A), A, spec, -1.0).phi;
    const double c = gaussian_density(cylinder_profile(std::sqrt(2.0), 30.0, A, 3000), A, spec, -1.0).phi;
    spec.n = 3;
    const double pl = hyperplane_density(spec, -1.0);
    const double dev = std::max({std::abs(s - 4 / e), std::abs(c - std::sqrt(2 * kPi / e)), std::abs(pl - 1.0)});
    ok = ok && dev <= 1e-6;
    d += fmt("; closed forms within %.1e", dev);
  }
  // Kernel identity.
  {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> N;
    std::uniform_int_distribution<int> dim(2, 8);
    double worst = 0.0;
    for (int it = 0; it < 1000; ++it) {
      const int n = dim(rng);
      std::vector<double> x(n);
      for (auto& v : x) v = N(rng);
      std::vector<std::vector<double>> frame;
      while (static_cast<int>(frame.size()) < n - 1) {
        std::vector<double> v(n);
        for (auto& c : v) c = N(rng);
        for (const auto& f : frame) {
          double dd = 0;
          for (int i = 0; i < n; ++i) dd += v[i] * f[i];
          for (int i = 0; i < n; ++i) v[i] -= dd * f[i];
        }
        double nn = 0;
        for (double c : v) nn += c * c;
        if (nn < 1e-12) continue;
        for (auto& c : v) c /= std::sqrt(nn);
        frame.push_back(v);
      }
      HeatKernelSpec spec;
      spec.n = n;
      spec.x0_r = N(rng);
      spec.x0_u = N(rng);
      const double tau = 0.05 + 3 * std::abs(N(rng));
      double y2 = 0;
      for (int i = 0; i < n; ++i) {
        const double c = i == 0 ? spec.x0_r : (i == 1 ? spec.x0_u : 0.0);
        y2 += (x[i] - c) * (x[i] - c);
      }
      const double scale = heat_kernel(x, -tau, spec) * ((n - 1) / tau + y2 / (tau * tau));
      if (scale > 0) worst = std::max(worst, std::abs(kernel_identity_residual(x, -tau, frame, spec)) / scale);
    }
    ok = ok && worst <= 1e-10;
    d += fmt("; kernel identity %.1e", worst);
  }
  return {ok, d};
}

Outcome c10() {
  const FlowParams P(2, 2);
  bool ok = true;
  double worst_j = 0.0, worst_k = 0.0, worst_order = 0.0;
  int nj = 0, nk = 0;
  for (const auto& rec : shrinkers22()) {
    const auto prof = shrinker_profile(rec, P, IntegratorConfig{});
    const double L = prof.back().s;
    const auto fv = first_variation(prof, Functional::J, NormalPerturbation::bump(0.4 * L, 0.3 * L), 1e-2);
    worst_j = std::max(worst_j, fv.relative);
    worst_order = std::max(worst_order, std::abs(fv.richardson_order - 2));
    ++nj;
  }
  for (const auto& [k, res] : continuations()) {
    for (const auto& rec : res.records) {
      // Small-a expanders hug the cone, so their certificate scale is tiny and
      // the quadrature needs denser samples.
      const auto ex = expander_profile(rec.a, P, 6.0, 0.01);
      const double L = ex.back().s;
      const auto fv = first_variation(ex, Functional::K, NormalPerturbation::bump(0.3 * L, 0.2 * L), 5e-2, 5.0);
      worst_k = std::max(worst_k, fv.relative);
      worst_order = std::max(worst_order, std::abs(fv.richardson_order - 2));
      ++nk;
    }
  }
  ok = worst_j <= 1e-6 && worst_k <= 1e-6 && worst_order <= 0.1 && nj == 6 && nk > 0;
  return {ok, fmt("J at %d shrinkers: max relative %.1e; K at %d expanders: max relative %.1e; Richardson order within %.3f of 2", nj, worst_j, nk,
                  worst_k, worst_order)};
}

Outcome c11() {
  const FlowParams P(1, 2);
  bool ok = true;
  std::string d = "Gauss-Bonnet";
  struct Surface {
    const char* name;
    ProfileCurve curve;
    int genus;
  };
  const std::vector<Surface> surfaces = {{"sphere", sphere_profile(0.5, P, 2000), 0},
                                         {"catenoid", catenoid_profile(0.5, 2.5), 0},
                                         {"torus", torus_profile(1.0, 0.5), 1}};
  for (const auto& s : surfaces) {
    bool holds = true;
    for (const auto& r : gauss_bonnet_sweep(s.curve, P, s.genus)) {
      holds = holds && r.holds && r.cutoff_holds;
    }
    ok = ok && holds;
    d += fmt(" %s:%s", s.name, holds ? "holds" : "FAILS");
  }
  auto ellipse = [](double a, double b, int n) {
    std::vector<SpacePoint> pts;
    for (int i = 0; i < n; ++i) pts.push_back({a * std::cos(2 * kPi * i / n), b * std::sin(2 * kPi * i / n), 0.0});
    return pts;
  };
  double tc_dev = 0.0;
  for (const auto& c : {ellipse(1, 1, 1000), ellipse(5, 5, 1000), ellipse(2, 1, 4000), ellipse(3, 1, 8000)}) {
    tc_dev = std::max(tc_dev, std::abs(total_curvature({c}).integral - 2 * kPi));
  }
  ok = ok && tc_dev <= 1e-6;
  d += fmt("; total curvature within %.1e of 2 pi", tc_dev);
  // Planes x_1 = h cut the sphere of radius 1 in circles where the bound is sharp.
  double eq_dev = 0.0;
  bool eq_ok = true;
  for (double h : {0.0, 0.25, 0.5, 0.75, 0.95}) {
    ProfileCurve plane;
    plane.params = P;
    for (int i = 0; i <= 200; ++i) {
      ProfilePoint pt;
      pt.r = h;
      pt.u = 1e-3 + 2.0 * i / 200;
      pt.s = pt.u - 1e-3;
      pt.theta = kPi / 2;
      plane.points.push_back(pt);
    }
    const auto checks = sphere_section_checks(plane, P, 1.0);
    eq_ok = eq_ok && checks.size() == 1;
    for (const auto& c : checks) {
      eq_ok = eq_ok && c.holds;
      eq_dev = std::max(eq_dev, std::abs(c.bound - c.k) / c.k);
    }
  }
  d += fmt("; plane-sphere equality gap %.1e", eq_dev);
  return {ok, d};
}

Outcome c12() {
  const auto tj = triple_junction(FlowParams(2, 2), IntegratorConfig{});
  const double err = std::abs(tj.crossing_angle - 2 * kPi / 3);
  const double cyl = std::abs(tj.cylinder_angle - 3 * kPi / 4);
  const double sph = std::abs(tj.sphere_angle - kPi / 2);
  const bool ok = tj.a_star > std::sqrt(2.0) && tj.a_star < std::sqrt(6.0) && err <= 1e-6 && cyl <= 1e-9 && sph <= 1e-9;
  return {ok, fmt("a* = %.8f in (sqrt 2, sqrt 6), junction angle error %.1e rad, endpoints %.9f / %.9f deg", tj.a_star, err, tj.cylinder_angle * kDeg,
                  tj.sphere_angle * kDeg)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"critical aperture", c1},       {"sphere extinction", c2},     {"spectral identity", c3},   {"companion spiral", c4},
      {"expander asymptotics", c5},    {"shrinker family", c6},       {"nonuniqueness count", c7}, {"intersection drop", c8},
      {"monotonicity suite", c9},      {"variational certificates", c10}, {"Gauss-Bonnet and curve lemmas", c11}, {"triple junction", c12}};
  std::vector<int> pick;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (c < 1 || c > 12) {
      std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
      return 2;
    }
    pick.push_back(c);
  }
  if (pick.empty())
    for (int i = 1; i <= 12; ++i) pick.push_back(i);

  int failed = 0;
  for (int c : pick) {
    Outcome o;
    try {
      o = criteria[c - 1].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c, criteria[c - 1].first, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
