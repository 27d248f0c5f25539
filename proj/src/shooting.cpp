#include "selfsim/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <thread>

#include "selfsim/quadrature.hpp"

namespace selfsim {

namespace {

constexpr double kPi = std::numbers::pi;

// Runs f(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& f) {
  const std::size_t workers = std::clamp<std::size_t>(threads > 0 ? threads : 1, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) f(i);
    });
  }
  for (auto& t : pool) t.join();
}

double golden_min(const std::function<double(double)>& f, double lo, double hi, double rel_tol) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  // Work in log a: extrema are spaced geometrically.
  double x0 = std::log(lo), x3 = std::log(hi);
  double x1 = x3 - g * (x3 - x0), x2 = x0 + g * (x3 - x0);
  double f1 = f(std::exp(x1)), f2 = f(std::exp(x2));
  while (x3 - x0 > rel_tol) {
    if (f1 < f2) {
      x3 = x2;
      x2 = x1;
      f2 = f1;
      x1 = x3 - g * (x3 - x0);
      f1 = f(std::exp(x1));
    } else {
      x0 = x1;
      x1 = x2;
      f1 = f2;
      x2 = x0 + g * (x3 - x0);
      f2 = f(std::exp(x2));
    }
  }
  return std::exp(0.5 * (x0 + x3));
}

}  // namespace

CompanionResult companion(const FlowParams& params, const IntegratorConfig& cfg, double a) {
  const int n = params.n();
  if (n < 4 || n > 7) throw DomainError("companion: needs 4 <= n <= 7");
  const auto cone = cone_slope(params);
  CompanionResult out;
  out.curve = integrate_profile(EquationKind::Minimal, series_start(EquationKind::Minimal, a, params),
                                params, cfg);
  if (out.curve.termination.tag != TerminationTag::ReachedRmax) {
    throw NumericalError("companion: integration ended with " + to_string(out.curve.termination.tag));
  }
  out.crossings = intersection_count(out.curve, Ray{cone.lambda_s}).crossings;
  const auto& last = out.curve.back();
  out.X = last.u / last.r;
  out.Y = std::tan(last.theta);
  out.distance = std::hypot(out.X - cone.lambda_s, out.Y - cone.lambda_s);
  return out;
}

double asymptotic_slope(EquationKind kind, const FlowParams& params, const ProfilePoint& pt) {
  double eps = 0.0;
  if (kind == EquationKind::Expander) eps = 1.0;
  else if (kind == EquationKind::Shrinker) eps = -1.0;
  else throw DomainError("asymptotic_slope: kind must be Expander or Shrinker");
  const int p = params.p();
  const int q = params.q();
  const double r = pt.r;
  const double avg = 0.5 * (pt.u / r + std::tan(pt.theta));
  // u = lam r + c1/r + c3/r^3 gives avg = lam - c3/r^4.
  double lam = avg;
  for (int it = 0; it < 4; ++it) {
    const double c1 = eps * ((p - 1) * lam - (q - 1) / lam);
    const double c3 = eps * c1 * (2.0 / (1 + lam * lam) - (p - 1) + (q - 1) / (lam * lam)) / 2.0;
    lam = avg + c3 / std::pow(r, 4);
  }
  return lam;
}

ExpanderRecord expander_slope(double a, const FlowParams& params, const IntegratorConfig& cfg) {
  if (!(a > 0)) throw DomainError("expander_slope: a must be positive");
  ExpanderRecord rec;
  rec.a = a;
  const auto curve = integrate_profile(EquationKind::Expander,
                                       series_start(EquationKind::Expander, a, params), params, cfg);
  if (curve.termination.tag != TerminationTag::ReachedRmax) {
    rec.status = "integration ended with " + to_string(curve.termination.tag);
    return rec;
  }
  // Slope estimates at r_max and at 0.9 r_max; their difference is the drift.
  const CurveInterpolant interp(curve);
  const auto& pts = curve.points;
  const double r_ref = 0.9 * cfg.r_max;
  auto it = std::find_if(pts.begin(), pts.end(), [&](const ProfilePoint& p) { return p.r >= r_ref; });
  ProfilePoint ref = *it;
  if (it != pts.begin()) {
    const std::size_t i = static_cast<std::size_t>(it - pts.begin()) - 1;
    double lo = 0.0, hi = 1.0;
    for (int k = 0; k < 60; ++k) {
      const double mid = 0.5 * (lo + hi);
      (interp.at(i, mid).r < r_ref ? lo : hi) = mid;
    }
    ref = interp.at(i, 0.5 * (lo + hi));
  }
  const double lam_end = asymptotic_slope(EquationKind::Expander, params, pts.back());
  const double lam_ref = asymptotic_slope(EquationKind::Expander, params, ref);
  rec.lambda_a = lam_end;
  rec.alpha_a = std::atan(lam_end);
  // Error bar and drift are measured on the angle, which stays well scaled
  // for steep ends.
  rec.error_bar = std::abs(rec.alpha_a - std::atan(lam_ref));
  const double drift = rec.error_bar / (pts.back().r - ref.r);
  rec.stabilized = drift < 1e-8;
  if (!rec.stabilized) rec.status = "NotStabilized";
  if (params.p() >= 2) {
    rec.crossings = intersection_count(curve, Ray{cone_slope(params).lambda_s}).crossings;
  }
  return rec;
}

std::vector<double> log_grid(double lo, double hi, int per_decade) {
  if (!(lo > 0) || !(hi > lo) || per_decade < 1) throw DomainError("log_grid: need 0 < lo < hi");
  const int n = static_cast<int>(std::ceil(std::log10(hi / lo) * per_decade)) + 1;
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  g.back() = hi;
  return g;
}

AlphaCurve alpha_curve(const std::vector<double>& grid, const FlowParams& params,
                       const IntegratorConfig& cfg, int threads) {
  if (!std::is_sorted(grid.begin(), grid.end())) throw DomainError("alpha_curve: grid must be ascending");
  AlphaCurve out;
  out.records.resize(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    try {
      out.records[i] = expander_slope(grid[i], params, cfg);
    } catch (const std::exception& e) {
      out.records[i].a = grid[i];
      out.records[i].status = e.what();
    }
  });
  const auto& rs = out.records;
  std::vector<std::pair<std::size_t, double>> candidates;  // (index, +1 max / -1 min)
  for (std::size_t i = 1; i + 1 < rs.size(); ++i) {
    if (!rs[i - 1].status.empty() && rs[i - 1].status != "NotStabilized") continue;
    const double l = rs[i - 1].alpha_a, c = rs[i].alpha_a, r = rs[i + 1].alpha_a;
    if (c > l && c >= r) candidates.emplace_back(i, 1.0);
    if (c < l && c <= r) candidates.emplace_back(i, -1.0);
  }
  out.extrema.resize(candidates.size());
  parallel_for(candidates.size(), threads, [&](std::size_t j) {
    const auto [i, sgn] = candidates[j];
    const double a = golden_min(
        [&, sgn = sgn](double x) { return -sgn * expander_slope(x, params, cfg).alpha_a; },
        grid[i - 1], grid[i + 1], 1e-10);
    out.extrema[j] = expander_slope(a, params, cfg);
  });
  return out;
}

CriticalAngleResult critical_angle(const FlowParams& params, const IntegratorConfig& cfg, int threads) {
  if (params.p() != 1) throw DomainError("critical_angle: requires p = 1 (rotation about one axis)");
  CriticalAngleResult out;
  double lo = 0.05, hi = 20.0;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto grid = log_grid(lo, hi, 40);
    out.sweep.assign(grid.size(), {});
    parallel_for(grid.size(), threads, [&](std::size_t i) { out.sweep[i] = expander_slope(grid[i], params, cfg); });
    const auto best = std::min_element(out.sweep.begin(), out.sweep.end(),
                                       [](const auto& x, const auto& y) { return x.alpha_a < y.alpha_a; });
    const std::size_t i = static_cast<std::size_t>(best - out.sweep.begin());
    if (i == 0 || i + 1 == grid.size()) {
      if (attempt == 0) {
        out.widened = true;
        lo /= 20;
        hi *= 20;
        continue;
      }
      throw NumericalError("critical_angle: minimum of alpha(b) sits on the sweep boundary");
    }
    out.argmin_a = golden_min([&](double b) { return expander_slope(b, params, cfg).alpha_a; },
                              grid[i - 1], grid[i + 1], 1e-9);
    out.alpha_crit = expander_slope(out.argmin_a, params, cfg).alpha_a;
    return out;
  }
  throw NumericalError("critical_angle: sweep failed");
}

std::vector<double> solutions_at_angle(double alpha, const std::vector<ExpanderRecord>& sweep,
                                       const FlowParams& params, const IntegratorConfig& cfg) {
  std::vector<double> roots;
  for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
    double lo = sweep[i].a, hi = sweep[i + 1].a;
    double flo = sweep[i].alpha_a - alpha;
    const double fhi = sweep[i + 1].alpha_a - alpha;
    if ((flo > 0) == (fhi > 0)) continue;
    for (int it = 0; it < 200 && (hi - lo) > 1e-13 * hi; ++it) {
      const double mid = std::sqrt(lo * hi);
      const double fm = expander_slope(mid, params, cfg).alpha_a - alpha;
      if ((fm > 0) == (flo > 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(std::sqrt(lo * hi));
  }
  return roots;
}

std::string to_string(ShrinkerTag tag) {
  switch (tag) {
    case ShrinkerTag::Up: return "Up";
    case ShrinkerTag::Down: return "Down";
    case ShrinkerTag::Complete: return "Complete";
  }
  return "Unknown";
}

ShrinkerClass classify_shrinker(double a, const FlowParams& params, const IntegratorConfig& cfg) {
  if (params.p() < 2) throw DomainError("classify_shrinker: requires p >= 2");
  IntegratorConfig c = cfg;
  c.detect_escape = true;
  const auto curve = integrate_profile(EquationKind::Shrinker, series_start(EquationKind::Shrinker, a, params),
                                       params, c);
  ShrinkerClass out;
  out.termination = curve.termination.tag;
  switch (curve.termination.tag) {
    case TerminationTag::EscapeUp:
      out.tag = ShrinkerTag::Up;
      out.escape_r = curve.termination.location.r;
      break;
    case TerminationTag::EscapeDown:
    case TerminationTag::AxisHit:
      out.tag = ShrinkerTag::Down;
      out.escape_r = curve.termination.location.r;
      break;
    case TerminationTag::ReachedRmax:
      out.tag = ShrinkerTag::Complete;
      break;
    default:
      out.tag = ShrinkerTag::Complete;
      out.ambiguous = true;
      break;
  }
  return out;
}


namespace {

struct Bracket {
  double lo, hi;
  ShrinkerTag tag_lo, tag_hi;
};

ProfileCurve shrinker_curve(double a, const FlowParams& params, const IntegratorConfig& cfg) {
  IntegratorConfig c = cfg;
  c.detect_escape = true;
  return integrate_profile(EquationKind::Shrinker, series_start(EquationKind::Shrinker, a, params), params, c);
}

// Sample of a graph-like profile at abscissa r (first crossing of r).
std::optional<ProfilePoint> point_at_r(const ProfileCurve& curve, const CurveInterpolant& interp, double r) {
  const auto& pts = curve.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    if (pts[i].r <= r && pts[i + 1].r >= r) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (interp.at(i, mid).r < r ? lo : hi) = mid;
      }
      return interp.at(i, 0.5 * (lo + hi));
    }
  }
  return std::nullopt;
}

Polyline truncated(const ProfileCurve& curve, double r_cut) {
  Polyline pl;
  for (const auto& p : curve.points) {
    if (p.r > r_cut) break;
    pl.emplace_back(p.r, p.u);
  }
  return pl;
}

}  // namespace

ProfileCurve shrinker_profile(const ShrinkerRecord& rec, const FlowParams& params,
                              const IntegratorConfig& cfg) {
  auto curve = shrinker_curve(rec.a_k, params, cfg);
  // Beyond the read-out window the bisected profile leaves the cone.
  const double r_cut = rec.readout_r2 > 0 ? rec.readout_r2 : cfg.r_max;
  std::size_t keep = 0;
  while (keep < curve.points.size() && curve.points[keep].r <= r_cut) ++keep;
  if (keep < curve.points.size()) {
    curve.points.resize(keep);
    curve.termination = {TerminationTag::ReachedRmax, curve.points.back()};
  }
  return curve;
}

std::vector<ShrinkerRecord> find_shrinkers(int k_max, const FlowParams& params,
                                           const IntegratorConfig& cfg) {
  const int n = params.n();
  if (params.p() < 2 || n < 4 || n > 7) throw DomainError("find_shrinkers: needs p >= 2 and 4 <= n <= 7");
  if (k_max < 1 || k_max > 8) throw DomainError("find_shrinkers: k_max must lie in [1, 8]");
  const double lam_s = cone_slope(params).lambda_s;
  const double mu = std::sqrt(8.0 - (n - 5.0) * (n - 5.0)) / 2.0;
  const double spacing = std::exp(kPi / mu);

  // N^1 is the cylinder u = sqrt(2(q-1)): an exact shrinker crossing the cone
  // once. Its neighbours on both sides turn up, so it is not a flip of the
  // classification and is recorded directly.
  std::vector<ShrinkerRecord> out;
  {
    ShrinkerRecord cyl;
    cyl.k = 1;
    cyl.a_k = cyl.a_lo = cyl.a_hi = std::sqrt(2.0 * (params.q() - 1));
    cyl.tag_lo = cyl.tag_hi = ShrinkerTag::Up;
    cyl.cylinder = true;
    IntegratorConfig c = cfg;
    c.r_max = std::min(cfg.r_max, 6.0);
    const auto curve = integrate_profile(EquationKind::Shrinker, series_start(EquationKind::Shrinker, cyl.a_k, params),
                                         params, c);
    cyl.readout_r1 = 0.0;
    cyl.readout_r2 = curve.back().r;
    cyl.crossings = intersection_count(curve, Ray{lam_s}).crossings;
    out.push_back(cyl);
  }
  if (k_max == 1) return out;

  // The conical members N^2, N^3, ... sit at the Up/Down flips below the
  // shrinking sphere (which itself returns to the axis).
  const double a_sphere = std::sqrt(2.0 * (n - 1));
  const double a_floor = a_sphere * std::pow(spacing, -(k_max + 1.0));
  auto grid = log_grid(a_floor, 0.95 * a_sphere, 40);
  std::reverse(grid.begin(), grid.end());

  const int wanted = k_max - 1;
  std::vector<Bracket> brackets;
  ShrinkerTag prev = classify_shrinker(grid[0], params, cfg).tag;
  for (std::size_t i = 1; i < grid.size() && static_cast<int>(brackets.size()) < wanted; ++i) {
    const ShrinkerTag cur = classify_shrinker(grid[i], params, cfg).tag;
    if (cur != prev && cur != ShrinkerTag::Complete && prev != ShrinkerTag::Complete) {
      brackets.push_back({grid[i], grid[i - 1], cur, prev});
    }
    prev = cur;
  }
  if (static_cast<int>(brackets.size()) < wanted) {
    throw NumericalError("find_shrinkers: found only " + std::to_string(brackets.size()) +
                         " classification flips");
  }

  for (std::size_t j = 0; j < brackets.size(); ++j) {
    Bracket b = brackets[j];
    while (b.hi - b.lo > 1e-12 * b.hi) {
      const double mid = 0.5 * (b.lo + b.hi);
      if (mid <= b.lo || mid >= b.hi) {
        throw NumericalError("find_shrinkers: PrecisionExhausted at a = " + std::to_string(mid));
      }
      const ShrinkerTag t = classify_shrinker(mid, params, cfg).tag;
      if (t == b.tag_lo) {
        b.lo = mid;
      } else if (t == b.tag_hi) {
        b.hi = mid;
      } else {
        // Ambiguous (reached r_max): the midpoint is as good as converged.
        b.lo = b.hi = mid;
        break;
      }
    }
    ShrinkerRecord rec;
    rec.k = static_cast<int>(j) + 2;
    rec.a_lo = b.lo;
    rec.a_hi = b.hi;
    rec.tag_lo = b.tag_lo;
    rec.tag_hi = b.tag_hi;
    rec.a_k = 0.5 * (b.lo + b.hi);
    rec.bracket_width = b.hi - b.lo;

    const auto c_lo = shrinker_curve(b.lo, params, cfg);
    const auto c_hi = shrinker_curve(b.hi, params, cfg);
    const auto c_mid = shrinker_curve(rec.a_k, params, cfg);
    // The bracket ends agree up to the growing mode; trust the profile where
    // their slope read-outs coincide.
    const CurveInterpolant i_lo(c_lo), i_hi(c_hi), i_mid(c_mid);
    const double r_end = std::min({c_lo.back().r, c_hi.back().r, c_mid.back().r});
    std::vector<std::pair<double, double>> track;
    for (double r = 1.0; r < r_end; r += 0.02) {
      const auto p_lo = point_at_r(c_lo, i_lo, r), p_hi = point_at_r(c_hi, i_hi, r),
                 p_mid = point_at_r(c_mid, i_mid, r);
      if (!p_lo || !p_hi || !p_mid) break;
      const double l_lo = asymptotic_slope(EquationKind::Shrinker, params, *p_lo);
      const double l_hi = asymptotic_slope(EquationKind::Shrinker, params, *p_hi);
      const double l_mid = asymptotic_slope(EquationKind::Shrinker, params, *p_mid);
      if (std::abs(l_lo - l_hi) > 1e-3 * std::abs(l_mid - lam_s)) break;
      track.emplace_back(r, l_mid);
    }
    if (track.empty()) throw NumericalError("find_shrinkers: no trustworthy slope window for k = " + std::to_string(rec.k));
    const double r2 = track.back().first;
    const double r1 = std::max(1.0, 0.5 * r2);
    double acc = 0.0;
    int cnt = 0;
    for (const auto& [r, lam] : track) {
      if (r >= r1) {
        acc += lam;
        ++cnt;
      }
    }
    rec.lambda_k = acc / cnt;
    rec.alpha_k = std::atan(rec.lambda_k);
    rec.readout_r1 = r1;
    rec.readout_r2 = r2;
    rec.crossings = intersection_count(truncated(c_mid, r2), Ray{lam_s}).crossings;
    out.push_back(rec);
  }
  return out;
}

ContinuationResult count_continuations(double alpha, const AlphaCurve& curve,
                                       const FlowParams& params, const IntegratorConfig& cfg) {
  if (!(alpha < kPi / 2)) throw DomainError("count_continuations: alpha must be below pi/2");
  std::vector<ExpanderRecord> pts;
  for (const auto& r : curve.records) {
    if (r.status.empty() || r.status == "NotStabilized") pts.push_back(r);
  }
  pts.insert(pts.end(), curve.extrema.begin(), curve.extrema.end());
  std::sort(pts.begin(), pts.end(), [](const auto& x, const auto& y) { return x.a < y.a; });
  if (pts.size() < 2) throw DomainError("count_continuations: alpha curve too short");
  const double amin = std::min_element(pts.begin(), pts.end(), [](const auto& x, const auto& y) {
                        return x.alpha_a < y.alpha_a;
                      })->alpha_a;
  if (!(alpha > amin)) throw DomainError("count_continuations: alpha below the minimum of the sweep");

  ContinuationResult out;
  const auto roots = solutions_at_angle(alpha, pts, params, cfg);
  for (double a : roots) out.records.push_back(expander_slope(a, params, cfg));
  out.L = static_cast<int>(roots.size());
  // Near the small-a end alpha(a) keeps oscillating about alpha_s; if the last
  // resolved oscillation still reaches alpha, roots below the sweep are missed.
  const double lam_s = params.p() >= 2 ? cone_slope(params).lambda_s : 0.0;
  const double tail = std::abs(std::tan(pts.front().alpha_a) - lam_s);
  out.lower_bound = params.p() >= 2 && tail >= 0.5 * std::abs(std::tan(alpha) - lam_s);
  return out;
}

double diagonal_crossing_angle(double a, const FlowParams& params, const IntegratorConfig& cfg,
                               double* b_out) {
  IntegratorConfig c = cfg;
  c.r_max = std::min(cfg.r_max, 2.0 * std::sqrt(2.0 * (params.n() - 1)));
  c.detect_escape = false;
  const auto curve = integrate_profile(EquationKind::Shrinker, series_start(EquationKind::Shrinker, a, params),
                                       params, c);
  const CurveInterpolant interp(curve);
  const auto& pts = curve.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double f0 = pts[i].u - pts[i].r;
    const double f1 = pts[i + 1].u - pts[i + 1].r;
    if (f0 > 0 && f1 <= 0) {
      double lo = 0.0, hi = 1.0;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto p = interp.at(i, mid);
        (p.u - p.r > 0 ? lo : hi) = mid;
      }
      const auto p = interp.at(i, 0.5 * (lo + hi));
      if (b_out) *b_out = 0.5 * (p.r + p.u);
      return kPi - std::abs(p.theta - kPi / 4);
    }
  }
  throw NumericalError("diagonal_crossing_angle: profile does not cross u = r");
}

TripleJunctionResult triple_junction(const FlowParams& params, const IntegratorConfig& cfg) {
  if (params.p() != params.q()) throw DomainError("triple_junction: requires p = q");
  const int n = params.n();
  if (n != 4 && n != 6) throw DomainError("triple_junction: requires n in {4, 6}");
  TripleJunctionResult out;
  double lo = std::sqrt(n - 2.0), hi = std::sqrt(2.0 * (n - 1));
  out.cylinder_angle = diagonal_crossing_angle(lo, params, cfg);
  out.sphere_angle = diagonal_crossing_angle(hi, params, cfg);
  const double target = 2 * kPi / 3;
  if (!(out.cylinder_angle > target && out.sphere_angle < target)) {
    throw NumericalError("triple_junction: crossing angle not monotone across the bracket");
  }
  double b = 0.0, phi = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    phi = diagonal_crossing_angle(mid, params, cfg, &b);
    out.a_star = mid;
    if (std::abs(phi - target) < 1e-12 || hi - lo < 1e-14 * mid) break;
    (phi > target ? lo : hi) = mid;
  }
  out.b = b;
  out.crossing_angle = phi;
  // Directions leaving the junction: back along the profile, back along its
  // mirror image in u = r, and out along the diagonal.
  const double t_profile = kPi / 4 - (kPi - phi);  // tangent angle, below the diagonal
  std::array<double, 3> dirs = {t_profile + kPi, kPi / 2 - (t_profile + kPi), kPi / 4};
  for (auto& d : dirs) d = std::fmod(std::fmod(d, 2 * kPi) + 2 * kPi, 2 * kPi);
  std::sort(dirs.begin(), dirs.end());
  out.angles = {dirs[1] - dirs[0], dirs[2] - dirs[1], 2 * kPi - (dirs[2] - dirs[0])};
  return out;
}

}  // namespace selfsim
