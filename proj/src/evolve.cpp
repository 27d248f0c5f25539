#include "selfsim/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

#include <boost/math/interpolators/cubic_hermite.hpp>
#include <json.hpp>

#include "evolve_kernels.hpp"

namespace selfsim {

void SchemeConfig::check() const {
  if (!(dt_safety > 0 && dt_safety <= 1)) throw DomainError("SchemeConfig: dt_safety must lie in (0, 1]");
  if (!(resample_tol > 0)) throw DomainError("SchemeConfig: resample_tol must be positive");
  if (snapshot_dt < 0) throw DomainError("SchemeConfig: snapshot_dt must be nonnegative");
  if (max_steps <= 0) throw DomainError("SchemeConfig: max_steps must be positive");
  if (min_points < 4) throw DomainError("SchemeConfig: min_points must be at least 4");
}

bool avx2_available() { return detail::cpu_has_avx2(); }

namespace {

enum class EndKind { AxisR, AxisU, Free };

struct Markers {
  std::vector<double> r, u;
  EndKind start = EndKind::Free, end = EndKind::Free;
  std::size_t size() const { return r.size(); }
};

double ghost_coord(EndKind kind, bool is_r, double x_end, double x_next) {
  switch (kind) {
    case EndKind::AxisR: return is_r ? -x_next : x_next;
    case EndKind::AxisU: return is_r ? x_next : -x_next;
    case EndKind::Free: return 2 * x_end - x_next;
  }
  return 0.0;
}

void ghosted(const Markers& m, std::vector<double>& gr, std::vector<double>& gu) {
  const std::size_t n = m.size();
  gr.resize(n + 2);
  gu.resize(n + 2);
  std::copy(m.r.begin(), m.r.end(), gr.begin() + 1);
  std::copy(m.u.begin(), m.u.end(), gu.begin() + 1);
  gr[0] = ghost_coord(m.start, true, m.r[0], m.r[1]);
  gu[0] = ghost_coord(m.start, false, m.u[0], m.u[1]);
  gr[n + 1] = ghost_coord(m.end, true, m.r[n - 1], m.r[n - 2]);
  gu[n + 1] = ghost_coord(m.end, false, m.u[n - 1], m.u[n - 2]);
}

struct Frame {
  double Tr, Tu, k;
};

// Tangent and curvature at ghosted index i, same formulas as the kernels.
Frame frame_at(const std::vector<double>& r, const std::vector<double>& u, std::size_t i) {
  const double ar = r[i] - r[i - 1], au = u[i] - u[i - 1];
  const double br = r[i + 1] - r[i], bu = u[i + 1] - u[i];
  const double la = std::sqrt(ar * ar + au * au);
  const double lb = std::sqrt(br * br + bu * bu);
  const double tar = ar / la, tau = au / la;
  const double tbr = br / lb, tbu = bu / lb;
  const double sr = tar + tbr, su = tau + tbu;
  const double ls = std::sqrt(sr * sr + su * su);
  const double Tr = sr / ls, Tu = su / ls;
  const double w = 2.0 / (la + lb);
  return {Tr, Tu, (tbu - tau) * w * Tr - (tbr - tar) * w * Tu};
}

void run_kernel(KernelChoice kernel, const detail::VelocityArgs& args) {
  if (kernel == KernelChoice::Avx2) detail::normal_velocity_avx2(args);
  else detail::normal_velocity_scalar(args);
}

KernelChoice resolve_kernel(KernelChoice k) {
  if (k == KernelChoice::Auto) return detail::cpu_has_avx2() ? KernelChoice::Avx2 : KernelChoice::Scalar;
  if (k == KernelChoice::Avx2 && !detail::cpu_has_avx2()) {
    throw DomainError("run_flow: AVX2 kernel requested on a CPU without AVX2");
  }
  return k;
}

struct Velocity {
  std::vector<double> vr, vu, H;  // ghosted indexing
};

void velocities(const Markers& m, const FlowParams& params, KernelChoice kernel,
                std::vector<double>& gr, std::vector<double>& gu, Velocity& v) {
  ghosted(m, gr, gu);
  const std::size_t n = gr.size();
  v.vr.resize(n);
  v.vu.resize(n);
  v.H.resize(n);
  const double pm1 = params.p() - 1, qm1 = params.q() - 1;
  run_kernel(kernel, {gr.data(), gu.data(), n, pm1, qm1, v.vr.data(), v.vu.data(), v.H.data()});
  // Axis markers: the 0/0 term is replaced by its limit, the curvature itself.
  auto axis_fix = [&](EndKind kind, std::size_t i) {
    if (kind == EndKind::Free) return;
    const Frame f = frame_at(gr, gu, i);
    double h;
    if (kind == EndKind::AxisR) {
      h = f.k + pm1 * f.k - qm1 * f.Tr / gu[i];
      v.vr[i] = 0.0;
      v.vu[i] = h * f.Tr;
    } else {
      h = f.k + qm1 * f.k + pm1 * f.Tu / gr[i];
      v.vr[i] = -(h * f.Tu);
      v.vu[i] = 0.0;
    }
    v.H[i] = h;
  };
  axis_fix(m.start, 1);
  axis_fix(m.end, n - 2);
}

std::vector<double> chord_lengths(const Markers& m) {
  std::vector<double> s(m.size(), 0.0);
  for (std::size_t i = 1; i < m.size(); ++i) s[i] = s[i - 1] + std::hypot(m.r[i] - m.r[i - 1], m.u[i] - m.u[i - 1]);
  return s;
}

// Derivative of f against chord length from three (possibly unequal) spacings.
double three_point(double fm, double f0, double fp, double h1, double h2) {
  return -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp;
}

Markers resample(const Markers& m, double h, int min_points) {
  using boost::math::interpolators::cubic_hermite;
  const std::size_t n = m.size();
  std::vector<double> gr, gu;
  ghosted(m, gr, gu);
  const auto s = chord_lengths(m);
  const double L = s.back();
  std::vector<double> dr(n), du(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double h1 = std::hypot(gr[i + 1] - gr[i], gu[i + 1] - gu[i]);
    const double h2 = std::hypot(gr[i + 2] - gr[i + 1], gu[i + 2] - gu[i + 1]);
    dr[i] = three_point(gr[i], gr[i + 1], gr[i + 2], h1, h2);
    du[i] = three_point(gu[i], gu[i + 1], gu[i + 2], h1, h2);
  }
  auto s2 = s;
  cubic_hermite<std::vector<double>> fr(std::vector<double>(s), std::vector<double>(m.r), std::move(dr));
  cubic_hermite<std::vector<double>> fu(std::move(s2), std::vector<double>(m.u), std::move(du));

  const int segs = std::max(min_points, static_cast<int>(std::ceil(L / h - 1e-9)));
  Markers out;
  out.start = m.start;
  out.end = m.end;
  out.r.resize(segs + 1);
  out.u.resize(segs + 1);
  for (int j = 0; j <= segs; ++j) {
    const double sj = std::min(L, L * j / segs);
    out.r[j] = fr(sj);
    out.u[j] = fu(sj);
  }
  out.r.front() = m.r.front();
  out.u.front() = m.u.front();
  out.r.back() = m.r.back();
  out.u.back() = m.u.back();
  return out;
}

EndKind detect_end(const ProfilePoint& p, double h, const char* which) {
  if (p.r <= 0.05 * h && std::abs(std::sin(p.theta)) <= 0.05) return EndKind::AxisR;
  if (p.u <= 0.05 * h && std::abs(std::cos(p.theta)) <= 0.05) return EndKind::AxisU;
  if (p.r <= 0 || p.u <= 0) {
    throw DomainError(std::string("run_flow: ") + which + " end meets an axis non-orthogonally");
  }
  return EndKind::Free;
}

Markers markers_from(const ProfileCurve& c, double h, int min_points) {
  if (c.size() < 3) throw DomainError("run_flow: initial curve needs at least 3 points");
  Markers m;
  m.start = detect_end(c.front(), h, "first");
  m.end = detect_end(c.back(), h, "last");
  for (const auto& p : c.points) {
    if (p.r < 0 || p.u < 0 || !std::isfinite(p.r) || !std::isfinite(p.u)) {
      throw DomainError("run_flow: initial curve leaves the closed quadrant");
    }
    m.r.push_back(p.r);
    m.u.push_back(p.u);
  }
  if (m.start == EndKind::AxisR) m.r.front() = 0.0;
  if (m.start == EndKind::AxisU) m.u.front() = 0.0;
  if (m.end == EndKind::AxisR) m.r.back() = 0.0;
  if (m.end == EndKind::AxisU) m.u.back() = 0.0;
  // Drop coincident samples before building the spline.
  Markers clean;
  clean.start = m.start;
  clean.end = m.end;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!clean.r.empty() && std::hypot(m.r[i] - clean.r.back(), m.u[i] - clean.u.back()) < 1e-12 * h) continue;
    clean.r.push_back(m.r[i]);
    clean.u.push_back(m.u[i]);
  }
  if (clean.size() < 3) throw DomainError("run_flow: initial curve is degenerate");
  return resample(clean, h, min_points);
}

ProfileCurve decorate(const Markers& m, const FlowParams& params) {
  std::vector<double> gr, gu;
  ghosted(m, gr, gu);
  ProfileCurve c;
  c.params = params;
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i > 0) s += std::hypot(m.r[i] - m.r[i - 1], m.u[i] - m.u[i - 1]);
    const Frame f = frame_at(gr, gu, i + 1);
    c.points.push_back({s, m.r[i], m.u[i], std::atan2(f.Tu, f.Tr), f.k});
  }
  return c;
}

struct Spacing {
  double lo = INFINITY, hi = 0.0;
};

Spacing spacing(const Markers& m) {
  Spacing sp;
  for (std::size_t i = 1; i < m.size(); ++i) {
    const double dr = m.r[i] - m.r[i - 1], du = m.u[i] - m.u[i - 1];
    const double d = std::sqrt(dr * dr + du * du);
    sp.lo = std::min(sp.lo, d);
    sp.hi = std::max(sp.hi, d);
  }
  return sp;
}

bool needs_resample(const Spacing& sp, double h) {
  return sp.hi > 2 * sp.lo || sp.lo < 0.5 * h || sp.hi > 2 * h;
}

// Smallest local minimum of u away from a u-axis end, and for curves with both
// ends on the axes also the bounding extent.
double singular_scale(const Markers& m) {
  const std::size_t n = m.size();
  double scale = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    if ((i == 0 && m.start == EndKind::AxisU) || (i + 1 == n && m.end == EndKind::AxisU)) continue;
    const bool left = i == 0 || m.u[i] <= m.u[i - 1];
    const bool right = i + 1 == n || m.u[i] <= m.u[i + 1];
    if (left && right) scale = std::min(scale, m.u[i]);
  }
  if (m.start != EndKind::Free && m.end != EndKind::Free) {
    double ext = 0.0;
    for (std::size_t i = 0; i < n; ++i) ext = std::max({ext, m.r[i], m.u[i]});
    scale = std::min(scale, ext);
  }
  return scale;
}

double min_u_off_axis(const Markers& m) {
  double lo = INFINITY;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if ((i == 0 && m.start == EndKind::AxisU) || (i + 1 == m.size() && m.end == EndKind::AxisU)) continue;
    lo = std::min(lo, m.u[i]);
  }
  return lo;
}

Polyline polyline_of(const Markers& m) {
  Polyline p(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = {m.r[i], m.u[i]};
  return p;
}

}  // namespace

void normal_velocity(const std::vector<double>& r, const std::vector<double>& u,
                     const FlowParams& params, KernelChoice kernel, std::vector<double>& vr,
                     std::vector<double>& vu, std::vector<double>& H) {
  if (r.size() != u.size() || r.size() < 3) throw DomainError("normal_velocity: need matching arrays of >= 3 markers");
  const auto k = resolve_kernel(kernel);
  vr.assign(r.size(), 0.0);
  vu.assign(r.size(), 0.0);
  H.assign(r.size(), 0.0);
  run_kernel(k, {r.data(), u.data(), r.size(), double(params.p() - 1), double(params.q() - 1), vr.data(),
                 vu.data(), H.data()});
}

FlowTrajectory run_flow(const ProfileCurve& init, double t_end, const FlowParams& params,
                        const SchemeConfig& scheme, double t0) {
  scheme.check();
  if (!(t_end > t0)) throw DomainError("run_flow: t_end must exceed the start time");
  const auto kernel = resolve_kernel(scheme.kernel);
  const double h = scheme.resample_tol;
  Markers m = markers_from(init, h, scheme.min_points);
  // Ray boundary: a free end slides along the ray from the origin through its
  // starting position, which dilations leave invariant.
  const double start_ray = m.r.front() > 0 ? m.u.front() / m.r.front() : 0.0;
  const double end_ray = m.r.back() > 0 ? m.u.back() / m.r.back() : 0.0;
  FlowTrajectory traj;
  traj.scheme = scheme;
  traj.kernel = kernel == KernelChoice::Avx2 ? "avx2" : "scalar";
  const double snap_dt = scheme.snapshot_dt > 0 ? scheme.snapshot_dt : (t_end - t0) / 100;
  const int stiff = std::max(params.p(), params.q());

  std::vector<Polyline> refs;
  for (const auto& c : scheme.reference_curves) refs.push_back(to_polyline(c));

  std::vector<double> gr, gu;
  Velocity v;
  double t = t0;
  auto snapshot = [&](double max_H) {
    SnapshotRecord rec;
    rec.t = t;
    rec.max_H = max_H;
    rec.min_u = min_u_off_axis(m);
    const auto poly = polyline_of(m);
    for (const auto& ref : refs) rec.counts.push_back(intersection_count(poly, ref));
    traj.states.push_back({t, decorate(m, params)});
    traj.snapshots.push_back(std::move(rec));
  };
  auto current_max_H = [&]() {
    velocities(m, params, kernel, gr, gu, v);
    double mh = 0.0;
    for (std::size_t i = 1; i + 1 < v.H.size(); ++i) mh = std::max(mh, std::abs(v.H[i]));
    return mh;
  };

  snapshot(current_max_H());
  long n_snap = 1;
  double next_snap = t0 + snap_dt;

  auto estimate_singular_time = [&]() {
    const auto& last = traj.steps.back();
    std::size_t j = traj.steps.size() - 1;
    while (j > 0 && traj.steps[j].scale < 2 * last.scale) --j;
    const auto& ref = traj.steps[j];
    if (!(ref.scale > last.scale) || ref.t >= last.t) return last.t;
    const double slope = (ref.scale * ref.scale - last.scale * last.scale) / (last.t - ref.t);
    return last.t + last.scale * last.scale / slope;
  };

  Spacing sp = spacing(m);
  for (long step = 0;; ++step) {
    if (step >= scheme.max_steps) throw NumericalError("run_flow: step limit reached");
    velocities(m, params, kernel, gr, gu, v);
    double max_H = 0.0;
    for (std::size_t i = 1; i + 1 < v.H.size(); ++i) max_H = std::max(max_H, std::abs(v.H[i]));
    if (!std::isfinite(max_H)) throw NumericalError("run_flow: non-finite velocity");

    const double hmin = sp.lo;
    const double dt_stab = scheme.dt_safety * hmin * hmin / (2.0 * stiff);
    double dt = std::min({dt_stab, next_snap - t, t_end - t});
    bool singular = dt_stab < 1e-14 * std::max(1.0, std::abs(t));
    if (!singular) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        m.r[i] += dt * v.vr[i + 1];
        m.u[i] += dt * v.vu[i + 1];
      }
      if (m.start == EndKind::AxisR) m.r.front() = 0.0;
      if (m.start == EndKind::AxisU) m.u.front() = 0.0;
      if (m.end == EndKind::AxisR) m.r.back() = 0.0;
      if (m.end == EndKind::AxisU) m.u.back() = 0.0;
      if (scheme.outer == OuterBoundary::Ray) {
        if (m.end == EndKind::Free) m.u.back() = end_ray * m.r.back();
        if (m.start == EndKind::Free) m.u.front() = start_ray * m.r.front();
      }
      if (dt == next_snap - t) t = next_snap;
      else if (dt == t_end - t) t = t_end;
      else t += dt;
    }

    StepRecord rec;
    rec.t = t;
    rec.dt = dt;
    rec.max_H = max_H;
    if (!singular) {
      for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.u[i] < 0 || m.r[i] < 0) {
          // A marker has crossed an axis: the curve pinched onto it.
          singular = true;
          break;
        }
      }
    }
    if (!singular) {
      sp = spacing(m);
      if (needs_resample(sp, h)) {
        m = resample(m, h, scheme.min_points);
        sp = spacing(m);
        rec.resampled = true;
      }
    }
    rec.min_u = min_u_off_axis(m);
    rec.scale = singular_scale(m);
    traj.steps.push_back(rec);
    if (singular || rec.scale < 10 * h) {
      traj.stop = FlowStop::Singular;
      traj.singular_time = estimate_singular_time();
      snapshot(max_H);
      return traj;
    }
    if (t >= next_snap || t >= t_end) {
      snapshot(max_H);
      ++n_snap;
      next_snap = std::min(t_end, t0 + snap_dt * n_snap);
      if (t >= t_end) return traj;
    }
  }
}

ProfileCurve sphere_profile(double R, const FlowParams& params, int samples) {
  if (!(R > 0) || samples < 3) throw DomainError("sphere_profile: needs R > 0 and >= 3 samples");
  ProfileCurve c;
  c.params = params;
  for (int i = 0; i < samples; ++i) {
    const double phi = std::numbers::pi / 2 * i / (samples - 1);
    ProfilePoint p{R * phi, R * std::sin(phi), R * std::cos(phi), -phi, -1.0 / R};
    if (i == 0) p.r = 0.0;
    if (i + 1 == samples) {
      p.r = R;
      p.u = 0.0;
    }
    c.points.push_back(p);
  }
  return c;
}

ProfileCurve cylinder_profile(double R, double r_max, const FlowParams& params, int samples) {
  if (!(R > 0) || !(r_max > 0) || samples < 3) throw DomainError("cylinder_profile: needs R, r_max > 0");
  ProfileCurve c;
  c.params = params;
  for (int i = 0; i < samples; ++i) {
    const double r = r_max * i / (samples - 1);
    c.points.push_back({r, r, R, 0.0, 0.0});
  }
  return c;
}

ProfileCurve dilate(const ProfileCurve& curve, double factor) {
  if (!(factor > 0)) throw DomainError("dilate: factor must be positive");
  ProfileCurve out = curve;
  for (auto& p : out.points) {
    p.s *= factor;
    p.r *= factor;
    p.u *= factor;
    p.k /= factor;
  }
  out.termination.location.s *= factor;
  out.termination.location.r *= factor;
  out.termination.location.u *= factor;
  out.termination.location.k /= factor;
  return out;
}

namespace {

// Cubic Hermite refinement of a profile using its stored tangents.
Polyline densify(const ProfileCurve& c, int factor) {
  Polyline out;
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    const auto& a = c.points[i];
    const auto& b = c.points[i + 1];
    const double ds = b.s - a.s;
    for (int j = 0; j < factor; ++j) {
      const double t = double(j) / factor;
      const double t2 = t * t, t3 = t2 * t;
      const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
      out.push_back({h00 * a.r + h10 * ds * std::cos(a.theta) + h01 * b.r + h11 * ds * std::cos(b.theta),
                     h00 * a.u + h10 * ds * std::sin(a.theta) + h01 * b.u + h11 * ds * std::sin(b.theta)});
    }
  }
  out.push_back({c.back().r, c.back().u});
  return out;
}

double extent(const Polyline& p) {
  double e = 0.0;
  for (const auto& [r, u] : p) e = std::max(e, std::hypot(r, u));
  return e;
}

double segment_distance(double px, double py, const std::pair<double, double>& a,
                        const std::pair<double, double>& b) {
  const double dx = b.first - a.first, dy = b.second - a.second;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - a.first) * dx + (py - a.second) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - a.first - t * dx, py - a.second - t * dy);
}

// Point-to-polyline distances with block bounding boxes for pruning.
class DistanceIndex {
 public:
  explicit DistanceIndex(const Polyline& p) : p_(p) {
    for (std::size_t i = 0; i + 1 < p.size(); i += kBlock) {
      Box b{INFINITY, -INFINITY, INFINITY, -INFINITY, i, std::min(i + kBlock, p.size() - 1)};
      for (std::size_t j = i; j <= b.last; ++j) {
        b.x0 = std::min(b.x0, p[j].first);
        b.x1 = std::max(b.x1, p[j].first);
        b.y0 = std::min(b.y0, p[j].second);
        b.y1 = std::max(b.y1, p[j].second);
      }
      boxes_.push_back(b);
    }
  }

  double operator()(double x, double y) const {
    if (p_.size() == 1) return std::hypot(x - p_[0].first, y - p_[0].second);
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(boxes_.size());
    for (std::size_t b = 0; b < boxes_.size(); ++b) {
      const auto& bx = boxes_[b];
      const double dx = std::max({bx.x0 - x, 0.0, x - bx.x1});
      const double dy = std::max({bx.y0 - y, 0.0, y - bx.y1});
      order.push_back({std::hypot(dx, dy), b});
    }
    std::sort(order.begin(), order.end());
    double best = INFINITY;
    for (const auto& [bound, b] : order) {
      if (bound >= best) break;
      for (std::size_t j = boxes_[b].first; j < boxes_[b].last; ++j) {
        best = std::min(best, segment_distance(x, y, p_[j], p_[j + 1]));
      }
    }
    return best;
  }

 private:
  static constexpr std::size_t kBlock = 32;
  struct Box {
    double x0, x1, y0, y1;
    std::size_t first, last;
  };
  const Polyline& p_;
  std::vector<Box> boxes_;
};

}  // namespace

double hausdorff_distance(const Polyline& a, const Polyline& b, double window) {
  if (a.empty() || b.empty()) throw DomainError("hausdorff_distance: empty curve");
  const DistanceIndex da(a), db(b);
  double d = 0.0;
  bool any = false;
  for (const auto& [x, y] : a) {
    if (std::hypot(x, y) > window) continue;
    any = true;
    d = std::max(d, db(x, y));
  }
  for (const auto& [x, y] : b) {
    if (std::hypot(x, y) > window) continue;
    any = true;
    d = std::max(d, da(x, y));
  }
  if (!any) throw DomainError("hausdorff_distance: empty overlap window");
  return d;
}

double self_similarity_residual(const FlowTrajectory& traj, const ProfileCurve& profile,
                                ScalingMode mode) {
  if (traj.states.empty()) throw DomainError("self_similarity_residual: empty trajectory");
  const Polyline ref = densify(profile, 8);
  const double ref_ext = extent(ref);
  double worst = 0.0;
  for (const auto& st : traj.states) {
    if (mode == ScalingMode::Shrink ? !(st.t < 0) : !(st.t > 0)) {
      throw DomainError("self_similarity_residual: state time has the wrong sign for the scaling mode");
    }
    const double f = 1.0 / std::sqrt(std::abs(st.t));
    Polyline p = to_polyline(st.curve);
    for (auto& [r, u] : p) {
      r *= f;
      u *= f;
    }
    const double window = std::min(extent(p), ref_ext);
    if (!(window > 0)) throw DomainError("self_similarity_residual: empty overlap window");
    worst = std::max(worst, hausdorff_distance(p, ref, window * (1 + 1e-12)));
  }
  return worst;
}

AuditReport intersection_audit(const FlowTrajectory& traj, const MovingReference& ref) {
  AuditReport rep;
  const Polyline base = to_polyline(ref.profile);
  for (const auto& st : traj.states) {
    Polyline q = base;
    if (ref.kind == MovingReference::Kind::RescaledShrinker) {
      if (!(st.t < 0)) throw DomainError("intersection_audit: rescaled shrinker reference needs t < 0");
      const double f = std::sqrt(-st.t);
      for (auto& [r, u] : q) {
        r *= f;
        u *= f;
      }
    }
    const auto res = intersection_count(to_polyline(st.curve), q);
    rep.times.push_back(st.t);
    rep.counts.push_back(res.crossings);
    const bool unclear = res.ambiguous || res.tangencies > 0;
    rep.interpolated.push_back(unclear);
    if (res.tangencies > 0) rep.events.push_back({st.t, "tangency (" + std::to_string(res.tangencies) + ")"});
    if (res.ambiguous) rep.events.push_back({st.t, "ambiguous contact"});
  }
  // Unclear counts take the value of the nearest clear neighbour in time,
  // preferring the earlier one.
  const std::size_t n = rep.counts.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!rep.interpolated[i]) continue;
    std::optional<int> prev, next;
    for (std::size_t j = i; j-- > 0;) {
      if (!rep.interpolated[j]) {
        prev = rep.counts[j];
        break;
      }
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!rep.interpolated[j]) {
        next = rep.counts[j];
        break;
      }
    }
    if (prev) rep.counts[i] = *prev;
    else if (next) rep.counts[i] = *next;
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (rep.counts[i] > rep.counts[i - 1]) rep.nonincreasing = false;
  }
  return rep;
}

ConeDrop cone_intersection_drop(const ProfileCurve& shrinker, const ProfileCurve& expander,
                                const FlowParams& params) {
  const Ray cone{cone_slope(params).lambda_s};
  return {intersection_count(shrinker, cone).crossings, intersection_count(expander, cone).crossings};
}

std::vector<std::filesystem::path> write_trajectory_archive(const FlowTrajectory& traj,
                                                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "snapshot_%05zu.csv", i);
    const auto path = dir / name;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_trajectory_archive: cannot write " + path.string());
    write_profile_csv(os, traj.states[i].curve);
    files.push_back(path);
    const auto& snap = traj.snapshots[i];
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& c : snap.counts) counts.push_back(c.crossings);
    index.push_back({{"t", snap.t},
                     {"file", std::string(name)},
                     {"min_u", std::isfinite(snap.min_u) ? nlohmann::json(snap.min_u) : nlohmann::json(nullptr)},
                     {"max_H", snap.max_H},
                     {"counts", counts}});
  }
  const auto ipath = dir / "index.json";
  std::ofstream os(ipath);
  if (!os) throw std::runtime_error("write_trajectory_archive: cannot write " + ipath.string());
  os << index.dump(2) << "\n";
  files.push_back(ipath);
  return files;
}

}  // namespace selfsim
