#include "selfsim/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace selfsim {
namespace {

std::pair<std::array<double, kGaussOrder>, std::array<double, kGaussOrder>> make_gauss() {
  std::array<double, kGaussOrder> x{};
  std::array<double, kGaussOrder> w{};
  constexpr int n = kGaussOrder;
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = 0.5 * (1.0 - z);
    w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

const auto& gauss_table() {
  static const auto table = make_gauss();
  return table;
}

double quintic_hermite(double t, double y0, double d0, double s0, double y1, double d1,
                       double s1, double h) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  const double t4 = t3 * t;
  const double t5 = t4 * t;
  const double h0 = 1 - 10 * t3 + 15 * t4 - 6 * t5;
  const double h1 = t - 6 * t3 + 8 * t4 - 3 * t5;
  const double h2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5);
  const double h3 = 0.5 * (t3 - 2 * t4 + t5);
  const double h4 = -4 * t3 + 7 * t4 - 3 * t5;
  const double h5 = 10 * t3 - 15 * t4 + 6 * t5;
  return h0 * y0 + h1 * h * d0 + h2 * h * h * s0 + h3 * h * h * s1 + h4 * h * d1 + h5 * y1;
}

double cubic_hermite(double t, double y0, double d0, double y1, double d1, double h) {
  const double t2 = t * t;
  const double t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0 + (-2 * t3 + 3 * t2) * y1 +
         (t3 - t2) * h * d1;
}

}  // namespace

const std::array<double, kGaussOrder>& gauss_nodes() { return gauss_table().first; }
const std::array<double, kGaussOrder>& gauss_weights() { return gauss_table().second; }

CurveInterpolant::CurveInterpolant(const ProfileCurve& curve) : curve_(&curve) {
  const auto& pts = curve.points;
  if (pts.size() < 2) throw DomainError("CurveInterpolant: need at least two samples");
  const std::size_t n = pts.size();
  dk_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0) {
      dk_[i] = (pts[1].k - pts[0].k) / (pts[1].s - pts[0].s);
    } else if (i + 1 == n) {
      dk_[i] = (pts[i].k - pts[i - 1].k) / (pts[i].s - pts[i - 1].s);
    } else {
      const double hm = pts[i].s - pts[i - 1].s;
      const double hp = pts[i + 1].s - pts[i].s;
      dk_[i] = (hm * hm * (pts[i + 1].k - pts[i].k) + hp * hp * (pts[i].k - pts[i - 1].k)) /
               (hm * hp * (hm + hp));
    }
  }
}

double CurveInterpolant::panel_length(std::size_t i) const {
  return curve_->points[i + 1].s - curve_->points[i].s;
}

ProfilePoint CurveInterpolant::at(std::size_t i, double t) const {
  const auto& a = curve_->points[i];
  const auto& b = curve_->points[i + 1];
  const double h = b.s - a.s;
  ProfilePoint out;
  out.s = a.s + t * h;
  const double ca = std::cos(a.theta), sa = std::sin(a.theta);
  const double cb = std::cos(b.theta), sb = std::sin(b.theta);
  out.r = quintic_hermite(t, a.r, ca, -a.k * sa, b.r, cb, -b.k * sb, h);
  out.u = quintic_hermite(t, a.u, sa, a.k * ca, b.u, sb, b.k * cb, h);
  out.theta = cubic_hermite(t, a.theta, a.k, b.theta, b.k, h);
  out.k = cubic_hermite(t, a.k, dk_[i], b.k, dk_[i + 1], h);
  return out;
}

ProfilePoint CurveInterpolant::at_arclength(double s) const {
  const auto& pts = curve_->points;
  if (s <= pts.front().s) return pts.front();
  if (s >= pts.back().s) return pts.back();
  const auto it = std::upper_bound(pts.begin(), pts.end(), s,
                                   [](double v, const ProfilePoint& p) { return v < p.s; });
  const std::size_t i = static_cast<std::size_t>(it - pts.begin()) - 1;
  return at(i, (s - pts[i].s) / panel_length(i));
}

double integrate_arclength(const ProfileCurve& curve, const ProfileIntegrand& f,
                           std::optional<double> window) {
  if (curve.points.size() < 2) return 0.0;
  const CurveInterpolant interp(curve);
  const auto& xs = gauss_nodes();
  const auto& ws = gauss_weights();
  const double w2 = window ? (*window) * (*window) : 0.0;

  auto integrate_piece = [&](std::size_t i, double t0, double t1) {
    const double len = interp.panel_length(i) * (t1 - t0);
    double acc = 0.0;
    for (int g = 0; g < kGaussOrder; ++g) {
      acc += ws[g] * f(interp.at(i, t0 + (t1 - t0) * xs[g]));
    }
    return acc * len;
  };
  auto outside = [&](std::size_t i, double t) {
    const auto p = interp.at(i, t);
    return p.r * p.r + p.u * p.u - w2;
  };
  auto crossing = [&](std::size_t i, double lo, double hi) {
    double flo = outside(i, lo);
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double fm = outside(i, mid);
      if ((fm > 0) == (flo > 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  };

  double total = 0.0;
  for (std::size_t i = 0; i < interp.panels(); ++i) {
    if (interp.panel_length(i) <= 0.0) continue;
    if (!window) {
      total += integrate_piece(i, 0.0, 1.0);
      continue;
    }
    // Split the panel at ball-boundary crossings found on a coarse probe grid.
    constexpr int kProbe = 4;
    std::vector<double> cuts{0.0};
    double prev = outside(i, 0.0);
    for (int j = 1; j <= kProbe; ++j) {
      const double t = static_cast<double>(j) / kProbe;
      const double cur = outside(i, t);
      if ((cur > 0) != (prev > 0)) cuts.push_back(crossing(i, static_cast<double>(j - 1) / kProbe, t));
      prev = cur;
    }
    cuts.push_back(1.0);
    for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double mid = 0.5 * (cuts[c] + cuts[c + 1]);
      if (outside(i, mid) <= 0.0) total += integrate_piece(i, cuts[c], cuts[c + 1]);
    }
  }
  return total;
}

double integrate_surface(const ProfileCurve& curve, const ProfileIntegrand& f,
                         std::optional<double> window) {
  const int p = curve.params.p();
  const int q = curve.params.q();
  const double orbit = unit_sphere_area(p - 1) * unit_sphere_area(q - 1);
  const auto weighted = [&](const ProfilePoint& pt) {
    const double rr = std::max(pt.r, 0.0);
    const double uu = std::max(pt.u, 0.0);
    return f(pt) * std::pow(rr, p - 1) * std::pow(uu, q - 1);
  };
  return orbit * integrate_arclength(curve, weighted, window);
}

}  // namespace selfsim
