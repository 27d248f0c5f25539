#include "selfsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "selfsim/quadrature.hpp"

namespace selfsim {

FlowParams::FlowParams(int p, int q) : p_(p), q_(q) {
  if (p < 1) throw DomainError("FlowParams: p must be >= 1");
  if (q < 2) throw DomainError("FlowParams: q must be >= 2");
}

FlowParams FlowParams::axial(int n) { return FlowParams(1, n - 1); }

std::string to_string(TerminationTag tag) {
  switch (tag) {
    case TerminationTag::None: return "None";
    case TerminationTag::ReachedRmax: return "ReachedRmax";
    case TerminationTag::VerticalTangent: return "VerticalTangent";
    case TerminationTag::AxisHit: return "AxisHit";
    case TerminationTag::EscapeUp: return "EscapeUp";
    case TerminationTag::EscapeDown: return "EscapeDown";
    case TerminationTag::StepLimit: return "StepLimit";
    case TerminationTag::Overflow: return "Overflow";
  }
  return "Unknown";
}

void validate(const ProfileCurve& curve) {
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const auto& p = curve.points[i];
    if (!std::isfinite(p.s) || !std::isfinite(p.r) || !std::isfinite(p.u) ||
        !std::isfinite(p.theta) || !std::isfinite(p.k)) {
      throw DomainError("profile sample " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && !(p.s > curve.points[i - 1].s)) {
      throw DomainError("profile arclength not strictly increasing at sample " +
                        std::to_string(i));
    }
  }
}

double unit_sphere_area(int m) {
  if (m < 0) throw DomainError("unit_sphere_area: m must be >= 0");
  const double h = 0.5 * (m + 1);
  return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

ConeData cone_slope(const FlowParams& params) {
  if (params.p() < 2) throw DomainError("cone_slope: no Simons cone for p = 1");
  const double lambda = std::sqrt(static_cast<double>(params.q() - 1) / (params.p() - 1));
  return {lambda, std::atan(lambda)};
}

namespace {

void require_off_axis(const ProfilePoint& pt, const FlowParams& params, const char* who) {
  if (!(pt.u > 0.0) || (params.p() > 1 && !(pt.r > 0.0))) {
    throw DomainError(std::string(who) + ": point lies on a symmetry axis");
  }
}

}  // namespace

std::vector<PrincipalCurvature> principal_curvatures(const ProfilePoint& pt,
                                                     const FlowParams& params) {
  require_off_axis(pt, params, "principal_curvatures");
  const int p = params.p();
  const int q = params.q();
  const double third = p > 1 ? std::sin(pt.theta) / pt.r : 0.0;
  return {{pt.k, 1}, {-std::cos(pt.theta) / pt.u, q - 1}, {third, p - 1}};
}

double mean_curvature(const ProfilePoint& pt, const FlowParams& params) {
  require_off_axis(pt, params, "mean_curvature");
  double h = pt.k - (params.q() - 1) * std::cos(pt.theta) / pt.u;
  if (params.p() > 1) h += (params.p() - 1) * std::sin(pt.theta) / pt.r;
  return h;
}

double second_fundamental_norm(const ProfilePoint& pt, const FlowParams& params) {
  double acc = 0.0;
  for (const auto& pc : principal_curvatures(pt, params)) acc += pc.multiplicity * pc.value * pc.value;
  return acc;
}

double weighted_area(const ProfileCurve& curve, Weight weight, std::optional<double> window) {
  if (weight == Weight::GaussianPlus && !window) {
    throw DomainError("weighted_area: gaussian_plus weight requires a finite window");
  }
  ProfileIntegrand f;
  switch (weight) {
    case Weight::Unit: f = [](const ProfilePoint&) { return 1.0; }; break;
    case Weight::GaussianMinus:
      f = [](const ProfilePoint& p) { return std::exp(-(p.r * p.r + p.u * p.u) / 4.0); };
      break;
    case Weight::GaussianPlus:
      f = [](const ProfilePoint& p) { return std::exp((p.r * p.r + p.u * p.u) / 4.0); };
      break;
  }
  const double value = integrate_surface(curve, f, window);
  if (!std::isfinite(value)) throw NumericalError("weighted_area: non-finite integral");
  return value;
}

// ---------------------------------------------------------------------------
// Intersection counting

namespace {

constexpr double kCrossTol = 1e-9;

// Tolerances scale with the distance from the origin, so counts are invariant
// under dilation (the cone is).
double local_scale(double r, double u) { return kCrossTol * std::hypot(r, u); }

// Signed distance of c from the line through a, b (positive to the left).
double side(const std::pair<double, double>& a, const std::pair<double, double>& b,
            const std::pair<double, double>& c) {
  const double dx = b.first - a.first;
  const double dy = b.second - a.second;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return 0.0;
  return (dx * (c.second - a.second) - dy * (c.first - a.first)) / len;
}

IntersectionResult count_signed(const std::vector<double>& sep, const std::vector<double>& tol) {
  IntersectionResult res;
  int last_sign = 0;
  bool touched = false;
  for (std::size_t i = 0; i < sep.size(); ++i) {
    if (std::abs(sep[i]) <= tol[i]) {
      touched = true;
      continue;
    }
    const int sgn = sep[i] > 0 ? 1 : -1;
    if (last_sign != 0) {
      if (sgn != last_sign) {
        ++res.crossings;
      } else if (touched) {
        ++res.tangencies;
      }
    }
    last_sign = sgn;
    touched = false;
  }
  return res;
}

struct Box {
  double r0, r1, u0, u1;
  bool overlaps(const Box& o, double pad) const {
    return r0 - pad <= o.r1 && o.r0 - pad <= r1 && u0 - pad <= o.u1 && o.u0 - pad <= u1;
  }
};

std::vector<Box> block_boxes(const Polyline& pl, std::size_t block) {
  std::vector<Box> out;
  for (std::size_t start = 0; start + 1 < pl.size(); start += block) {
    const std::size_t end = std::min(pl.size() - 1, start + block);
    Box b{pl[start].first, pl[start].first, pl[start].second, pl[start].second};
    for (std::size_t i = start; i <= end; ++i) {
      b.r0 = std::min(b.r0, pl[i].first);
      b.r1 = std::max(b.r1, pl[i].first);
      b.u0 = std::min(b.u0, pl[i].second);
      b.u1 = std::max(b.u1, pl[i].second);
    }
    out.push_back(b);
  }
  return out;
}

}  // namespace

Polyline to_polyline(const ProfileCurve& curve) {
  Polyline pl;
  pl.reserve(curve.points.size());
  for (const auto& p : curve.points) pl.emplace_back(p.r, p.u);
  return pl;
}

IntersectionResult intersection_count(const Polyline& a, const Ray& ray) {
  IntersectionResult res;
  if (a.empty()) return res;
  const double norm = std::sqrt(1.0 + ray.slope * ray.slope);
  std::vector<double> sep(a.size());
  std::vector<double> tol(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    sep[i] = (a[i].second - ray.slope * a[i].first) / norm;
    tol[i] = local_scale(a[i].first, a[i].second);
  }
  res = count_signed(sep, tol);
  const auto near_origin = [](const std::pair<double, double>& p) {
    return std::hypot(p.first, p.second) <= kCrossTol;
  };
  res.ambiguous = near_origin(a.front()) || near_origin(a.back());
  return res;
}

IntersectionResult intersection_count(const Polyline& a, const Polyline& b) {
  IntersectionResult res;
  if (a.size() < 2 || b.size() < 2) return res;
  const auto close = [](const std::pair<double, double>& x, const std::pair<double, double>& y) {
    return std::hypot(x.first - y.first, x.second - y.second) <= local_scale(x.first, x.second);
  };
  res.ambiguous = close(a.front(), b.front()) || close(a.front(), b.back()) ||
                  close(a.back(), b.front()) || close(a.back(), b.back());

  constexpr std::size_t kBlock = 32;
  const auto boxes_a = block_boxes(a, kBlock);
  const auto boxes_b = block_boxes(b, kBlock);
  // Vertex contacts are resolved afterwards; keep (curve, vertex) pairs.
  std::vector<std::pair<int, std::size_t>> contacts;
  std::vector<std::pair<std::size_t, std::size_t>> contact_segments;

  for (std::size_t ba = 0; ba < boxes_a.size(); ++ba) {
    for (std::size_t bb = 0; bb < boxes_b.size(); ++bb) {
      if (!boxes_a[ba].overlaps(boxes_b[bb], 1e-9)) continue;
      const std::size_t ia_end = std::min(a.size() - 1, (ba + 1) * kBlock);
      const std::size_t ib_end = std::min(b.size() - 1, (bb + 1) * kBlock);
      for (std::size_t i = ba * kBlock; i < ia_end; ++i) {
        for (std::size_t j = bb * kBlock; j < ib_end; ++j) {
          const auto &p1 = a[i], &p2 = a[i + 1], &q1 = b[j], &q2 = b[j + 1];
          if (std::max(p1.first, p2.first) < std::min(q1.first, q2.first) - 1e-12 ||
              std::max(q1.first, q2.first) < std::min(p1.first, p2.first) - 1e-12 ||
              std::max(p1.second, p2.second) < std::min(q1.second, q2.second) - 1e-12 ||
              std::max(q1.second, q2.second) < std::min(p1.second, p2.second) - 1e-12) {
            continue;
          }
          const double o1 = side(p1, p2, q1), o2 = side(p1, p2, q2);
          const double o3 = side(q1, q2, p1), o4 = side(q1, q2, p2);
          const double t1 = local_scale(q1.first, q1.second), t2 = local_scale(q2.first, q2.second);
          const double t3 = local_scale(p1.first, p1.second), t4 = local_scale(p2.first, p2.second);
          const bool degenerate = std::abs(o1) <= t1 || std::abs(o2) <= t2 ||
                                  std::abs(o3) <= t3 || std::abs(o4) <= t4;
          if (degenerate) {
            if ((o3 > t3 && o4 < -t4) || (o3 < -t3 && o4 > t4) || std::abs(o3) <= t3 ||
                std::abs(o4) <= t4) {
              // Contact near a vertex; resolved by neighbour signs below.
              if (std::abs(o3) <= t3) contacts.emplace_back(0, i), contact_segments.emplace_back(i, j);
              if (std::abs(o4) <= t4) contacts.emplace_back(0, i + 1), contact_segments.emplace_back(i + 1, j);
              if (std::abs(o1) <= t1) contacts.emplace_back(1, j), contact_segments.emplace_back(i, j);
              if (std::abs(o2) <= t2) contacts.emplace_back(1, j + 1), contact_segments.emplace_back(i, j + 1);
            }
            continue;
          }
          if ((o1 > 0) != (o2 > 0) && (o3 > 0) != (o4 > 0)) ++res.crossings;
        }
      }
    }
  }

  // Resolve vertex contacts: the vertex's neighbours on its own curve either
  // lie on opposite sides of the other curve's local segment (a crossing) or
  // on the same side (a tangency).
  std::vector<std::pair<double, double>> seen;
  for (std::size_t c = 0; c < contacts.size(); ++c) {
    const auto [which, v] = contacts[c];
    const Polyline& own = which == 0 ? a : b;
    const Polyline& other = which == 0 ? b : a;
    const std::size_t seg = which == 0 ? contact_segments[c].second : contact_segments[c].first;
    const auto& pt = own[v];
    if (std::any_of(seen.begin(), seen.end(), [&](const auto& s) { return close(s, pt); })) continue;
    const double dist = std::min(std::hypot(pt.first - other[seg].first, pt.second - other[seg].second),
                                 std::hypot(pt.first - other[seg + 1].first, pt.second - other[seg + 1].second));
    const double seg_len = std::hypot(other[seg + 1].first - other[seg].first,
                                      other[seg + 1].second - other[seg].second);
    if (dist > seg_len + local_scale(pt.first, pt.second)) continue;
    seen.push_back(pt);
    if (v == 0 || v + 1 >= own.size()) continue;  // endpoints: already flagged if shared
    const std::size_t seg_idx = std::min(seg, other.size() - 2);
    double before = side(other[seg_idx], other[seg_idx + 1], own[v - 1]);
    double after = side(other[seg_idx], other[seg_idx + 1], own[v + 1]);
    if ((before > 0) != (after > 0)) {
      ++res.crossings;
    } else {
      ++res.tangencies;
    }
  }
  return res;
}

IntersectionResult intersection_count(const ProfileCurve& a, const ProfileCurve& b) {
  return intersection_count(to_polyline(a), to_polyline(b));
}

IntersectionResult intersection_count(const ProfileCurve& a, const Ray& ray) {
  return intersection_count(to_polyline(a), ray);
}

// ---------------------------------------------------------------------------
// CSV

void write_profile_csv(std::ostream& os, const ProfileCurve& curve) {
  os << "s,r,u,theta,k\n";
  char buf[160];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", p.s, p.r, p.u, p.theta, p.k);
    os << buf;
  }
}

ProfileCurve read_profile_csv(std::istream& is, const FlowParams& params) {
  ProfileCurve curve;
  curve.params = params;
  std::string line;
  if (!std::getline(is, line) || line != "s,r,u,theta,k") {
    throw DomainError("read_profile_csv: missing header s,r,u,theta,k");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    ProfilePoint p;
    char c1, c2, c3, c4;
    if (!(row >> p.s >> c1 >> p.r >> c2 >> p.u >> c3 >> p.theta >> c4 >> p.k)) {
      throw DomainError("read_profile_csv: malformed row: " + line);
    }
    curve.points.push_back(p);
  }
  validate(curve);
  return curve;
}

}  // namespace selfsim
