#include "selfsim/functionals.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "selfsim/quadrature.hpp"

namespace selfsim {

namespace {

constexpr double kPi = std::numbers::pi;

int ambient_dim(const HeatKernelSpec& spec, const FlowParams& params) {
  const int n = spec.n > 0 ? spec.n : params.n();
  if (n != params.n()) throw DomainError("gaussian_density: spec.n disagrees with the flow parameters");
  return n;
}

double kernel_tau(const HeatKernelSpec& spec, double t) {
  if (!(spec.diffusion > 0)) throw DomainError("HeatKernelSpec: diffusion must be positive");
  const double tau = spec.t0 - t;
  if (!(tau > 0)) throw DomainError("heat kernel: evaluation requires t < t0");
  return tau;
}

// Average of exp(kappa (cos(phi) - 1)) over the unit sphere S^{m-1}.
double orbit_factor(int m, double kappa) {
  if (kappa == 0.0) return 1.0;
  if (m == 1) return 0.5 * (1.0 + std::exp(-2.0 * kappa));
  using boost::math::quadrature::gauss_kronrod;
  auto num = [&](double phi) { return std::exp(kappa * (std::cos(phi) - 1.0)) * std::pow(std::sin(phi), m - 2); };
  const double top = gauss_kronrod<double, 61>::integrate(num, 0.0, kPi, 15, 1e-14);
  const double bottom = std::sqrt(kPi) * std::tgamma((m - 1) / 2.0) / std::tgamma(m / 2.0);
  return top / bottom;
}

bool end_on_axis(const ProfilePoint& p, double scale) {
  const double tol = 1e-6 * std::max(1.0, scale);
  return (p.r <= tol && std::abs(std::sin(p.theta)) <= 1e-3) || (p.u <= tol && std::abs(std::cos(p.theta)) <= 1e-3);
}

bool closed_curve(const ProfileCurve& c, double scale) {
  return std::hypot(c.front().r - c.back().r, c.front().u - c.back().u) <= 1e-9 * std::max(1.0, scale);
}

}  // namespace

DensityValue gaussian_density(const ProfileCurve& curve, const FlowParams& params,
                              const HeatKernelSpec& spec, double t) {
  if (curve.size() < 2) throw DomainError("gaussian_density: curve needs at least two points");
  const int n = ambient_dim(spec, params);
  const double tau = kernel_tau(spec, t);
  const double c = spec.diffusion;
  const int p = params.p(), q = params.q();
  const double norm = std::pow(4 * kPi * tau, -(n - 1) / 2.0);

  auto rho_bar = [&](double r, double u) {
    const double dr = r - spec.x0_r, du = u - spec.x0_u;
    double v = norm * std::exp(-(dr * dr + du * du) / (c * tau));
    if (spec.x0_r != 0.0) v *= orbit_factor(p, 2 * r * spec.x0_r / (c * tau));
    if (spec.x0_u != 0.0) v *= orbit_factor(q, 2 * u * spec.x0_u / (c * tau));
    return v;
  };
  DensityValue out;
  out.phi = integrate_surface(curve, [&](const ProfilePoint& pt) { return rho_bar(pt.r, pt.u); });
  if (!std::isfinite(out.phi)) throw NumericalError("gaussian_density: non-finite integral");

  // Mass beyond a free end, bounded by continuing the curve along its end
  // tangent and dropping the orbit factor (which is at most 1).
  const double orbit = unit_sphere_area(p - 1) * unit_sphere_area(q - 1);
  double extent = 0.0;
  for (const auto& pt : curve.points) extent = std::max(extent, std::hypot(pt.r, pt.u));
  auto tail = [&](const ProfilePoint& e, double dir) {
    const double tr = dir * std::cos(e.theta), tu = dir * std::sin(e.theta);
    const double d0 = std::hypot(e.r - spec.x0_r, e.u - spec.x0_u);
    const double len = d0 + std::sqrt(40.0 * c * tau) + 1.0;
    auto f = [&](double sg) {
      const double r = std::abs(e.r + sg * tr), u = std::abs(e.u + sg * tu);
      const double dr = r - spec.x0_r, du = u - spec.x0_u;
      return orbit * std::pow(r, p - 1) * std::pow(u, q - 1) * norm * std::exp(-(dr * dr + du * du) / (c * tau));
    };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, len, 15, 1e-10);
  };
  if (!closed_curve(curve, extent)) {
    if (!end_on_axis(curve.front(), extent)) out.tail_bound += tail(curve.front(), -1.0);
    if (!end_on_axis(curve.back(), extent)) out.tail_bound += tail(curve.back(), 1.0);
  }
  out.truncated = out.tail_bound > 1e-12 * out.phi;
  return out;
}

double hyperplane_density(const HeatKernelSpec& spec, double t, double offset) {
  if (spec.n < 2) throw DomainError("hyperplane_density: spec.n must be set (n >= 2)");
  const double tau = kernel_tau(spec, t);
  const double c = spec.diffusion;
  // Gaussian integral over R^{n-1}: (4 pi tau)^{-(n-1)/2} (c pi tau)^{(n-1)/2}.
  return std::pow(c / 4.0, (spec.n - 1) / 2.0) * std::exp(-offset * offset / (c * tau));
}

DensityTrace density_trace(const FlowTrajectory& traj, const FlowParams& params,
                           const HeatKernelSpec& spec) {
  DensityTrace tr;
  for (const auto& st : traj.states) {
    if (!(st.t < spec.t0)) throw DomainError("density_trace: trajectory reaches t0");
    const auto d = gaussian_density(st.curve, params, spec, st.t);
    if (!tr.samples.empty()) {
      tr.max_upward_violation = std::max(tr.max_upward_violation, d.phi - tr.samples.back().phi);
    }
    tr.samples.push_back({st.t, d.phi, d.tail_bound});
  }
  return tr;
}

double heat_kernel(const std::vector<double>& x, double t, const HeatKernelSpec& spec) {
  const std::size_t n = x.size();
  if (n < 2) throw DomainError("heat_kernel: x needs at least two coordinates");
  if (spec.n > 0 && static_cast<std::size_t>(spec.n) != n) throw DomainError("heat_kernel: dimension mismatch");
  const double tau = kernel_tau(spec, t);
  double y2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c0 = i == 0 ? spec.x0_r : (i == 1 ? spec.x0_u : 0.0);
    y2 += (x[i] - c0) * (x[i] - c0);
  }
  return std::pow(4 * kPi * tau, -(double(n) - 1) / 2) * std::exp(-y2 / (spec.diffusion * tau));
}

double kernel_identity_residual(const std::vector<double>& x, double t,
                                const std::vector<std::vector<double>>& frame,
                                const HeatKernelSpec& spec) {
  const std::size_t n = x.size();
  if (frame.size() + 1 != n) throw DomainError("kernel_identity_residual: frame must hold n - 1 vectors");
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (frame[i].size() != n) throw DomainError("kernel_identity_residual: frame vector of wrong length");
    for (std::size_t j = 0; j <= i; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < n; ++k) d += frame[i][k] * frame[j][k];
      if (std::abs(d - (i == j ? 1.0 : 0.0)) > 1e-10) throw DomainError("kernel_identity_residual: frame not orthonormal");
    }
  }
  const double tau = kernel_tau(spec, t);
  const double c = spec.diffusion;
  const double m = double(n) - 1;
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] - (i == 0 ? spec.x0_r : (i == 1 ? spec.x0_u : 0.0));
  const double rho = heat_kernel(x, t, spec);

  // D rho = -2 rho y / (c tau); D^2 rho = rho (4 y y^T / (c tau)^2 - 2 I / (c tau)).
  double y2 = 0.0, proj2 = 0.0;
  for (double v : y) y2 += v * v;
  for (const auto& e : frame) {
    double ye = 0.0;
    for (std::size_t k = 0; k < n; ++k) ye += y[k] * e[k];
    proj2 += ye * ye;
  }
  const double a = 2.0 / (c * tau);
  const double div_p = rho * (a * a * proj2 - a * m);
  const double grad2 = a * a * rho * rho * y2;
  const double grad_tan2 = a * a * rho * rho * proj2;
  const double normal_term = (grad2 - grad_tan2) / rho;
  const double rho_t = rho * (m / (2 * tau) - y2 / (c * tau * tau));
  return div_p + normal_term + rho_t;
}

NormalPerturbation NormalPerturbation::bump(double center, double half_width, double amplitude) {
  if (!(half_width > 0)) throw DomainError("NormalPerturbation::bump: half_width must be positive");
  NormalPerturbation d;
  d.phi = [=](double s) {
    const double x = (s - center) / half_width;
    if (std::abs(x) >= 1) return 0.0;
    const double b = 1 - x * x;
    return amplitude * b * b * b;
  };
  d.dphi = [=](double s) {
    const double x = (s - center) / half_width;
    if (std::abs(x) >= 1) return 0.0;
    const double b = 1 - x * x;
    return amplitude * 3 * b * b * (-2 * x) / half_width;
  };
  d.s_lo = center - half_width;
  d.s_hi = center + half_width;
  return d;
}

NormalPerturbation NormalPerturbation::uniform() {
  NormalPerturbation d;
  d.phi = [](double) { return 1.0; };
  d.dphi = [](double) { return 0.0; };
  d.whole_curve = true;
  return d;
}

namespace {

void check_support(const ProfileCurve& curve, const NormalPerturbation& dir, std::optional<double> window) {
  if (!dir.phi || !dir.dphi) throw DomainError("first_variation: perturbation is empty");
  if (dir.whole_curve) return;
  if (dir.s_lo <= curve.front().s || dir.s_hi >= curve.back().s) {
    throw DomainError("first_variation: perturbation support must be interior to the curve");
  }
  if (window) {
    const CurveInterpolant ip(curve);
    for (double s = dir.s_lo; s <= dir.s_hi; s += (dir.s_hi - dir.s_lo) / 64) {
      const auto pt = ip.at_arclength(s);
      if (std::hypot(pt.r, pt.u) >= *window) throw DomainError("first_variation: perturbation leaves the window");
    }
  }
}

double weight_of(Functional fn, double r, double u) {
  const double x2 = r * r + u * u;
  return fn == Functional::J ? std::exp(-x2 / 4) : std::exp(x2 / 4);
}

}  // namespace

namespace {

// Integrand of the weighted area after moving each point by eps phi nu.
double perturbed_integrand(const ProfilePoint& pt, Functional functional, const NormalPerturbation& dir, double eps,
                           int p, int q) {
  const double ph = dir.phi(pt.s), dph = dir.dphi(pt.s);
  const double r = pt.r - eps * ph * std::sin(pt.theta);
  const double u = pt.u + eps * ph * std::cos(pt.theta);
  const double a = 1 - eps * ph * pt.k, b = eps * dph;
  const double stretch = std::sqrt(a * a + b * b);
  return weight_of(functional, r, u) * std::pow(r, p - 1) * std::pow(u, q - 1) * stretch;
}

}  // namespace

double perturbed_weighted_area(const ProfileCurve& curve, Functional functional,
                               const NormalPerturbation& dir, double eps, std::optional<double> window) {
  if (functional == Functional::K && !window) throw DomainError("first_variation: K needs a finite window");
  const int p = curve.params.p(), q = curve.params.q();
  const double orbit = unit_sphere_area(p - 1) * unit_sphere_area(q - 1);
  return orbit * integrate_arclength(curve, [&](const ProfilePoint& pt) {
    return perturbed_integrand(pt, functional, dir, eps, p, q);
  }, window);
}

FirstVariation first_variation(const ProfileCurve& curve, Functional functional,
                               const NormalPerturbation& dir, double h, std::optional<double> window) {
  if (!(h > 0)) throw DomainError("first_variation: h must be positive");
  if (functional == Functional::K && !window) throw DomainError("first_variation: K needs a finite window");
  check_support(curve, dir, window);
  const auto& params = curve.params;

  // The difference is taken point by point before integrating, so rounding in
  // the untouched part of the curve cancels exactly.
  const int p = params.p(), q = params.q();
  const double orbit = unit_sphere_area(p - 1) * unit_sphere_area(q - 1);
  FirstVariation fv;
  const double base = orbit * integrate_arclength(curve, [&](const ProfilePoint& pt) {
    return dir.phi(pt.s) == 0.0 && dir.dphi(pt.s) == 0.0 ? 0.0 : std::abs(perturbed_integrand(pt, functional, dir, 0.0, p, q));
  }, window);
  for (int i = 0; i < 3; ++i) {
    const double hi = h / double(1 << i);
    fv.steps[i] = hi;
    fv.values[i] = orbit * integrate_arclength(curve, [&](const ProfilePoint& pt) {
      return perturbed_integrand(pt, functional, dir, hi, p, q) - perturbed_integrand(pt, functional, dir, -hi, p, q);
    }, window) / (2 * hi);
  }
  // Central differences carry an h^2 error, so one Richardson step.
  fv.fd = (4 * fv.values[2] - fv.values[1]) / 3;
  const double d1 = fv.values[0] - fv.values[1], d2 = fv.values[1] - fv.values[2];
  fv.richardson_order = std::log2(std::abs(d1) / std::abs(d2));
  const double noise = 1e-14 * base / fv.steps[2];
  if (std::abs(d2) > 100 * noise && fv.richardson_order < 1.5) {
    throw NumericalError("first_variation: step too large, Richardson order " + std::to_string(fv.richardson_order));
  }

  const double sign = functional == Functional::J ? -0.5 : 0.5;
  double analytic = 0.0, scale = 0.0;
  auto density = [&](const ProfilePoint& pt) {
    const double f = weight_of(functional, pt.r, pt.u);
    const double H = mean_curvature(pt, params);
    const double xnu = -pt.r * std::sin(pt.theta) + pt.u * std::cos(pt.theta);
    const double dfnu = sign * f * xnu;
    return std::array<double, 3>{f * H, dfnu, dir.phi(pt.s)};
  };
  analytic = integrate_surface(curve, [&](const ProfilePoint& pt) {
    const auto [fH, dfnu, ph] = density(pt);
    return -(fH - dfnu) * ph;
  }, window);
  scale = integrate_surface(curve, [&](const ProfilePoint& pt) {
    const auto [fH, dfnu, ph] = density(pt);
    return std::abs(ph) * (std::abs(fH) + std::abs(dfnu));
  }, window);
  fv.analytic = analytic;
  fv.scale = scale;
  fv.relative = scale > 0 ? std::abs(fv.fd) / scale : std::abs(fv.fd);
  return fv;
}

GaussBonnetReport gauss_bonnet_audit(const ProfileCurve& curve, const FlowParams& params, int genus,
                                     double epsilon, std::pair<double, double> radii) {
  if (params.p() != 1 || params.q() != 2) throw DomainError("gauss_bonnet_audit: n = 3 surfaces of revolution only");
  if (!(epsilon > 0 && epsilon < 1)) throw DomainError("gauss_bonnet_audit: epsilon must lie in (0, 1)");
  if (genus < 0) throw DomainError("gauss_bonnet_audit: genus must be nonnegative");
  const auto [R1, R2] = radii;
  if (!(R1 > 0) || std::abs(R2 - 2 * R1) > 1e-12 * R1) {
    throw DomainError("gauss_bonnet_audit: radii must be (R, 2R)");
  }
  if (curve.size() < 2) throw DomainError("gauss_bonnet_audit: empty curve");

  GaussBonnetReport rep;
  rep.epsilon = epsilon;
  rep.genus = genus;
  auto A2 = [&](const ProfilePoint& pt) { return second_fundamental_norm(pt, params); };
  auto H2 = [&](const ProfilePoint& pt) {
    const double h = mean_curvature(pt, params);
    return h * h;
  };
  rep.lhs = (1 - epsilon) * integrate_surface(curve, A2, R1);
  rep.H2_integral = integrate_surface(curve, H2, R2);
  rep.genus_term = 8 * kPi * genus;
  constexpr int kSamples = 201;
  for (int i = 0; i < kSamples; ++i) {
    const double r = R1 + (R2 - R1) * i / (kSamples - 1);
    rep.D_ratio = std::max(rep.D_ratio, weighted_area(curve, Weight::Unit, r) / (kPi * r * r));
  }
  rep.stated_constant = 96 * kPi;
  rep.area_term = rep.stated_constant * rep.D_ratio / epsilon;
  rep.holds = rep.lhs <= rep.H2_integral + rep.genus_term + rep.area_term;

  double extent = 0.0;
  for (const auto& pt : curve.points) extent = std::max(extent, std::hypot(pt.r, pt.u));
  auto inside_free = [&](const ProfilePoint& e) { return !end_on_axis(e, extent) && std::hypot(e.r, e.u) < R2; };
  rep.D_partial = !closed_curve(curve, extent) && (inside_free(curve.front()) || inside_free(curve.back()));

  // Explicit cutoff phi = ((R2 - |x|)/R1)^2 on the annulus: |Dphi|^2/phi = 4/R1^2.
  auto phi = [&](double rho) {
    if (rho <= R1) return 1.0;
    if (rho >= R2) return 0.0;
    const double w = (R2 - rho) / R1;
    return w * w;
  };
  auto dphi = [&](double rho) { return rho <= R1 || rho >= R2 ? 0.0 : 2 * (R2 - rho) / (R1 * R1); };
  rep.cutoff_lhs = (1 - epsilon) * integrate_surface(curve, [&](const ProfilePoint& pt) {
    return phi(std::hypot(pt.r, pt.u)) * A2(pt);
  }, R2);
  const double phiH2 = integrate_surface(curve, [&](const ProfilePoint& pt) {
    return phi(std::hypot(pt.r, pt.u)) * H2(pt);
  }, R2);
  const double annulus = integrate_surface(curve, [&](const ProfilePoint& pt) {
    const double rho = std::hypot(pt.r, pt.u);
    if (rho <= R1 || rho >= R2) return 0.0;
    const double g = dphi(rho);
    return 4 * g * g / (epsilon * phi(rho)) + 4 * g / rho;
  }, R2);
  rep.cutoff_rhs = phiH2 + rep.genus_term + annulus;
  rep.cutoff_holds = rep.cutoff_lhs <= rep.cutoff_rhs;
  // (16/eps + 8)/R1^2 <= 24/(eps R1^2) on an area of at most pi R2^2 D.
  rep.cutoff_constant = 24 * kPi * (R2 / R1) * (R2 / R1);
  return rep;
}

std::vector<GaussBonnetReport> gauss_bonnet_sweep(const ProfileCurve& curve, const FlowParams& params,
                                                  int genus) {
  std::vector<GaussBonnetReport> out;
  for (double eps : {0.1, 0.5, 0.9}) out.push_back(gauss_bonnet_audit(curve, params, genus, eps));
  return out;
}

TotalCurvature total_curvature(const std::vector<std::vector<SpacePoint>>& components, double tolerance) {
  TotalCurvature tc;
  for (const auto& poly : components) {
    const std::size_t n = poly.size();
    if (n < 3) throw DomainError("total_curvature: a closed component needs at least 3 vertices");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = poly[(i + n - 1) % n];
      const auto& b = poly[i];
      const auto& c = poly[(i + 1) % n];
      const SpacePoint e{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
      const SpacePoint f{c[0] - b[0], c[1] - b[1], c[2] - b[2]};
      const SpacePoint x{e[1] * f[2] - e[2] * f[1], e[2] * f[0] - e[0] * f[2], e[0] * f[1] - e[1] * f[0]};
      const double cross = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
      const double dot = e[0] * f[0] + e[1] * f[1] + e[2] * f[2];
      const double turn = std::atan2(cross, dot);
      if (turn > kPi / 2) throw DomainError("total_curvature: cusp (turning above pi/2 at one vertex)");
      tc.integral += turn;
    }
    ++tc.components;
  }
  tc.bound_holds = tc.integral >= 2 * kPi * tc.components - tolerance;
  return tc;
}

bool transverse_bound_check(double A_M, double A_N, double sin_alpha, double k_measured, double tolerance) {
  if (!(sin_alpha > 0)) throw DomainError("transverse_bound_check: intersection is not transverse");
  return std::abs(k_measured) <= (std::abs(A_M) + std::abs(A_N)) / sin_alpha + tolerance;
}

std::vector<SectionCheck> sphere_section_checks(const ProfileCurve& curve, const FlowParams& params,
                                                double rho) {
  if (params.p() != 1 || params.q() != 2) throw DomainError("sphere_section_checks: n = 3 surfaces of revolution only");
  if (!(rho > 0)) throw DomainError("sphere_section_checks: rho must be positive");
  const CurveInterpolant ip(curve);
  std::vector<SectionCheck> out;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double g0 = std::hypot(curve.points[i].r, curve.points[i].u) - rho;
    const double g1 = std::hypot(curve.points[i + 1].r, curve.points[i + 1].u) - rho;
    if (g0 == 0.0 || g0 * g1 >= 0) continue;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      const auto pt = ip.at(i, mid);
      ((std::hypot(pt.r, pt.u) - rho) * g0 > 0 ? lo : hi) = mid;
    }
    const auto pt = ip.at(i, 0.5 * (lo + hi));
    SectionCheck sc;
    sc.r = pt.r;
    sc.u = pt.u;
    sc.k = 1.0 / pt.u;
    const double A_M = std::cos(pt.theta) / pt.u;
    const double sin_alpha = std::abs(std::cos(pt.theta) * pt.r + std::sin(pt.theta) * pt.u) / std::hypot(pt.r, pt.u);
    sc.bound = (std::abs(A_M) + 1.0 / rho) / sin_alpha;
    sc.holds = transverse_bound_check(A_M, 1.0 / rho, sin_alpha, sc.k, 1e-12 * sc.bound);
    out.push_back(sc);
  }
  return out;
}

ProfileCurve catenoid_profile(double neck, double half_width, int samples) {
  if (!(neck > 0) || !(half_width > 0) || samples < 2) throw DomainError("catenoid_profile: bad arguments");
  ProfileCurve c;
  c.params = FlowParams(1, 2);
  const double s0 = neck * std::sinh(-half_width / neck);
  for (int i = 0; i <= samples; ++i) {
    const double r = -half_width + 2 * half_width * i / samples;
    const double ch = std::cosh(r / neck);
    ProfilePoint pt;
    pt.r = r;
    pt.u = neck * ch;
    pt.theta = std::atan(std::sinh(r / neck));
    pt.k = 1.0 / (neck * ch * ch);
    pt.s = neck * std::sinh(r / neck) - s0;
    c.points.push_back(pt);
  }
  return c;
}

ProfileCurve torus_profile(double center_u, double radius, int samples) {
  if (!(radius > 0) || !(center_u > radius) || samples < 8) throw DomainError("torus_profile: needs 0 < radius < center_u");
  ProfileCurve c;
  c.params = FlowParams(1, 2);
  for (int i = 0; i <= samples; ++i) {
    const double ph = 2 * kPi * i / samples;
    ProfilePoint pt;
    pt.r = radius * std::cos(ph);
    pt.u = center_u + radius * std::sin(ph);
    pt.theta = ph + kPi / 2;
    pt.k = 1.0 / radius;
    pt.s = radius * ph;
    c.points.push_back(pt);
  }
  c.points.back().r = c.points.front().r;
  c.points.back().u = c.points.front().u;
  return c;
}

}  // namespace selfsim
