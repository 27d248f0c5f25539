#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "selfsim/evolve.hpp"
#include "selfsim/geometry.hpp"
#include "selfsim/quadrature.hpp"

using namespace selfsim;
using std::numbers::pi;

namespace {

ProfileCurve segment(double r0, double u0, double r1, double u1, int n = 10) {
  ProfileCurve c;
  c.params = FlowParams(2, 2);
  const double L = std::hypot(r1 - r0, u1 - u0);
  const double th = std::atan2(u1 - u0, r1 - r0);
  for (int i = 0; i <= n; ++i) {
    const double f = double(i) / n;
    c.points.push_back({f * L, r0 + f * (r1 - r0), u0 + f * (u1 - u0), th, 0.0});
  }
  return c;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("flow parameters") {
    CHECK_THROWS_AS(FlowParams(0, 2), DomainError);
    CHECK_THROWS_AS(FlowParams(2, 1), DomainError);
    const auto ax = FlowParams::axial(3);
    CHECK(ax.p() == 1);
    CHECK(ax.q() == 2);
    CHECK(FlowParams(2, 3).n() == 5);
  }

  TEST_CASE("sphere areas and cone slope") {
    CHECK(unit_sphere_area(0) == doctest::Approx(2.0));
    CHECK(unit_sphere_area(1) == doctest::Approx(2 * pi));
    CHECK(unit_sphere_area(2) == doctest::Approx(4 * pi));
    CHECK(unit_sphere_area(3) == doctest::Approx(2 * pi * pi));
    CHECK(cone_slope(FlowParams(2, 2)).lambda_s == doctest::Approx(1.0));
    CHECK(cone_slope(FlowParams(2, 3)).lambda_s == doctest::Approx(std::sqrt(2.0)));
    CHECK(cone_slope(FlowParams(3, 2)).alpha_s == doctest::Approx(std::atan(std::sqrt(0.5))));
    CHECK_THROWS_AS(cone_slope(FlowParams(1, 3)), DomainError);
  }

  TEST_CASE("curvatures of round spheres") {
    // S^{n-1} of radius R: every principal curvature is -1/R with the inward-pointing frame.
    for (int p : {1, 2, 3}) {
      const FlowParams P(p, 3);
      const auto S = sphere_profile(2.0, P);
      const auto& pt = S.points[S.size() / 3];
      CHECK(mean_curvature(pt, P) == doctest::Approx(-(P.n() - 1) / 2.0).epsilon(1e-9));
      CHECK(second_fundamental_norm(pt, P) == doctest::Approx((P.n() - 1) / 4.0).epsilon(1e-9));
    }
  }

  TEST_CASE("simons cone is minimal") {
    const FlowParams P(3, 2);
    const double lam = cone_slope(P).lambda_s;
    ProfilePoint pt{0.0, 2.0, 2.0 * lam, std::atan(lam), 0.0};
    CHECK(mean_curvature(pt, P) == doctest::Approx(0.0).epsilon(1e-14));
  }

  TEST_CASE("axis points are rejected") {
    ProfilePoint pt{0.0, 0.0, 1.0, 0.0, 1.0};
    CHECK_THROWS_AS(mean_curvature(pt, FlowParams(2, 2)), DomainError);
    CHECK_NOTHROW(mean_curvature(pt, FlowParams(1, 2)));
    pt.r = 1.0;
    pt.u = 0.0;
    CHECK_THROWS_AS(second_fundamental_norm(pt, FlowParams(2, 2)), DomainError);
  }

  TEST_CASE("weighted area of spheres") {
    const FlowParams P(1, 2);
    const auto S = sphere_profile(1.5, P);
    CHECK(weighted_area(S, Weight::Unit) == doctest::Approx(4 * pi * 2.25).epsilon(1e-9));
    CHECK(weighted_area(S, Weight::GaussianMinus) == doctest::Approx(4 * pi * 2.25 * std::exp(-2.25 / 4)).epsilon(1e-9));
    CHECK_THROWS_AS(weighted_area(S, Weight::GaussianPlus), DomainError);
    // A ball smaller than the sphere misses it entirely.
    CHECK(weighted_area(S, Weight::Unit, 1.0) == doctest::Approx(0.0));
  }

  TEST_CASE("quadrature integrates arclength exactly") {
    const auto c = segment(0.5, 0.5, 2.5, 1.5);
    CHECK(integrate_arclength(c, [](const ProfilePoint&) { return 1.0; }) == doctest::Approx(std::hypot(2.0, 1.0)));
    // Window cut: the part with |x| <= 1.
    const double inside = integrate_arclength(c, [](const ProfilePoint&) { return 1.0; }, 1.0);
    CHECK(inside > 0.0);
    CHECK(inside < std::hypot(2.0, 1.0));
  }

  TEST_CASE("intersection counts") {
    const auto a = segment(0.1, 0.1, 3.0, 3.0);
    const auto b = segment(0.1, 2.0, 3.0, 0.5);
    auto res = intersection_count(a, b);
    CHECK(res.crossings == 1);
    CHECK_FALSE(res.ambiguous);
    res = intersection_count(b, Ray{1.0});
    CHECK(res.crossings == 1);
    const auto parallel = segment(0.1, 0.5, 3.0, 3.4);
    CHECK(intersection_count(a, parallel).crossings == 0);
  }

  TEST_CASE("profile csv round trip") {
    const auto S = sphere_profile(1.0, FlowParams(1, 2), 50);
    std::stringstream ss;
    write_profile_csv(ss, S);
    CHECK(ss.str().rfind("s,r,u,theta,k\n", 0) == 0);
    const auto back = read_profile_csv(ss, FlowParams(1, 2));
    REQUIRE(back.size() == S.size());
    for (std::size_t i = 0; i < S.size(); ++i) {
      CHECK(back.points[i].r == S.points[i].r);
      CHECK(back.points[i].theta == S.points[i].theta);
    }
  }

  TEST_CASE("validate rejects bad samples") {
    auto c = segment(0.1, 0.1, 1.0, 1.0);
    CHECK_NOTHROW(validate(c));
    c.points[3].s = c.points[2].s;
    CHECK_THROWS_AS(validate(c), DomainError);
    c = segment(0.1, 0.1, 1.0, 1.0);
    c.points[4].k = std::nan("");
    CHECK_THROWS_AS(validate(c), DomainError);
  }
}
