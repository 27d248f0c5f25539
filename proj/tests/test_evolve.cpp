#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "selfsim/evolve.hpp"
#include "selfsim/shooting.hpp"

using namespace selfsim;

TEST_SUITE("evolve") {
  TEST_CASE("avx2 and scalar velocity kernels agree") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> U(-0.02, 0.02);
    for (int n : {3, 4, 5, 17, 64, 1001}) {
      std::vector<double> r(n), u(n);
      for (int i = 0; i < n; ++i) {
        const double phi = 1.4 * i / (n - 1) + 0.05;
        r[i] = 2 * std::sin(phi) + U(rng);
        u[i] = 2 * std::cos(phi) + 0.3 + U(rng);
      }
      for (const auto& P : {FlowParams(1, 2), FlowParams(2, 2), FlowParams(3, 4)}) {
        std::vector<double> vr0, vu0, h0, vr1, vu1, h1;
        normal_velocity(r, u, P, KernelChoice::Scalar, vr0, vu0, h0);
        if (!avx2_available()) {
          CHECK_THROWS(normal_velocity(r, u, P, KernelChoice::Avx2, vr1, vu1, h1));
          continue;
        }
        normal_velocity(r, u, P, KernelChoice::Avx2, vr1, vu1, h1);
        for (int i = 1; i + 1 < n; ++i) {
          CHECK(vr1[i] == doctest::Approx(vr0[i]).epsilon(1e-14));
          CHECK(vu1[i] == doctest::Approx(vu0[i]).epsilon(1e-14));
          CHECK(h1[i] == doctest::Approx(h0[i]).epsilon(1e-14));
        }
      }
    }
  }

  TEST_CASE("velocity of a circle") {
    // Markers on u^2 + r^2 = 4 for (1,2): H = -2/R everywhere off the axes.
    std::vector<double> r, u, vr, vu, H;
    for (int i = 0; i <= 200; ++i) {
      const double phi = 0.2 + 1.1 * i / 200;
      r.push_back(2 * std::sin(phi));
      u.push_back(2 * std::cos(phi));
    }
    normal_velocity(r, u, FlowParams(1, 2), KernelChoice::Scalar, vr, vu, H);
    for (int i = 1; i < 200; ++i) CHECK(H[i] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK_THROWS_AS(normal_velocity({1.0}, {1.0}, FlowParams(1, 2), KernelChoice::Scalar, vr, vu, H), DomainError);
  }

  TEST_CASE("sphere extinction time") {
    const FlowParams P(1, 2);
    SchemeConfig sc;
    const auto tr = run_flow(sphere_profile(1.0, P), 1.0, P, sc);
    CHECK(tr.stop == FlowStop::Singular);
    REQUIRE(tr.singular_time.has_value());
    CHECK(std::abs(*tr.singular_time - 0.25) < 1e-3);
    // Area decreases along the flow.
    double prev = INFINITY;
    for (const auto& st : tr.states) {
      const double A = weighted_area(st.curve, Weight::Unit);
      CHECK(A <= prev * (1 + 1e-9));
      prev = A;
    }
  }

  TEST_CASE("parabolic rescaling commutes with the scheme") {
    const FlowParams P(1, 3);
    SchemeConfig a, b;
    a.resample_tol = 0.02;
    b.resample_tol = 0.04;
    const auto ta = run_flow(sphere_profile(1.0, P), 1.0, P, a);
    const auto tb = run_flow(sphere_profile(2.0, P), 4.0, P, b);
    REQUIRE(ta.singular_time);
    REQUIRE(tb.singular_time);
    CHECK(*tb.singular_time == doctest::Approx(4 * *ta.singular_time).epsilon(1e-9));
    CHECK(ta.steps.size() == tb.steps.size());
  }

  TEST_CASE("cylinder keeps its shape") {
    const FlowParams P(1, 2);
    SchemeConfig sc;
    const auto tr = run_flow(cylinder_profile(1.0, 4.0, P), 0.3, P, sc);
    CHECK(tr.stop == FlowStop::Completed);
    const auto& c = tr.states.back().curve;
    const double expect = std::sqrt(1.0 - 2 * 0.3);
    for (const auto& pt : c.points) CHECK(std::abs(pt.u - expect) < 1e-3);
  }

  TEST_CASE("round sphere shrinker is self-similar") {
    const FlowParams P(1, 2);
    const auto S = sphere_profile(2.0, P);
    SchemeConfig sc;
    const auto tr = run_flow(S, -0.25, P, sc, -1.0);
    CHECK(self_similarity_residual(tr, S, ScalingMode::Shrink) < 1e-3);
    CHECK_THROWS_AS(self_similarity_residual(tr, S, ScalingMode::Expand), DomainError);
  }

  TEST_CASE("expander audit against the static companion") {
    const FlowParams P(2, 2);
    IntegratorConfig cfg;
    cfg.r_max = 6.0;
    const auto ex = integrate_profile(EquationKind::Expander, series_start(EquationKind::Expander, 1.0, P), P, cfg);
    SchemeConfig sc;
    sc.resample_tol = 0.04;
    const auto tr = run_flow(ex, 2.0, P, sc, 1.0);
    CHECK(self_similarity_residual(tr, ex, ScalingMode::Expand) < 5e-3);
    MovingReference ref;
    ref.profile = companion(P, IntegratorConfig{}).curve;
    const auto rep = intersection_audit(tr, ref);
    CHECK(rep.nonincreasing);
    CHECK(rep.times.size() == tr.states.size());
  }

  TEST_CASE("hausdorff distance and dilation") {
    const FlowParams P(1, 2);
    const auto a = sphere_profile(1.0, P);
    const auto b = dilate(a, 1.1);
    CHECK(b.points.back().r == doctest::Approx(1.1));
    CHECK(hausdorff_distance(to_polyline(a), to_polyline(b), 2.0) == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(hausdorff_distance(to_polyline(a), to_polyline(a), 2.0) == doctest::Approx(0.0));
  }

  TEST_CASE("scheme validation") {
    SchemeConfig sc;
    sc.dt_safety = 2.0;
    CHECK_THROWS_AS(sc.check(), DomainError);
    sc = SchemeConfig{};
    sc.resample_tol = 0.0;
    CHECK_THROWS_AS(run_flow(sphere_profile(1.0, FlowParams(1, 2)), 1.0, FlowParams(1, 2), sc), DomainError);
    CHECK_THROWS_AS(run_flow(sphere_profile(1.0, FlowParams(1, 2)), 0.0, FlowParams(1, 2), SchemeConfig{}, 1.0), DomainError);
  }

  TEST_CASE("trajectory archive") {
    const FlowParams P(1, 2);
    SchemeConfig sc;
    sc.resample_tol = 0.05;
    const auto tr = run_flow(sphere_profile(1.0, P), 0.1, P, sc);
    const auto dir = std::filesystem::temp_directory_path() / "selfsim_archive_test";
    std::filesystem::remove_all(dir);
    const auto files = write_trajectory_archive(tr, dir);
    CHECK(files.size() == tr.states.size() + 1);
    CHECK(std::filesystem::exists(dir / "index.json"));
    std::ifstream is(dir / "snapshot_00000.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "s,r,u,theta,k");
    std::filesystem::remove_all(dir);
  }
}
