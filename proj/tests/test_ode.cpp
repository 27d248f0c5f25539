#include <doctest.h>

#include <cmath>

#include "selfsim/asymptotics.hpp"
#include "selfsim/ode.hpp"

using namespace selfsim;

TEST_SUITE("ode") {
  TEST_CASE("fixed point spectrum matches the decay constants") {
    for (int n = 4; n <= 7; ++n) {
      for (int p = 2; p <= n - 2; ++p) {
        const FlowParams P(p, n - p);
        const auto sp = fixed_point_linearization(P);
        const auto dc = decay_constants(n);
        CHECK(sp.oscillatory);
        CHECK(std::abs(sp.lambda_plus.real() + dc.beta + 1) < 1e-12);
        CHECK(std::abs(sp.lambda_plus.imag() - dc.mu) < 1e-12);
        CHECK(std::abs(sp.lambda_minus.imag() + dc.mu) < 1e-12);
      }
    }
    // n = 8 leaves the oscillatory regime.
    CHECK_FALSE(fixed_point_linearization(FlowParams(4, 4)).oscillatory);
  }

  TEST_CASE("series start is consistent with the curvature law") {
    const FlowParams P(2, 3);
    for (auto kind : {EquationKind::Minimal, EquationKind::Expander, EquationKind::Shrinker}) {
      const auto pt = series_start(kind, 0.7, P, 1e-3);
      const double k = curvature_law(kind, P, pt.r, pt.u, pt.theta);
      CHECK(k == doctest::Approx(pt.k).epsilon(1e-4));
    }
    CHECK_THROWS_AS(series_start(EquationKind::Minimal, -1.0, P), DomainError);
  }

  TEST_CASE("cylinder solves the shrinker equation") {
    const FlowParams P(2, 2);
    IntegratorConfig cfg;
    cfg.r_max = 5.0;
    const auto c = integrate_profile(EquationKind::Shrinker, series_start(EquationKind::Shrinker, std::sqrt(2.0), P), P, cfg);
    CHECK(c.back().r == doctest::Approx(5.0));
    for (const auto& pt : c.points) CHECK(std::abs(pt.u - std::sqrt(2.0)) < 1e-8);
  }

  TEST_CASE("p = 1 minimal profile is the catenary") {
    const FlowParams P(1, 2);
    IntegratorConfig cfg;
    cfg.r_max = 2.0;
    cfg.rel_tol = 1e-12;
    const auto c = integrate_profile(EquationKind::Minimal, series_start(EquationKind::Minimal, 1.0, P), P, cfg);
    for (const auto& pt : c.points) CHECK(std::abs(pt.u - std::cosh(pt.r)) < 1e-8);
    CHECK(c.back().s == doctest::Approx(std::sinh(2.0)).epsilon(1e-6));
  }

  TEST_CASE("phase trajectory spirals into the fixed point") {
    const FlowParams P(2, 2);
    IntegratorConfig cfg;
    cfg.r_max = 1e4;
    const auto tr = integrate_phase(EquationKind::Minimal, {2.0, 0.0, 0.0}, P, cfg);
    CHECK(std::hypot(tr.back().X - 1.0, tr.back().Y - 1.0) < 0.01);
    CHECK_THROWS_AS(integrate_phase(EquationKind::Shrinker, {1.0, 1.0, 0.0}, P, cfg), DomainError);
  }

  TEST_CASE("linear basis solves the linearized equations") {
    const FlowParams P(2, 2);
    IntegratorConfig cfg;
    const auto b = linear_basis(EquationKind::LinearizedExpander, P, cfg);
    const auto& h = b.h1;
    REQUIRE(h.r.size() > 10);
    // Second derivative by centered differences of the sampled derivative.
    const std::size_t i = h.r.size() / 2;
    const double ddg = (h.dg[i + 1] - h.dg[i - 1]) / (h.r[i + 1] - h.r[i - 1]);
    const double res = linearized_residual(EquationKind::LinearizedExpander, P, h.r[i], h.g[i], h.dg[i], ddg);
    CHECK(std::abs(res) < 1e-3 * (std::abs(ddg) + std::abs(h.g[i]) + 1e-12));
  }

  TEST_CASE("config validation") {
    IntegratorConfig cfg;
    cfg.rel_tol = 2.0;
    CHECK_THROWS_AS(cfg.check(EquationKind::Minimal), DomainError);
    cfg = IntegratorConfig{};
    cfg.r_max = 20.0;
    CHECK_NOTHROW(cfg.check(EquationKind::Expander));
    CHECK_THROWS_AS(cfg.check(EquationKind::Shrinker), DomainError);
    cfg.allow_far_shrinker = true;
    CHECK_NOTHROW(cfg.check(EquationKind::Shrinker));
  }
}
