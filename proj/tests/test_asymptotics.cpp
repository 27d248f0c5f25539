#include <doctest.h>

#include <cmath>
#include <numbers>

#include "selfsim/asymptotics.hpp"
#include "selfsim/shooting.hpp"

using namespace selfsim;
using std::numbers::pi;

TEST_SUITE("asymptotics") {
  TEST_CASE("decay constants") {
    const auto dc = decay_constants(4);
    CHECK(dc.beta == doctest::Approx(0.5));
    CHECK(dc.mu == doctest::Approx(std::sqrt(7.0) / 2));
    CHECK(dc.tau == doctest::Approx(std::exp(-pi / dc.mu)));
    CHECK(dc.sigma == doctest::Approx(std::pow(dc.tau, 1.5)));
    CHECK(decay_constants(5).mu == doctest::Approx(std::sqrt(2.0)));
    CHECK_THROWS_AS(decay_constants(3), DomainError);
    CHECK_THROWS_AS(decay_constants(8), DomainError);
  }

  TEST_CASE("oscillatory fit recovers synthetic amplitudes") {
    const auto dc = decay_constants(5);
    std::vector<double> r, w;
    for (int i = 0; i <= 4000; ++i) {
      const double x = std::exp(std::log(0.01) + i * std::log(1e4) / 4000);
      r.push_back(x);
      w.push_back(std::pow(x, -dc.beta) * (0.3 * std::cos(dc.mu * std::log(x)) - 1.2 * std::sin(dc.mu * std::log(x))));
    }
    const auto fit = fit_oscillation(r, w, dc, {0.1, 10.0});
    CHECK(fit.A1 == doctest::Approx(0.3).epsilon(1e-10));
    CHECK(fit.A2 == doctest::Approx(-1.2).epsilon(1e-10));
    CHECK(fit.residual_rms < 1e-12);
    CHECK(fit.amplitude() == doctest::Approx(std::hypot(0.3, 1.2)));

    CHECK_THROWS_AS(fit_oscillation(r, w, dc, {1e-3, 1.0}), DomainError);
    CHECK_THROWS_AS(fit_oscillation(r, w, dc, {2.0, 1.0}), DomainError);
    // A sliver of a period cannot separate cos from sin.
    std::vector<double> rd, wd;
    for (int i = 0; i <= 1000; ++i) {
      rd.push_back(1.0 + 1e-3 * i / 1000);
      wd.push_back(1.0 / rd.back());
    }
    CHECK_THROWS_AS(fit_oscillation(rd, wd, dc, {1.0, 1.001}), NumericalError);
    // Too sparse for the window.
    std::vector<double> rs{0.1, 1.0, 10.0}, ws{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(fit_oscillation(rs, ws, dc, {0.1, 10.0}), DomainError);
  }

  TEST_CASE("assemble_d") {
    const auto [d1, d2] = assemble_d(1.0, 2.0, 3.0, 5.0);
    CHECK(d1 == doctest::Approx(13.0));
    CHECK(d2 == doctest::Approx(-1.0));
  }

  TEST_CASE("matching constants for (2,2)") {
    const FlowParams P(2, 2);
    const auto mc = matching_constants(P, IntegratorConfig{});
    CHECK(mc.A1 == doctest::Approx(0.31977).epsilon(1e-3));
    CHECK(mc.A2 == doctest::Approx(-0.47395).epsilon(1e-3));
    CHECK(std::abs(mc.B1 - mc.B1_wronskian) < 1e-3 * std::abs(mc.B1));
    CHECK(std::abs(mc.B2 - mc.B2_wronskian) < 1e-3 * std::abs(mc.B2));
    CHECK(mc.D == doctest::Approx(0.6264).epsilon(1e-3));
    CHECK(mc.E >= 0.0);
    CHECK(mc.E < pi);

    // The shrinker phases mu log a_k line up with E.
    const auto dc = decay_constants(4);
    const auto recs = find_shrinkers(5, P, IntegratorConfig{});
    const auto rep = verify_shrinker_sequence(recs, P, dc);
    CHECK(rep.alternating);
    for (std::size_t i = 2; i < rep.phase.size(); ++i) CHECK(std::abs(rep.phase[i] - mc.E) < 1e-3);

    // Predicted expander slope against a direct shot.
    const double a = 1e-3;
    const auto shot = expander_slope(a, P, IntegratorConfig{});
    const double pred = predict_expander_slope(a, P, mc, dc);
    CHECK(std::abs(pred - shot.lambda_a) < 1e-3 * std::abs(shot.lambda_a - 1.0));
    CHECK_THROWS_AS(predict_expander_slope(0.5, P, mc, dc), DomainError);
    CHECK_THROWS_AS(matching_constants(FlowParams(1, 4), IntegratorConfig{}), DomainError);
  }
}
