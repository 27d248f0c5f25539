// Explicit Runge-Kutta 8(5,3) stepper with 7th-order dense output.
// Step-size control follows the usual DOP853 recipe (combined 5th/3rd order
// error estimate, exponent -1/8).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>

#include "dop853_tableau.hpp"
#include "selfsim/error.hpp"

namespace selfsim::detail {

struct StepperOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  double first_step = 0.0;  // 0 selects automatically
};

template <std::size_t N>
class Dop853 {
 public:
  using State = std::array<double, N>;
  using Rhs = std::function<void(double, const State&, State&)>;

  Dop853(Rhs rhs, double t0, const State& y0, double t_bound, StepperOptions opt)
      : rhs_(std::move(rhs)), opt_(opt), t_(t0), t_bound_(t_bound), y_(y0) {
    dir_ = t_bound >= t0 ? 1.0 : -1.0;
    rhs_(t_, y_, f_);
    h_abs_ = opt_.first_step > 0 ? opt_.first_step : initial_step();
    t_old_ = t_;
    y_old_ = y_;
  }

  double t() const noexcept { return t_; }
  double t_old() const noexcept { return t_old_; }
  const State& y() const noexcept { return y_; }
  const State& y_old() const noexcept { return y_old_; }
  const State& f() const noexcept { return f_; }
  bool finished() const noexcept { return t_ == t_bound_; }

  // Advance one accepted step; throws NumericalError if the step size
  // collapses.
  void step() {
    using namespace dop853;
    const double min_step = 10.0 * std::abs(std::nextafter(t_, dir_ * INFINITY) - t_);
    double h_abs = std::clamp(h_abs_, min_step, opt_.max_step);
    bool rejected = false;
    for (;;) {
      if (h_abs < min_step) throw NumericalError("DOP853: step size underflow");
      double h = h_abs * dir_;
      double t_new = t_ + h;
      if (dir_ * (t_new - t_bound_) > 0) t_new = t_bound_;
      h = t_new - t_;
      h_abs = std::abs(h);

      K_[0] = f_;
      for (int s = 1; s < kStages; ++s) {
        State ys = y_;
        for (int j = 0; j < s; ++j) {
          const double a = A[s][j];
          if (a == 0.0) continue;
          for (std::size_t i = 0; i < N; ++i) ys[i] += h * a * K_[j][i];
        }
        rhs_(t_ + C[s] * h, ys, K_[s]);
      }
      State y_new = y_;
      for (int s = 0; s < kStages; ++s) {
        if (B[s] == 0.0) continue;
        for (std::size_t i = 0; i < N; ++i) y_new[i] += h * B[s] * K_[s][i];
      }
      State f_new;
      rhs_(t_new, y_new, f_new);
      K_[kStages] = f_new;

      double e5 = 0.0, e3 = 0.0;
      bool finite = true;
      for (std::size_t i = 0; i < N; ++i) {
        if (!std::isfinite(y_new[i])) finite = false;
        const double scale = opt_.abs_tol + std::max(std::abs(y_[i]), std::abs(y_new[i])) * opt_.rel_tol;
        double a5 = 0.0, a3 = 0.0;
        for (int s = 0; s <= kStages; ++s) {
          a5 += E5[s] * K_[s][i];
          a3 += E3[s] * K_[s][i];
        }
        a5 /= scale;
        a3 /= scale;
        e5 += a5 * a5;
        e3 += a3 * a3;
      }
      double err = 0.0;
      if (!finite) {
        err = std::numeric_limits<double>::infinity();
      } else if (e5 > 0.0 || e3 > 0.0) {
        err = h_abs * e5 / std::sqrt((e5 + 0.01 * e3) * static_cast<double>(N));
      }

      if (err < 1.0) {
        double factor = err == 0.0 ? kMaxFactor : std::min(kMaxFactor, kSafety * std::pow(err, -1.0 / 8.0));
        if (rejected) factor = std::min(1.0, factor);
        h_abs_ = h_abs * factor;
        h_prev_ = h;
        t_old_ = t_;
        y_old_ = y_;
        f_old_ = f_;
        t_ = t_new;
        y_ = y_new;
        f_ = f_new;
        dense_ready_ = false;
        return;
      }
      const double shrink = std::isfinite(err) ? std::max(kMinFactor, kSafety * std::pow(err, -1.0 / 8.0)) : 0.25;
      h_abs *= shrink;
      rejected = true;
    }
  }

  // Continuous extension over the last accepted step.
  State dense(double t) {
    using namespace dop853;
    if (!dense_ready_) build_dense();
    const double x = (t - t_old_) / h_prev_;
    State y{};
    for (int j = kInterpolatorPower - 1, i = 0; j >= 0; --j, ++i) {
      for (std::size_t c = 0; c < N; ++c) {
        y[c] += F_[j][c];
        y[c] *= (i % 2 == 0) ? x : 1.0 - x;
      }
    }
    for (std::size_t c = 0; c < N; ++c) y[c] += y_old_[c];
    return y;
  }

  // Locate the first zero of g(t, y) on the last step given the sign change
  // g_old -> g_new; returns the time.
  template <class G>
  double locate(G&& g, double g_old) {
    double lo = t_old_, hi = t_;
    double glo = g_old;
    for (int it = 0; it < 200 && std::abs(hi - lo) > 4 * std::numeric_limits<double>::epsilon() * std::abs(hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gm = g(mid, dense(mid));
      if ((gm > 0) == (glo > 0) && gm != 0.0) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
      }
    }
    return hi;
  }

 private:
  static constexpr double kSafety = 0.9;
  static constexpr double kMinFactor = 0.2;
  static constexpr double kMaxFactor = 10.0;

  double norm_scaled(const State& v, const State& scale_ref) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double sc = opt_.abs_tol + std::abs(scale_ref[i]) * opt_.rel_tol;
      acc += (v[i] / sc) * (v[i] / sc);
    }
    return std::sqrt(acc / static_cast<double>(N));
  }

  double initial_step() {
    const double interval = std::abs(t_bound_ - t_);
    if (interval == 0.0) return 0.0;
    const double d0 = norm_scaled(y_, y_);
    const double d1 = norm_scaled(f_, y_);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, interval);
    State y1 = y_;
    for (std::size_t i = 0; i < N; ++i) y1[i] += h0 * dir_ * f_[i];
    State f1;
    rhs_(t_ + h0 * dir_, y1, f1);
    State df;
    for (std::size_t i = 0; i < N; ++i) df[i] = f1[i] - f_[i];
    const double d2 = norm_scaled(df, y_) / h0;
    const double h1 = (d1 <= 1e-15 && d2 <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 1.0 / 8.0);
    return std::min({100 * h0, h1, interval, opt_.max_step});
  }

  void build_dense() {
    using namespace dop853;
    const double h = h_prev_;
    for (int s = kStages + 1; s < kStagesExtended; ++s) {
      State ys = y_old_;
      for (int j = 0; j < s; ++j) {
        const double a = A[s][j];
        if (a == 0.0) continue;
        for (std::size_t i = 0; i < N; ++i) ys[i] += h * a * K_[j][i];
      }
      rhs_(t_old_ + C[s] * h, ys, K_[s]);
    }
    for (std::size_t i = 0; i < N; ++i) {
      const double dy = y_[i] - y_old_[i];
      F_[0][i] = dy;
      F_[1][i] = h * f_old_[i] - dy;
      F_[2][i] = 2 * dy - h * (f_[i] + f_old_[i]);
      for (int r = 0; r < 4; ++r) {
        double acc = 0.0;
        for (int s = 0; s < kStagesExtended; ++s) acc += D[r][s] * K_[s][i];
        F_[3 + r][i] = h * acc;
      }
    }
    dense_ready_ = true;
  }

  Rhs rhs_;
  StepperOptions opt_;
  double t_, t_old_, t_bound_, dir_;
  double h_abs_ = 0.0, h_prev_ = 0.0;
  State y_, y_old_, f_, f_old_;
  std::array<State, dop853::kStagesExtended> K_{};
  std::array<State, dop853::kInterpolatorPower> F_{};
  bool dense_ready_ = false;
};

}  // namespace selfsim::detail
