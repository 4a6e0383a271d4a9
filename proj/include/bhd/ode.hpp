#pragma once

// Adaptive Dormand-Prince 5(4) stepper over Eigen dense states (vectors or
// matrices). Shared by the mean-field, master-equation and trajectory code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bhd/errors.hpp"

namespace bhd {

struct OdeControls {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_init = 0.0;  // 0 -> heuristic
  double h_min = 1e-14;
  double h_max = std::numeric_limits<double>::infinity();
  long max_steps = 100'000'000;
};

struct StepUnderflow : ConvergenceError {
  explicit StepUnderflow(const std::string& what) : ConvergenceError(what) {}
};

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evals = 0;
};

template <class State, class Rhs>
class Dopri5 {
 public:
  Dopri5(Rhs rhs, OdeControls controls) : rhs_(std::move(rhs)), c_(controls) {}

  const OdeStats& stats() const { return stats_; }
  double last_step() const { return h_; }

  /// Integrates y from t to t_end, landing exactly on t_end.
  void advance(double& t, State& y, double t_end) {
    if (t_end == t) return;
    const double dir = t_end > t ? 1.0 : -1.0;
    if (!have_k1_ || k1_t_ != t) {
      k1_.resizeLike(y);
      eval(t, y, k1_);
      have_k1_ = true;
      k1_t_ = t;
    }
    if (h_ <= 0.0) h_ = c_.h_init > 0.0 ? c_.h_init : initial_step(t, y);
    long steps = 0;
    while (dir * (t_end - t) > 0.0) {
      if (++steps > c_.max_steps) throw StepUnderflow("ode: exceeded max_steps");
      double h = std::min({h_, c_.h_max, std::abs(t_end - t)});
      const bool last = h >= std::abs(t_end - t);
      for (;;) {
        if (h < c_.h_min) {
          throw StepUnderflow("ode: step size underflow at t = " + std::to_string(t) + " (h = " + std::to_string(h) + ")");
        }
        const double err = attempt(t, y, dir * h);
        if (err <= 1.0) {
          ++stats_.accepted;
          const double t_new = last && h >= std::abs(t_end - t) ? t_end : t + dir * h;
          t = t_new;
          y.swap(y_new_);
          k1_.swap(k7_);
          k1_t_ = t;
          const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
          h_ = h * fac;
          break;
        }
        ++stats_.rejected;
        h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
      }
    }
  }

  /// One uncontrolled step of size h from (t, y); returns the 5th-order result.
  State single_step(double t, const State& y, double h) {
    State k1;
    k1.resizeLike(y);
    eval(t, y, k1);
    k1_ = k1;
    have_k1_ = true;
    k1_t_ = t;
    attempt(t, y, h);
    return y_new_;
  }

  /// Invalidates the cached first stage (call after modifying y externally).
  void reset() {
    have_k1_ = false;
  }

 private:
  void eval(double t, const State& y, State& out) {
    rhs_(t, y, out);
    ++stats_.rhs_evals;
  }

  double initial_step(double t, const State& y) {
    const double d0 = scaled_rms(y, y, y);
    const double d1 = scaled_rms(k1_, y, y);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    State y1 = y + h0 * k1_;
    State f1;
    f1.resizeLike(y);
    eval(t + h0, y1, f1);
    const double d2 = scaled_rms(State(f1 - k1_), y, y) / h0;
    const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
    return std::min(100.0 * h0, h1);
  }

  double scaled_rms(const State& e, const State& y0, const State& y1) const {
    const auto sc = c_.atol + c_.rtol * y0.array().abs().max(y1.array().abs());
    return std::sqrt((e.array().abs() / sc).square().mean());
  }

  double attempt(double t, const State& y, double h) {
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                            a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                            a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                            b6 = 11.0 / 84.0;
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                            e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

    tmp_ = y + (h * a21) * k1_;
    k2_.resizeLike(y);
    eval(t + h / 5.0, tmp_, k2_);
    tmp_ = y + h * (a31 * k1_ + a32 * k2_);
    k3_.resizeLike(y);
    eval(t + 0.3 * h, tmp_, k3_);
    tmp_ = y + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    k4_.resizeLike(y);
    eval(t + 0.8 * h, tmp_, k4_);
    tmp_ = y + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    k5_.resizeLike(y);
    eval(t + 8.0 / 9.0 * h, tmp_, k5_);
    tmp_ = y + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    k6_.resizeLike(y);
    eval(t + h, tmp_, k6_);
    y_new_ = y + h * (b1 * k1_ + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
    k7_.resizeLike(y);
    eval(t + h, y_new_, k7_);
    tmp_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    const double err = scaled_rms(tmp_, y, y_new_);
    return std::isfinite(err) ? err : 1e10;
  }

  Rhs rhs_;
  OdeControls c_;
  OdeStats stats_;
  double h_ = 0.0;
  bool have_k1_ = false;
  double k1_t_ = 0.0;
  State k1_, k2_, k3_, k4_, k5_, k6_, k7_, y_new_, tmp_;
};

template <class State, class Rhs>
Dopri5<State, Rhs> make_dopri5(Rhs rhs, OdeControls c = {}) {
  return Dopri5<State, Rhs>(std::move(rhs), c);
}

}  // namespace bhd
