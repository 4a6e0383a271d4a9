#pragma once

// Mean-field dynamics of the dimer in the beam-splitter basis, steady-state
// continuation over the drive, and the antibonding oscillation frequency.
//
// All mean-field quantities are in scaled (tilde) units: F~, U~ and
// alpha~ = alpha / sqrt(N). The equations are N-independent in those units.
//
//   d aB/dt = (i(Delta+J) - k) aB - iU(aB|aB|^2 + 2|aA|^2 aB + aA^2 conj(aB)) - i sqrt(2) F
//   d aA/dt = i(Delta-J) aA     - iU(aB^2 conj(aA) + 2|aB|^2 aA + aA|aA|^2)
//
// with k the amplitude damping rate (ModelParams::amplitude_damping()).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "bhd/model.hpp"
#include "bhd/ode.hpp"

namespace bhd {

struct MeanFieldState {
  cplx alpha_b{0.0, 0.0};
  cplx alpha_a{0.0, 0.0};
};

enum class MeanFieldUnits { scaled, physical };

namespace detail {
inline std::pair<double, double> mf_drive_and_u(const ModelParams& p, MeanFieldUnits units) {
  if (units == MeanFieldUnits::scaled) return {p.f_tilde, p.u_tilde};
  return {p.drive(), p.nonlinearity()};
}
}  // namespace detail

inline MeanFieldState mf_rhs(const MeanFieldState& s, const ModelParams& p,
                             MeanFieldUnits units = MeanFieldUnits::scaled) {
  const auto [f, u] = detail::mf_drive_and_u(p, units);
  const double k = p.amplitude_damping();
  const cplx b = s.alpha_b;
  const cplx a = s.alpha_a;
  const double nb = std::norm(b);
  const double na = std::norm(a);
  MeanFieldState d;
  d.alpha_b = (kI * (p.delta + p.j) - k) * b - kI * u * (b * nb + 2.0 * na * b + a * a * std::conj(b)) -
              std::sqrt(2.0) * kI * f;
  d.alpha_a = kI * (p.delta - p.j) * a - kI * u * (b * b * std::conj(a) + 2.0 * nb * a + a * na);
  return d;
}

struct MeanFieldSample {
  double t;
  MeanFieldState state;
};

/// Adaptive integration from t = 0 to t_final, sampled every `sample_dt`.
inline std::vector<MeanFieldSample> integrate(const MeanFieldState& s0, const ModelParams& p, double t_final,
                                              double sample_dt, OdeControls controls = {},
                                              MeanFieldUnits units = MeanFieldUnits::scaled) {
  using V = Eigen::Vector2cd;
  auto rhs = [&p, units](double, const V& y, V& dy) {
    const MeanFieldState d = mf_rhs({y(0), y(1)}, p, units);
    dy(0) = d.alpha_b;
    dy(1) = d.alpha_a;
  };
  auto stepper = make_dopri5<V>(rhs, controls);
  V y(s0.alpha_b, s0.alpha_a);
  double t = 0.0;
  std::vector<MeanFieldSample> out{{0.0, s0}};
  const long n = static_cast<long>(std::ceil(t_final / sample_dt - 1e-9));
  for (long i = 1; i <= n; ++i) {
    const double t_next = std::min(t_final, static_cast<double>(i) * sample_dt);
    stepper.advance(t, y, t_next);
    out.push_back({t, {y(0), y(1)}});
  }
  return out;
}

struct SteadyState {
  MeanFieldState state;
  Eigen::Matrix2d jacobian;  // d(Re f, Im f)/d(Re aB, Im aB) on the aA = 0 manifold
  int iterations = 0;
  double residual = 0.0;
};

namespace detail {

struct BondingResidual {
  Eigen::Vector2d f;
  Eigen::Matrix2d jac;
};

inline BondingResidual bonding_residual(cplx b, const ModelParams& p) {
  const double f_drive = p.f_tilde;
  const double u = p.u_tilde;
  const cplx lin = kI * (p.delta + p.j) - p.amplitude_damping();
  const cplx nl = -kI * u;
  const double n = std::norm(b);
  const cplx f = lin * b + nl * n * b - std::sqrt(2.0) * kI * f_drive;
  const double x = b.real();
  const double y = b.imag();
  const cplx dfx = lin + nl * (2.0 * x * b + n);
  const cplx dfy = kI * lin + nl * (2.0 * y * b + kI * n);
  BondingResidual r;
  r.f << f.real(), f.imag();
  r.jac << dfx.real(), dfy.real(), dfx.imag(), dfy.imag();
  return r;
}

}  // namespace detail

/// Newton solve of the bonding equation on the aA = 0 manifold.
inline SteadyState steady_state(const ModelParams& p, cplx guess = {0.0, 0.0}, int max_iter = 100) {
  if (!std::isfinite(guess.real()) || !std::isfinite(guess.imag())) throw std::invalid_argument("non-finite guess");
  cplx b = guess;
  auto r = detail::bonding_residual(b, p);
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::Vector2d step = r.jac.fullPivLu().solve(-r.f);
    // Backtracking on the residual norm.
    double lambda = 1.0;
    cplx trial = b + cplx(step(0), step(1));
    auto rt = detail::bonding_residual(trial, p);
    while (rt.f.norm() > r.f.norm() && lambda > 1e-4) {
      lambda *= 0.5;
      trial = b + lambda * cplx(step(0), step(1));
      rt = detail::bonding_residual(trial, p);
    }
    b = trial;
    r = rt;
    if (r.f.norm() < 1e-12) {
      return SteadyState{{b, 0.0}, r.jac, it, r.f.norm()};
    }
  }
  throw ConvergenceError("steady_state: Newton did not converge in " + std::to_string(max_iter) + " iterations",
                         {r.f.norm()});
}

struct SteadyBranch {
  std::vector<double> f_tilde;
  std::vector<cplx> alpha_b;
  std::vector<bool> converged;
  std::vector<int> n_solutions;  // distinct fixed points seen by the multi-start
  std::optional<double> jump_location;
  double jump_size = 0.0;
  int jump_count = 0;
};

/// Jump threshold: a step is a jump candidate when |d alpha_B| exceeds this
/// multiple of the median step over the sweep.
inline constexpr double kJumpMedianFactor = 10.0;

/// Candidates are re-tracked over this many substeps. A true jump keeps at
/// least kJumpConcentration of the change in one substep; a steep but
/// continuous stretch (near a fold) spreads it out.
inline constexpr int kJumpRefineSteps = 64;
inline constexpr double kJumpConcentration = 0.5;

namespace detail {

/// Largest substep fraction when tracking from (f_from, a_from) to f_to.
inline double jump_concentration(ModelParams p, double f_from, cplx a_from, double f_to) {
  cplx a = a_from;
  double largest = 0.0, total = 0.0;
  for (int k = 1; k <= kJumpRefineSteps; ++k) {
    p.f_tilde = f_from + (f_to - f_from) * k / kJumpRefineSteps;
    cplx next;
    try {
      next = steady_state(p, a).state.alpha_b;
    } catch (const ConvergenceError&) {
      return 1.0;
    }
    const double d = std::abs(next - a);
    largest = std::max(largest, d);
    total += d;
    a = next;
  }
  return total > 0.0 ? largest / total : 0.0;
}

}  // namespace detail

/// Order in which the drive grid is visited. Inside a bistable window the
/// tracked branch depends on it: an ascending sweep leaves the low-amplitude
/// branch at its upper fold, a descending sweep leaves the high-amplitude
/// branch at its lower fold.
enum class SweepDirection { ascending, descending };

/// Continuation over the drive grid. Each point is seeded from the previous
/// converged point; guesses 0, 1 and 3 are also tried to count coexisting
/// fixed points. Results are stored in grid order whatever the direction.
inline SteadyBranch continuation(ModelParams p, const std::vector<double>& f_grid,
                                 SweepDirection dir = SweepDirection::descending) {
  SteadyBranch br;
  const std::size_t n_grid = f_grid.size();
  br.f_tilde = f_grid;
  br.converged.assign(n_grid, false);
  br.alpha_b.assign(n_grid, cplx(std::nan(""), std::nan("")));
  br.n_solutions.assign(n_grid, 0);
  std::optional<cplx> prev;
  for (std::size_t step = 0; step < n_grid; ++step) {
    const std::size_t idx = dir == SweepDirection::ascending ? step : n_grid - 1 - step;
    const double f = f_grid[idx];
    p.f_tilde = f;
    std::vector<cplx> found;
    auto try_guess = [&](cplx g) -> std::optional<cplx> {
      try {
        return steady_state(p, g).state.alpha_b;
      } catch (const ConvergenceError&) {
        return std::nullopt;
      }
    };
    std::optional<cplx> chosen;
    if (prev) chosen = try_guess(*prev);
    for (cplx g : {cplx(0.0), cplx(1.0), cplx(3.0), cplx(0.0, -1.0), cplx(-1.0, -1.0)}) {
      auto s = try_guess(g);
      if (!s) continue;
      if (!chosen) chosen = s;
      if (std::none_of(found.begin(), found.end(), [&](cplx x) { return std::abs(x - *s) < 1e-8; })) {
        found.push_back(*s);
      }
    }
    if (chosen && std::none_of(found.begin(), found.end(), [&](cplx x) { return std::abs(x - *chosen) < 1e-8; })) {
      found.push_back(*chosen);
    }
    br.converged[idx] = chosen.has_value();
    if (chosen) br.alpha_b[idx] = *chosen;
    br.n_solutions[idx] = static_cast<int>(found.size());
    if (chosen) prev = chosen;
  }

  std::vector<double> steps;
  for (std::size_t i = 1; i < br.alpha_b.size(); ++i) {
    if (br.converged[i] && br.converged[i - 1]) steps.push_back(std::abs(br.alpha_b[i] - br.alpha_b[i - 1]));
  }
  if (steps.size() >= 2) {
    std::vector<double> sorted = steps;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    std::size_t best = 0;
    double best_size = -1.0;
    for (std::size_t i = 1; i < br.alpha_b.size(); ++i) {
      if (!(br.converged[i] && br.converged[i - 1])) continue;
      const double d = std::abs(br.alpha_b[i] - br.alpha_b[i - 1]);
      if (!(d > kJumpMedianFactor * median)) continue;
      const std::size_t from = dir == SweepDirection::ascending ? i - 1 : i;
      const std::size_t to = dir == SweepDirection::ascending ? i : i - 1;
      if (detail::jump_concentration(p, br.f_tilde[from], br.alpha_b[from], br.f_tilde[to]) < kJumpConcentration) {
        continue;
      }
      ++br.jump_count;
      if (d > best_size) {
        best_size = d;
        best = i;
      }
    }
    if (br.jump_count > 0) {
      br.jump_location = 0.5 * (br.f_tilde[best] + br.f_tilde[best - 1]);
      br.jump_size = best_size;
    }
  }
  return br;
}

/// The matrix V about the aA = 0 manifold at fixed aB,
///   V = [[ (J-Delta) + 2U|aB|^2,  U aB^2 ], [ -U conj(aB)^2, -(J-Delta) - 2U|aB|^2 ]],
/// with eigenvalues +-omega_A (real on a stable orbit).
inline Eigen::Matrix2cd frequency_matrix(cplx alpha_b, const ModelParams& p) {
  const double u = p.u_tilde;
  const double n = std::norm(alpha_b);
  const double d = (p.j - p.delta) + 2.0 * u * n;
  Eigen::Matrix2cd v;
  v << d, u * alpha_b * alpha_b, -u * std::conj(alpha_b) * std::conj(alpha_b), -d;
  return v;
}

/// Linear generator of (aA, conj aA): d/dt (aA, aA*)^T = M (aA, aA*)^T with
/// M = -i V, so M has eigenvalues +-i omega_A.
inline Eigen::Matrix2cd linearized_matrix(cplx alpha_b, const ModelParams& p) {
  return -kI * frequency_matrix(alpha_b, p);
}

struct OmegaA {
  double omega;      // sqrt(|radicand|)
  double radicand;   // (U|aB|^2 - Delta + J)(3U|aB|^2 - Delta + J)
  bool unstable;     // radicand < 0: omega is a growth rate, not a frequency
};

inline OmegaA omega_a(cplx alpha_b, const ModelParams& p) {
  const double un = p.u_tilde * std::norm(alpha_b);
  const double rad = (un - p.delta + p.j) * (3.0 * un - p.delta + p.j);
  return {std::sqrt(std::abs(rad)), rad, rad < 0.0};
}

}  // namespace bhd
