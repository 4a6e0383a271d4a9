#pragma once

// Solver selection shared by the CLI, tests and acceptance runs: one place
// that decides dense vs Krylov for a sector block and records the decision.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "bhd/eigensolver.hpp"
#include "bhd/liouvillian.hpp"
#include "bhd/model.hpp"
#include "bhd/semiclassical.hpp"
#include "bhd/spectral.hpp"

namespace bhd {

enum class SolverMethod { automatic, dense, krylov, shift_invert };

inline const char* solver_method_name(SolverMethod m) {
  switch (m) {
    case SolverMethod::automatic: return "auto";
    case SolverMethod::dense: return "dense";
    case SolverMethod::krylov: return "krylov";
    default: return "shift-invert";
  }
}

inline SolverMethod solver_method_from_name(const std::string& s) {
  if (s == "auto") return SolverMethod::automatic;
  if (s == "dense") return SolverMethod::dense;
  if (s == "krylov") return SolverMethod::krylov;
  if (s == "shift-invert") return SolverMethod::shift_invert;
  throw ConfigError("unknown solver method '" + s + "' (expected auto, dense, krylov or shift-invert)");
}

struct SolverSettings {
  SolverMethod method = SolverMethod::automatic;
  int dense_limit = 20000;
  /// `auto` picks dense up to this block size and Krylov above it.
  int auto_dense_max = 2000;
  KrylovOptions krylov;
  /// Shift-invert targets; empty means targets_for() picks them from the model.
  ShiftInvertOptions shift_invert{{}, 4};
  /// Left eigenvectors (needed for perturbative shifts).
  bool compute_left = false;
  /// Keep only the leading pairs of a dense solve (0 keeps all).
  int keep_pairs = 0;

  friend bool operator==(const SolverSettings& a, const SolverSettings& b) {
    return a.method == b.method && a.dense_limit == b.dense_limit && a.auto_dense_max == b.auto_dense_max &&
           a.krylov.n_pairs == b.krylov.n_pairs && a.krylov.krylov_dim == b.krylov.krylov_dim &&
           a.krylov.max_restarts == b.krylov.max_restarts && a.krylov.tol == b.krylov.tol &&
           a.krylov.seed == b.krylov.seed && a.shift_invert.shifts == b.shift_invert.shifts &&
           a.shift_invert.n_pairs == b.shift_invert.n_pairs && a.compute_left == b.compute_left && a.keep_pairs == b.keep_pairs;
  }
};

/// Settings that converge on the preset ladder up to N = 20 away from the
/// transition (the library defaults of KrylovOptions are smaller).
inline SolverSettings sweep_solver_settings() {
  SolverSettings s;
  s.krylov.n_pairs = 4;
  s.krylov.krylov_dim = 200;
  s.krylov.max_restarts = 400;
  s.keep_pairs = 16;
  return s;
}

/// The method that will actually run for a block of the given size.
inline SolverMethod resolve_method(const SolverSettings& s, int block_size) {
  if (s.method != SolverMethod::automatic) return s.method;
  return block_size <= s.auto_dense_max ? SolverMethod::dense : SolverMethod::krylov;
}

/// Default shift-invert targets: just right of 0 for the steady sectors, and
/// at +-i omega_A of the mean-field steady state for the coherence sectors.
inline std::vector<cplx> targets_for(const ModelParams& p, Sector sector) {
  constexpr double kOffset = 0.05;
  if (sector == Sector::ee || sector == Sector::oo) return {cplx(kOffset, 0.0)};
  double w = std::abs(p.j - p.delta);
  try {
    const auto ss = steady_state(p);
    const auto oa = omega_a(ss.state.alpha_b, p);
    if (!oa.unstable) w = oa.omega;
  } catch (const std::exception&) {
  }
  return {cplx(kOffset, w), cplx(kOffset, -w)};
}

inline EigenSystem solve_block(const SectorBlock& block, const SolverSettings& s,
                               const std::vector<cplx>& default_shifts = {}) {
  const SolverMethod m = resolve_method(s, block.size());
  if (m == SolverMethod::dense) {
    DenseOptions o;
    o.dense_limit = s.dense_limit;
    EigenSystem sys = dense_eig(block, o);
    if (s.keep_pairs > 0 && sys.pairs.size() > static_cast<std::size_t>(s.keep_pairs)) {
      sys.pairs.resize(static_cast<std::size_t>(s.keep_pairs));
    }
    return sys;
  }
  if (m == SolverMethod::shift_invert) {
    ShiftInvertOptions o = s.shift_invert;
    o.compute_left = s.compute_left;
    if (o.shifts.empty()) o.shifts = default_shifts;
    if (o.shifts.empty()) throw ConfigError("shift-invert solve needs at least one shift");
    return shift_invert_eig(block, o);
  }
  KrylovOptions o = s.krylov;
  o.compute_left = s.compute_left;
  return s.compute_left ? krylov_eig_with_left(block, o) : krylov_eig(block, o);
}

inline EigenSystem solve_sector(const Superoperator& l, Sector sector, const SolverSettings& s,
                                const std::vector<cplx>& default_shifts = {}) {
  return solve_block(extract_block(l, sector), s, default_shifts);
}

/// Liouvillian of the model on its preset (or given) space.
inline FockSpace model_space(const ModelParams& p, std::optional<int> k_b = std::nullopt,
                             std::optional<int> k_a = std::nullopt) {
  const auto preset = preset_space(p.n_scale);
  if (!preset && !k_b) throw ConfigError("no preset cutoff for N = " + std::to_string(p.n_scale) + "; set k_b");
  return FockSpace(k_b.value_or(preset ? preset->k_b() : 1), k_a.value_or(kAntibondingCutoff));
}

struct ConvergenceStep {
  int k_b = 0;
  int k_a = 0;
  cplx lambda;
  SolveReport report;
  double change = 0.0;  // |lambda - previous lambda|; 0 for the first rung
  bool stable = false;  // change below the tolerance
};

struct ConvergenceReport {
  Sector sector = Sector::ee;
  double tol = 1e-6;
  std::vector<ConvergenceStep> steps;
  /// Smallest k_b from which every later rung agrees within tol.
  std::optional<int> stable_from;
};

/// Tracks the eigenvalue of interest over increasing k_b: the leading pair
/// for ee/oo, select_nonstationary for eo/oe. Never throws on instability;
/// a rung whose solve fails is recorded as unconverged.
inline ConvergenceReport convergence_sweep(const ModelParams& p, Sector sector, const std::vector<int>& k_b_ladder,
                                           int k_a = kAntibondingCutoff, const SolverSettings& s = {},
                                           double tol = 1e-6) {
  for (std::size_t i = 1; i < k_b_ladder.size(); ++i) {
    if (k_b_ladder[i] <= k_b_ladder[i - 1]) throw ConfigError("convergence_sweep: ladder must increase");
  }
  ConvergenceReport rep;
  rep.sector = sector;
  rep.tol = tol;
  for (int kb : k_b_ladder) {
    const FockSpace space(kb, k_a);
    const Superoperator l = build_liouvillian(space, p);
    ConvergenceStep st;
    st.k_b = kb;
    st.k_a = k_a;
    try {
      std::vector<cplx> shifts;
      if (resolve_method(s, static_cast<int>(l.mask(sector).size())) == SolverMethod::shift_invert) {
        shifts = targets_for(p, sector);
      }
      const EigenSystem sys = solve_sector(l, sector, s, shifts);
      st.report = sys.report;
      st.lambda = (sector == Sector::ee || sector == Sector::oo) ? sys.pairs.front().lambda
                                                                 : select_nonstationary(sys).lambda;
    } catch (const ConvergenceError&) {
      st.report.converged = false;
      st.lambda = cplx(std::nan(""), std::nan(""));
    }
    if (!rep.steps.empty()) {
      st.change = std::abs(st.lambda - rep.steps.back().lambda);
      st.stable = st.report.converged && rep.steps.back().report.converged && st.change < tol;
    }
    rep.steps.push_back(st);
  }
  for (std::size_t i = rep.steps.size(); i-- > 1;) {
    if (!rep.steps[i].stable) break;
    rep.stable_from = rep.steps[i - 1].k_b;
  }
  return rep;
}

}  // namespace bhd
