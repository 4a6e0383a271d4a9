// Acceptance runner: one PASS/FAIL line per criterion.
//
//   bhd_acceptance          run every criterion
//   bhd_acceptance 5 7      run selected criteria
//
// Eigen solves go through the on-disk cache at $BHD_CACHE_DIR so criteria
// that share solves (7, 8, 9) only pay once.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "bhd/cache.hpp"
#include "bhd/perturbation.hpp"
#include "bhd/pipeline.hpp"
#include "bhd/trajectories.hpp"

using namespace bhd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

const EigenCache& cache() {
  static const EigenCache c(default_cache_root());
  return c;
}

// Krylov beyond the dense range, as the sweep runner does.
EigenSystem solve(const ModelParams& p, const Superoperator& l, Sector s, bool left = false) {
  SolverSettings st = sweep_solver_settings();
  st.compute_left = left;
  return cached_solve(&cache(), p, l, s, st);
}

EigenOperatorSet operator_set(const ModelParams& p, const Superoperator& l) {
  return make_operator_set(p, solve(p, l, Sector::ee), solve(p, l, Sector::oo), solve(p, l, Sector::eo));
}

Superoperator preset_liouvillian(const ModelParams& p) { return build_liouvillian(*preset_space(p.n_scale), p); }

int worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

// ---------------------------------------------------------------- 1-3: mean field

Outcome c1() {
  const auto ss = steady_state(monostable_preset(1.8, 1));
  const double re = std::abs(ss.state.alpha_b.real());
  const bool ok = std::abs(re - 1.269) <= 0.002 && ss.state.alpha_a == cplx(0.0);
  return {ok, fmt("alpha_B = %.6f%+.6fi (|Re| = %.4f), alpha_A = %.1g", ss.state.alpha_b.real(), ss.state.alpha_b.imag(),
                  re, std::abs(ss.state.alpha_a))};
}

Outcome c2() {
  const auto br = continuation(monostable_preset(), linear_axis(0.5, 2.0 + 1e-12, 0.01));
  const bool ok = br.jump_count == 1 && br.jump_location && std::abs(*br.jump_location - 0.93) <= 0.02;
  return {ok, fmt("%d jump(s), located at F~ = %.3f", br.jump_count, br.jump_location.value_or(NAN))};
}

Outcome c3() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  double worst = 0.0;
  int draws = 0;
  while (draws < 100) {
    ModelParams p;
    p.j = u(rng);
    p.delta = u(rng);
    p.u_tilde = u(rng);
    const cplx b(u(rng) - 1.0, u(rng) - 1.0);
    const auto w = omega_a(b, p);
    if (w.unstable) continue;
    ++draws;
    Eigen::ComplexEigenSolver<Eigen::Matrix2cd> es(linearized_matrix(b, p));
    for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(std::abs(es.eigenvalues()(i).imag()) - w.omega));
  }
  const double w0 = omega_a(1.269, monostable_preset()).omega;
  const bool ok = worst <= 1e-12 && std::abs(w0 - 3.13) <= 1e-3;
  return {ok, fmt("max |omega_A - |Im eig V|| = %.2e over %d draws; omega_A(1.269) = %.5f", worst, draws, w0)};
}

// ---------------------------------------------------------------- 4-6: spectrum

Outcome c4() {
  const auto p = monostable_preset(1.8, 1);
  const auto l = preset_liouvillian(p);
  std::string detail;
  bool ok = true;
  for (Sector s : {Sector::ee, Sector::oo}) {
    DenseOptions o;
    o.compute_vectors = false;
    const auto sys = dense_eig(extract_block(l, s), o);
    int zeros = 0;
    double gap = -INFINITY;
    for (const auto& q : sys.pairs) {
      if (std::abs(q.lambda) < 1e-8) {
        ++zeros;
      } else {
        gap = std::max(gap, q.lambda.real());
      }
    }
    ok = ok && zeros == 1 && gap < -1e-6;
    detail += fmt("%s: %d zero eigenvalue(s), max Re of the rest %.4g; ", sector_name(s), zeros, gap);
  }
  return {ok, detail};
}

Outcome c5() {
  const auto p = monostable_preset(1.8, 3);
  const auto sys = solve(p, preset_liouvillian(p), Sector::eo);
  const cplx lam = select_nonstationary(sys).lambda;
  const double w = omega_a(steady_state(monostable_preset(1.8, 1)).state.alpha_b, p).omega;
  const double rel = std::abs(std::abs(lam.imag()) - w) / w;
  return {rel <= 0.10, fmt("lambda_eo = %.5f%+.5fi, omega_A = %.4f, relative difference %.3f (%s)", lam.real(),
                           lam.imag(), w, rel, method_name(sys.report.method))};
}

Outcome c6() {
  const std::vector<double> grid = {0.7, 0.8, 0.9, 1.0, 1.1};
  std::vector<EigenSystem> systems;
  for (double f : grid) {
    const auto p = monostable_preset(f, 3);
    systems.push_back(solve(p, preset_liouvillian(p), Sector::eo));
  }
  const auto bp = track_branches(grid, systems);
  // A step is discontinuous when the selection switches branch and the jump in
  // Im lambda is over 3x the change along the continued branch. One such step
  // must lie in an interval bracketing 0.93 +- 0.1. Other switches are reported.
  std::string im, found, others;
  bool ok = false;
  for (const auto& b : bp) im += fmt("%.3f ", b.lambda.imag());
  for (std::size_t k = 1; k < bp.size(); ++k) {
    if (!bp[k].switched) continue;
    const double jump = std::abs(bp[k].lambda.imag() - bp[k - 1].lambda.imag());
    const double along = std::abs(bp[k].continued_lambda->imag() - bp[k - 1].lambda.imag());
    const bool discontinuous = jump > 3.0 * along;
    const bool brackets = grid[k] >= 0.83 && grid[k - 1] <= 1.03;
    const std::string line = fmt("%.1f-%.1f: jump %.3f vs %.3f along the continued branch%s", grid[k - 1], grid[k], jump,
                                 along, discontinuous ? "" : " (not discontinuous)");
    if (brackets && discontinuous && !ok) {
      ok = true;
      found = line;
    } else {
      others += (others.empty() ? "" : "; ") + line;
    }
  }
  return {ok, fmt("Im lambda_eo over F~ 0.7..1.1: %s; transition switch: %s; other switches: %s", im.c_str(),
                  found.empty() ? "none" : found.c_str(), others.empty() ? "none" : others.c_str())};
}

// ---------------------------------------------------------------- 7-9: noiseless subsystem, dephasing

double ee_oo_distance(const ModelParams& p) {
  return ns_report(operator_set(p, preset_liouvillian(p))).hs_distances.at(pair_name(Sector::ee, Sector::oo));
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

std::string list(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += fmt("%.3e ", x);
  return s;
}

Outcome c7() {
  std::vector<double> hi, lo;
  for (int n = 1; n <= 4; ++n) hi.push_back(ee_oo_distance(monostable_preset(1.8, n)));
  for (int n = 1; n <= 4; ++n) lo.push_back(ee_oo_distance(monostable_preset(0.5, n)));
  // "does not decrease" is read as "not strictly decreasing over N = 1..4".
  const bool ok = strictly_decreasing(hi) && !strictly_decreasing(lo);
  return {ok, "D(ee,oo) at F~=1.8: " + list(hi) + "; at F~=0.5: " + list(lo)};
}

Outcome c8() {
  const double rate = 0.1;
  std::vector<double> decay;
  for (int n = 1; n <= 4; ++n) {
    const auto p = monostable_preset(1.8, n);
    const auto sys = solve(p, preset_liouvillian(p), Sector::eo, true);
    decay.push_back(std::abs(dephasing_result(sys, select_nonstationary_index(sys), rate).extra_decay()));
  }
  // Ratio test at N = 1 against exact diagonalization.
  const auto p0 = monostable_preset(1.8, 1);
  const FockSpace space = *preset_space(1);
  const auto sys0 = dense_eig(extract_block(build_liouvillian(space, p0), Sector::eo));
  const std::size_t j = select_nonstationary_index(sys0);
  const cplx lam0 = sys0.pairs[j].lambda;
  const cplx lam1 = dephasing_shift(space, sys0.left(j), sys0.right(j));
  std::vector<double> ratio;
  for (double a : {1e-3, 1e-2}) {
    auto p = p0;
    p.dephase_rate = a;
    DenseOptions o;
    o.compute_vectors = false;
    const auto sys = dense_eig(extract_block(build_liouvillian(space, p), Sector::eo), o);
    cplx best = sys.pairs.front().lambda;
    for (const auto& q : sys.pairs)
      if (std::abs(q.lambda - lam0 - a * lam1) < std::abs(best - lam0 - a * lam1)) best = q.lambda;
    ratio.push_back(second_order_ratio(best, lam0, lam1, a));
  }
  // Bounded: finite, and not growing by more than 2x as alpha shrinks tenfold.
  const bool bounded = std::isfinite(ratio[0]) && std::isfinite(ratio[1]) && ratio[0] <= 2.0 * ratio[1];
  const bool ok = strictly_decreasing(decay) && bounded;
  return {ok, "|Re dlambda_eo| at rate 0.1, N=1..4: " + list(decay) +
                  fmt("; ratio at alpha=1e-3: %.4g, 1e-2: %.4g", ratio[0], ratio[1])};
}

Outcome c9() {
  std::vector<double> d;
  bool blocks = true;
  for (int n = 1; n <= 4; ++n) {
    auto p = monostable_preset(1.8, n);
    p.dephase_rate = 0.1;
    const auto l = preset_liouvillian(p);
    try {
      assert_sector_diagonal(l);
    } catch (const SymmetryViolation&) {
      blocks = false;
    }
    d.push_back(ns_report(operator_set(p, l)).hs_distances.at(pair_name(Sector::ee, Sector::oo)));
  }
  const bool ok = blocks && strictly_decreasing(d);
  return {ok, std::string("sector blocks exact: ") + (blocks ? "yes" : "no") + "; D(ee,oo) N=1..4: " + list(d)};
}

// ---------------------------------------------------------------- 10-11: dynamics

Outcome c10() {
  const FockSpace space(10, 4);
  const auto p = monostable_preset(1.8, 1);
  const auto l = build_liouvillian(space, p);
  const auto set = make_operator_set(p, dense_eig(extract_block(l, Sector::ee)), dense_eig(extract_block(l, Sector::oo)),
                                     dense_eig(extract_block(l, Sector::eo)));
  // At N = 1 a coherence of 0.5 overshoots positivity; 0.2 needs no repair.
  InitialStateSpec spec;
  spec.source = &set;
  spec.c0 = 0.2;
  const DenseMat rho0 = assemble_initial(spec).rho;
  const auto h = hamiltonian_bs(space, p);
  const auto jumps = jump_operators(space, p);
  const std::vector<double> grid = {0.5, 1.0, 1.5, 2.0, 2.5};
  const auto exact = master_evolve(rho0, h, jumps, grid);

  EnsembleOptions o;
  o.seed = 10;
  o.workers = worker_count();
  o.n_traj = 2000;
  const auto ens = run_ensemble(rho0, h, jumps, grid, o);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    worst = std::max(worst, (ens.rho_mean[k] - exact[k]).norm() / ens.standard_error(k));

  // Error scaling over nested ensembles (trajectory i is the same in each).
  std::vector<double> ln_n, ln_err;
  for (int n : {250, 1000, 4000}) {
    o.n_traj = n;
    const auto e = run_ensemble(rho0, h, jumps, grid, o);
    double err = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) err += (e.rho_mean[k] - exact[k]).norm();
    ln_n.push_back(std::log(double(n)));
    ln_err.push_back(std::log(err / double(grid.size())));
  }
  const double mx = (ln_n[0] + ln_n[1] + ln_n[2]) / 3.0, my = (ln_err[0] + ln_err[1] + ln_err[2]) / 3.0;
  double sxy = 0.0, sxx = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (ln_n[i] - mx) * (ln_err[i] - my);
    sxx += (ln_n[i] - mx) * (ln_n[i] - mx);
  }
  const double slope = sxy / sxx;
  const bool ok = worst <= 3.0 && std::abs(slope + 0.5) <= 0.15;
  return {ok, fmt("max ||rho_traj - rho_master||_F / SE over 5 times = %.2f (2000 trajectories); error slope %.3f", worst,
                  slope)};
}

// Peak-to-peak of y over samples with t in [t0, t1].
double swing(const std::vector<KickSample>& s, double t0, double t1, double KickSample::*field) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& x : s) {
    if (x.t < t0 - 1e-12 || x.t > t1 + 1e-12) continue;
    lo = std::min(lo, x.*field);
    hi = std::max(hi, x.*field);
  }
  return hi - lo;
}

Outcome c11() {
  const auto p = monostable_preset(1.8, 20);
  const FockSpace space = *preset_space(20);
  const auto l = build_liouvillian(space, p);
  // Plain Krylov does not converge on these blocks; shift-invert does.
  SolverSettings st;
  st.method = SolverMethod::shift_invert;
  const auto ee = cached_solve(&cache(), p, l, Sector::ee, st);
  const auto oo = cached_solve(&cache(), p, l, Sector::oo, st);
  const auto eo = cached_solve(&cache(), p, l, Sector::eo, st);
  const auto set = make_operator_set(p, ee, oo, eo);
  InitialStateSpec spec;
  spec.source = &set;
  const auto init = assemble_initial(spec);

  KickConfig cfg;
  cfg.t_final = 20.0;
  cfg.sample_dt = 0.05;
  const KickProtocol kick{2.5, 1.0};
  const auto res = kick_experiment(space, init.rho, hamiltonian_bs(space, p), jump_operators(space, p), kick, cfg);

  double peak = 0.0, peak_t = 0.0;
  for (const auto& s : res.series)
    if (s.t >= kick.t_kick && s.d_err_vs_clean > peak) {
      peak = s.d_err_vs_clean;
      peak_t = s.t;
    }
  double after = INFINITY;
  for (const auto& s : res.series)
    if (s.t >= peak_t) after = std::min(after, s.d_err_vs_clean);
  const double drop = 1.0 - after / peak;

  const double a3 = swing(res.series, 10.0, 15.0, &KickSample::d_clean_vs_init);
  const double a4 = swing(res.series, 15.0, 20.0, &KickSample::d_clean_vs_init);
  const double drift = std::abs(a4 - a3) / a3;
  const bool ok = drop >= 0.5 && a3 > 0.0 && drift < 0.10;
  return {ok, fmt("lambda_eo = %.5f%+.4fi, repair %.1e; D(err,clean) peak %.4g at t=%.2f, min after %.4g (drop %.0f%%); "
                  "D(rho,rho0) swing %.4g on [10,15], %.4g on [15,20] (drift %.1f%%)",
                  set.lambdas[1].real(), set.lambdas[1].imag(), init.repair, peak, peak_t, after, 100.0 * drop, a3, a4,
                  100.0 * drift)};
}

// ---------------------------------------------------------------- 12: infrastructure

DenseMat random_dense(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  DenseMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cplx(g(rng), g(rng));
  return m;
}

Outcome c12() {
  std::mt19937_64 rng(12);
  const DenseMat a = random_dense(5, rng), x = random_dense(5, rng), b = random_dense(5, rng);
  const SparseMat k = kron(SparseMat(b.transpose().sparseView()), SparseMat(a.sparseView()));
  const double kron_err = (vectorize(DenseMat(a * x * b)) - k * vectorize(x)).cwiseAbs().maxCoeff();

  const FockSpace s(6, 4);
  const auto p = monostable_preset(1.8, 1);
  const auto l = build_liouvillian(s, p);
  const DenseMat rho = random_dense(s.dim(), rng);
  const DenseMat h = hamiltonian_bs(s, p).dense();
  DenseMat want = -kI * (h * rho - rho * h);
  for (const auto& j : jump_operators(s, p)) {
    const DenseMat lj = j.op.dense();
    const DenseMat ldl = lj.adjoint() * lj;
    want += j.rate * (lj * rho * lj.adjoint() - 0.5 * (ldl * rho + rho * ldl));
  }
  const double action_err = (bhd::apply(l, rho) - want).cwiseAbs().maxCoeff();

  const auto small = build_liouvillian(FockSpace(4, 2), p);
  Eigen::ComplexEigenSolver<DenseMat> full(DenseMat(small.matrix), false);
  std::vector<cplx> rest(full.eigenvalues().data(), full.eigenvalues().data() + full.eigenvalues().size());
  double spec_err = 0.0;
  for (Sector sec : kAllSectors) {
    Eigen::ComplexEigenSolver<DenseMat> es(DenseMat(extract_block(small, sec).matrix), false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const cplx z = es.eigenvalues()(i);
      auto it = std::min_element(rest.begin(), rest.end(), [&](cplx u, cplx v) { return std::abs(u - z) < std::abs(v - z); });
      spec_err = std::max(spec_err, std::abs(*it - z));
      rest.erase(it);
    }
  }
  const bool all_matched = rest.empty();

  bool raised = false;
  auto js = jump_operators(FockSpace(4, 3), p);
  js.push_back({0.1, lab_mode_number(FockSpace(4, 3)), "n1"});
  try {
    assert_sector_diagonal(build_liouvillian(hamiltonian_bs(FockSpace(4, 3), p), js));
  } catch (const SymmetryViolation&) {
    raised = true;
  }
  const bool ok = kron_err <= 1e-13 && action_err <= 1e-12 && spec_err <= 1e-10 && all_matched && raised;
  return {ok, fmt("vec(AXB) %.1e, action %.1e, block spectrum %.1e, lab-mode dephasing %s", kron_err, action_err, spec_err,
                  raised ? "raises SymmetryViolation" : "NOT rejected")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria = {{1, c1}, {2, c2}, {3, c3},   {4, c4},   {5, c5},   {6, c6},
                                                            {7, c7}, {8, c8}, {9, c9}, {10, c10}, {11, c11}, {12, c12}};
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [id, f] : criteria) selected.push_back(id);

  int failed = 0;
  for (int id : selected) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::printf("criterion %d: FAIL  unknown criterion\n", id);
      ++failed;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
