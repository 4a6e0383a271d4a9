#pragma once

// Quantum-jump trajectories, direct master-equation propagation and the
// phase-kick recovery experiment.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "bhd/model.hpp"
#include "bhd/ode.hpp"
#include "bhd/spectral.hpp"

namespace bhd {

// ---------------------------------------------------------------- seeds

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of trajectory i: splitmix64(seed XOR splitmix64(i)). Independent of
/// scheduling, so ensembles are reproducible for any worker count.
inline std::uint64_t trajectory_seed(std::uint64_t seed, std::uint64_t i) { return splitmix64(seed ^ splitmix64(i)); }

// ---------------------------------------------------------------- initial state

struct InitialStateSpec {
  double b = 0.5;
  cplx c0{0.5, 0.0};
  const EigenOperatorSet* source = nullptr;
};

struct InitialState {
  DenseMat rho;
  double repair = 0.0;  // sum of clipped negative eigenvalues (absolute)
};

inline constexpr double kNegativityTol = 1e-8;
inline constexpr double kMaxRepair = 0.05;

/// Clips eigenvalues below -1e-8 to zero and renormalizes the trace.
inline InitialState repair_positivity(const DenseMat& x) {
  const DenseMat h = 0.5 * (x + x.adjoint());
  Eigen::SelfAdjointEigenSolver<DenseMat> es(h);
  Eigen::VectorXd w = es.eigenvalues();
  InitialState out;
  bool clipped = false;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (w(i) < -kNegativityTol) {
      out.repair += -w(i);
      w(i) = 0.0;
      clipped = true;
    }
  }
  if (!clipped) {
    out.rho = h / h.trace().real();
    return out;
  }
  w /= w.sum();
  out.rho = es.eigenvectors() * w.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
  return out;
}

/// rho(0) = b r_ee + (1-b) r_oo + c0 r_eo + conj(c0) r_oe, made Hermitian and
/// repaired to a positive unit-trace matrix.
inline InitialState assemble_initial(const InitialStateSpec& spec) {
  if (spec.source == nullptr) throw std::invalid_argument("assemble_initial: no eigenoperator set");
  if (spec.b < 0.0 || spec.b > 1.0) throw std::invalid_argument("assemble_initial: b outside [0, 1]");
  const auto& s = *spec.source;
  const DenseMat x = spec.b * s.r_ee + (1.0 - spec.b) * s.r_oo + spec.c0 * s.r_eo + std::conj(spec.c0) * s.r_oe;
  InitialState out = repair_positivity(x);
  if (out.repair > kMaxRepair) {
    throw PositivityError("assemble_initial: positivity repair " + std::to_string(out.repair) + " exceeds " +
                              std::to_string(kMaxRepair) + "; reduce |c0|",
                          out.repair);
  }
  return out;
}

// ---------------------------------------------------------------- kicks and distances

struct KickProtocol {
  double t_kick = 2.5;
  double delta_phi = 1.0;
};

/// Diagonal of exp(i delta_phi (n_B + n_A)).
inline DenseVec kick_phases(const FockSpace& s, double delta_phi) {
  DenseVec d(s.dim());
  for (int i = 0; i < s.dim(); ++i) d(i) = std::polar(1.0, delta_phi * (s.n_b(i) + s.n_a(i)));
  return d;
}

inline DenseVec apply_kick(const FockSpace& s, const DenseVec& psi, double delta_phi) {
  return kick_phases(s, delta_phi).cwiseProduct(psi);
}

inline DenseMat apply_kick(const FockSpace& s, const DenseMat& rho, double delta_phi) {
  const DenseVec d = kick_phases(s, delta_phi);
  return d.asDiagonal() * rho * d.conjugate().asDiagonal();
}

/// Tr[(a - b)^dag (a - b)].
inline double distance(const DenseMat& a, const DenseMat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("distance: shape mismatch");
  return (a - b).squaredNorm();
}

// ---------------------------------------------------------------- master equation

/// Matrix-form Lindblad right-hand side:
/// d rho/dt = -i (H_eff rho - rho H_eff^dag) + sum_k L_k rho L_k^dag with
/// L_k scaled by sqrt(rate_k) and H_eff = H - (i/2) sum_k L_k^dag L_k.
struct LindbladRhs {
  SparseMat h_eff;
  SparseMat h_eff_adj;
  std::vector<SparseMat> l;
  std::vector<SparseMat> l_adj;

  LindbladRhs(const OperatorMatrix& h, const std::vector<JumpOperator>& jumps) {
    SparseMat heff = h.matrix();
    for (const auto& j : jumps) {
      if (!(j.op.space() == h.space())) throw DimensionError("LindbladRhs: jump operator on a different space");
      const SparseMat lk = std::sqrt(j.rate) * j.op.matrix();
      const SparseMat lka = lk.adjoint();
      heff = heff - cplx(0.0, 0.5) * SparseMat(lka * lk);
      l.push_back(lk);
      l_adj.push_back(lka);
    }
    h_eff = heff;
    h_eff_adj = heff.adjoint();
  }

  void operator()(double, const DenseMat& rho, DenseMat& out) const {
    out.noalias() = -kI * (h_eff * rho);
    out.noalias() += kI * (rho * h_eff_adj);
    for (std::size_t k = 0; k < l.size(); ++k) {
      const DenseMat tmp = rho * l_adj[k];
      out.noalias() += l[k] * tmp;
    }
  }
};

/// Default controls for master-equation and trajectory propagation.
inline OdeControls propagation_controls() {
  OdeControls c;
  c.rtol = 1e-8;
  c.atol = 1e-10;
  return c;
}

/// Propagates rho0 and returns rho at each time of t_grid (which must be
/// non-decreasing and start at or after 0; rho0 is taken at t = 0).
inline std::vector<DenseMat> master_evolve(const DenseMat& rho0, const OperatorMatrix& h,
                                           const std::vector<JumpOperator>& jumps, const std::vector<double>& t_grid,
                                           OdeControls controls = propagation_controls()) {
  LindbladRhs rhs(h, jumps);
  auto f = [&rhs](double t, const DenseMat& y, DenseMat& dy) { rhs(t, y, dy); };
  auto stepper = make_dopri5<DenseMat>(f, controls);
  DenseMat y = rho0;
  double t = 0.0;
  std::vector<DenseMat> out;
  out.reserve(t_grid.size());
  for (double tk : t_grid) {
    if (tk < t) throw std::invalid_argument("master_evolve: time grid must be non-decreasing");
    stepper.advance(t, y, tk);
    out.push_back(y);
  }
  return out;
}

/// Same propagation through a vectorized superoperator (small systems).
inline std::vector<DenseMat> master_evolve(const DenseMat& rho0, const Superoperator& l,
                                           const std::vector<double>& t_grid,
                                           OdeControls controls = propagation_controls()) {
  const SparseMat& a = l.matrix;
  auto f = [&a](double, const DenseVec& y, DenseVec& dy) { dy.noalias() = a * y; };
  auto stepper = make_dopri5<DenseVec>(f, controls);
  DenseVec y = vectorize(rho0);
  double t = 0.0;
  std::vector<DenseMat> out;
  for (double tk : t_grid) {
    if (tk < t) throw std::invalid_argument("master_evolve: time grid must be non-decreasing");
    stepper.advance(t, y, tk);
    out.push_back(devectorize(y, l.space.dim()));
  }
  return out;
}

// ---------------------------------------------------------------- quantum jumps

struct JumpRecord {
  double t;
  int channel;
};

struct PureTrajectory {
  std::vector<double> times;
  std::vector<DenseVec> states;  // unit norm at each sample time
  std::vector<JumpRecord> jumps;
};

/// Norm-threshold quantum-jump integrator. The unnormalized state evolves
/// under H_eff until its squared norm falls to a uniform threshold; the
/// crossing time is located by bracketed root finding, a jump channel is drawn
/// with probability proportional to rate_k ||L_k psi||^2, and the state is
/// renormalized.
class QuantumJumpIntegrator {
 public:
  QuantumJumpIntegrator(const LindbladRhs& sys, DenseVec psi0, std::uint64_t seed, double t0 = 0.0,
                        OdeControls controls = propagation_controls())
      : sys_(&sys), psi_(std::move(psi0)), t_(t0), rng_(seed), controls_(controls) {
    const double n = psi_.norm();
    if (std::abs(n - 1.0) > 1e-10) throw std::invalid_argument("qjump: initial state must have unit norm");
    threshold_ = draw();
  }

  double time() const { return t_; }
  const std::vector<JumpRecord>& jumps() const { return jumps_; }
  DenseVec state() const { return psi_ / psi_.norm(); }

  /// Replaces the state (e.g. after a kick); keeps the RNG stream and the
  /// current jump threshold relative to the state's squared norm.
  void set_state(const DenseVec& psi) {
    const double n2 = psi_.squaredNorm();
    psi_ = psi * std::sqrt(n2) / psi.norm();
  }

  void evolve_to(double t_end) {
    auto rhs = [this](double, const DenseVec& y, DenseVec& dy) { dy.noalias() = -kI * (sys_->h_eff * y); };
    while (t_ < t_end) {
      const double rate = jump_rate();
      double chunk = t_end - t_;
      if (rate > 0.0) chunk = std::min(chunk, 0.25 / rate);
      const double t0 = t_;
      const DenseVec psi0 = psi_;
      auto stepper = make_dopri5<DenseVec>(rhs, controls_);
      double t = t0;
      DenseVec y = psi0;
      stepper.advance(t, y, t0 + chunk);
      if (y.squaredNorm() > threshold_) {
        t_ = t;
        psi_ = y;
        continue;
      }
      // Illinois regula falsi on g(tau) = ||psi(tau)||^2 - threshold over [t0, t0 + chunk].
      double a = t0, b = t0 + chunk;
      double ga = psi0.squaredNorm() - threshold_;
      double gb = y.squaredNorm() - threshold_;
      DenseVec yb = y;
      int side = 0;
      for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::abs(b)); ++it) {
        double c = (a * gb - b * ga) / (gb - ga);
        if (!(c > a && c < b)) c = 0.5 * (a + b);
        double tc = t0;
        DenseVec yc = psi0;
        auto s2 = make_dopri5<DenseVec>(rhs, controls_);
        s2.advance(tc, yc, c);
        const double gc = yc.squaredNorm() - threshold_;
        if (std::abs(gc) <= 1e-12 * threshold_) {
          b = c;
          yb = yc;
          break;
        }
        if (gc > 0.0) {
          a = c;
          ga = gc;
          if (side == -1) gb *= 0.5;
          side = -1;
        } else {
          b = c;
          gb = gc;
          yb = yc;
          if (side == 1) ga *= 0.5;
          side = 1;
        }
      }
      t_ = b;
      psi_ = yb;
      jump();
    }
  }

 private:
  double draw() {
    double u = 0.0;
    while (u == 0.0) u = uni_(rng_);
    return u;
  }

  double jump_rate() const {
    const double n2 = psi_.squaredNorm();
    double r = 0.0;
    for (const auto& l : sys_->l) r += (l * psi_).squaredNorm();
    return r / n2;
  }

  void jump() {
    std::vector<DenseVec> cand;
    std::vector<double> w;
    double total = 0.0;
    for (const auto& l : sys_->l) {
      cand.push_back(l * psi_);
      w.push_back(cand.back().squaredNorm());
      total += w.back();
    }
    if (total <= 0.0) throw ConvergenceError("qjump: threshold reached with zero jump weight");
    const double u = draw() * total;
    std::size_t k = 0;
    double acc = w[0];
    while (acc < u && k + 1 < w.size()) acc += w[++k];
    psi_ = cand[k] / std::sqrt(w[k]);
    jumps_.push_back({t_, static_cast<int>(k)});
    threshold_ = draw();
  }

  const LindbladRhs* sys_;
  DenseVec psi_;
  double t_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> uni_{0.0, 1.0};
  OdeControls controls_;
  double threshold_ = 0.5;
  std::vector<JumpRecord> jumps_;
};

inline PureTrajectory qjump_evolve(const DenseVec& psi0, const OperatorMatrix& h,
                                   const std::vector<JumpOperator>& jumps, const std::vector<double>& t_grid,
                                   std::uint64_t seed, OdeControls controls = propagation_controls()) {
  LindbladRhs sys(h, jumps);
  QuantumJumpIntegrator q(sys, psi0, seed, 0.0, controls);
  PureTrajectory out;
  for (double t : t_grid) {
    q.evolve_to(t);
    out.times.push_back(t);
    out.states.push_back(q.state());
  }
  out.jumps = q.jumps();
  return out;
}

/// Samples pure initial states from the spectral decomposition of rho0.
class MixedStateSampler {
 public:
  explicit MixedStateSampler(const DenseMat& rho0) {
    Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (rho0 + rho0.adjoint()));
    vecs_ = es.eigenvectors();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      acc += std::max(0.0, es.eigenvalues()(i));
      cdf_.push_back(acc);
    }
    if (acc <= 0.0) throw std::invalid_argument("MixedStateSampler: no positive weight");
    for (auto& c : cdf_) c /= acc;
  }
  DenseVec sample(double u) const {
    const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
    const auto i = static_cast<Eigen::Index>(std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1));
    return vecs_.col(i).normalized();
  }

 private:
  DenseMat vecs_;
  std::vector<double> cdf_;
};

struct EnsembleOptions {
  int n_traj = 1000;
  std::uint64_t seed = 1;
  int workers = 1;
  OdeControls controls = propagation_controls();
};

struct TrajectoryEnsemble {
  int n_traj = 0;
  std::uint64_t seed = 0;
  std::vector<double> sample_times;
  std::vector<DenseMat> rho_mean;               // per sample time
  std::vector<std::vector<JumpRecord>> jump_log;  // per trajectory

  /// Standard error of rho_mean in Frobenius norm: for pure samples
  /// E||rho_n - rho||^2 = (1 - ||rho||^2) / n.
  double standard_error(std::size_t k) const {
    const double v = std::max(0.0, 1.0 - rho_mean[k].squaredNorm());
    return std::sqrt(v / std::max(1, n_traj - 1));
  }
};

namespace detail {
/// Runs f(i) for i in [0, n) on `workers` threads.
template <class F>
void parallel_for(int n, int workers, F&& f) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) f(i);
    });
  }
  for (auto& th : pool) th.join();
}
}  // namespace detail

/// Averages n_traj trajectories started from pure states sampled from rho0.
/// The first uniform draw of each trajectory's stream picks the initial state.
/// Reduction is in trajectory order, so results do not depend on `workers`.
inline TrajectoryEnsemble run_ensemble(const DenseMat& rho0, const OperatorMatrix& h,
                                       const std::vector<JumpOperator>& jumps, const std::vector<double>& t_grid,
                                       const EnsembleOptions& opts) {
  LindbladRhs sys(h, jumps);
  MixedStateSampler sampler(rho0);
  TrajectoryEnsemble ens;
  ens.n_traj = opts.n_traj;
  ens.seed = opts.seed;
  ens.sample_times = t_grid;
  ens.rho_mean.assign(t_grid.size(), DenseMat::Zero(rho0.rows(), rho0.cols()));
  ens.jump_log.resize(static_cast<std::size_t>(opts.n_traj));

  const int batch = std::max(1, opts.workers) * 8;
  for (int start = 0; start < opts.n_traj; start += batch) {
    const int count = std::min(batch, opts.n_traj - start);
    std::vector<std::vector<DenseVec>> states(static_cast<std::size_t>(count));
    detail::parallel_for(count, opts.workers, [&](int j) {
      const int i = start + j;
      const std::uint64_t ts = trajectory_seed(opts.seed, static_cast<std::uint64_t>(i));
      std::mt19937_64 pick(ts);
      const DenseVec psi0 = sampler.sample(std::uniform_real_distribution<double>(0.0, 1.0)(pick));
      QuantumJumpIntegrator q(sys, psi0, splitmix64(ts), 0.0, opts.controls);
      for (double t : t_grid) {
        q.evolve_to(t);
        states[static_cast<std::size_t>(j)].push_back(q.state());
      }
      ens.jump_log[static_cast<std::size_t>(i)] = q.jumps();
    });
    for (int j = 0; j < count; ++j) {
      for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const DenseVec& v = states[static_cast<std::size_t>(j)][k];
        ens.rho_mean[k].noalias() += v * v.adjoint();
      }
    }
  }
  for (auto& r : ens.rho_mean) r /= static_cast<double>(opts.n_traj);
  return ens;
}

// ---------------------------------------------------------------- kick experiment

enum class EvolutionMode { master, trajectory };

struct KickConfig {
  double t_final = 20.0;
  double sample_dt = 0.05;
  EvolutionMode mode = EvolutionMode::master;
  int n_traj = 200;
  std::uint64_t seed = 1;
  int workers = 1;
  std::vector<double> wigner_times;
  double wigner_half_width = 4.0;
  double wigner_step = 0.05;
  /// When set, Wigner snapshots and <a> are co-rotated by exp(i w t n_A),
  /// which freezes an eo coherence oscillating at frequency w.
  std::optional<double> rotating_frequency;
  OdeControls controls = propagation_controls();
};

struct KickSample {
  double t;
  double d_err_vs_clean;
  double d_clean_vs_init;
  double d_err_vs_init;
  cplx a_b_clean;
  cplx a_b_err;
};

struct WignerSnapshot {
  double t;
  Mode mode;
  bool kicked;
  WignerGrid grid;
};

struct KickResult {
  std::vector<KickSample> series;
  std::vector<WignerSnapshot> snapshots;
};

inline const char* kKickColumns = "t,d_err_vs_clean,d_clean_vs_init,d_err_vs_init";

namespace detail {

inline std::vector<double> kick_grid(const KickConfig& c, const KickProtocol& k) {
  if (k.t_kick < 0.0 || k.t_kick > c.t_final) throw std::invalid_argument("kick time outside the simulated window");
  std::vector<double> g = linear_axis(0.0, c.t_final, c.sample_dt);
  if (std::abs(g.back() - c.t_final) > 1e-12) g.push_back(c.t_final);
  g.push_back(k.t_kick);
  for (double t : c.wigner_times) g.push_back(t);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end(), [](double a, double b) { return std::abs(a - b) < 1e-12; }), g.end());
  return g;
}

inline DenseMat co_rotate(const FockSpace& s, const DenseMat& rho, double w, double t) {
  DenseVec d(s.dim());
  for (int i = 0; i < s.dim(); ++i) d(i) = std::polar(1.0, w * t * s.n_a(i));
  return d.asDiagonal() * rho * d.conjugate().asDiagonal();
}

}  // namespace detail

/// Paired kicked / unkicked evolution from rho0. In master mode both runs use
/// identical integrators; in trajectory mode each kicked trajectory shares its
/// RNG stream with the unkicked one up to t_kick.
inline KickResult kick_experiment(const FockSpace& s, const DenseMat& rho0, const OperatorMatrix& h,
                                  const std::vector<JumpOperator>& jumps, const KickProtocol& kick,
                                  const KickConfig& cfg) {
  const std::vector<double> grid = detail::kick_grid(cfg, kick);
  KickResult res;
  const SparseMat ab = destroy(s, Mode::B).matrix();
  // Tr[a rho] from the nonzeros of a.
  auto expect_ab = [&ab](const DenseMat& rho) {
    cplx acc(0.0);
    for (Eigen::Index c = 0; c < ab.outerSize(); ++c)
      for (SparseMat::InnerIterator it(ab, c); it; ++it) acc += it.value() * rho(it.col(), it.row());
    return acc;
  };

  // Reduces one time point to its sample (and snapshots); states are not kept.
  auto emit = [&](double t, const DenseMat& clean, const DenseMat& err) {
    KickSample smp;
    smp.t = t;
    smp.d_err_vs_clean = distance(err, clean);
    smp.d_clean_vs_init = distance(clean, rho0);
    smp.d_err_vs_init = distance(err, rho0);
    DenseMat c = clean, e = err;
    if (cfg.rotating_frequency) {
      c = detail::co_rotate(s, c, *cfg.rotating_frequency, t);
      e = detail::co_rotate(s, e, *cfg.rotating_frequency, t);
    }
    smp.a_b_clean = expect_ab(c);
    smp.a_b_err = expect_ab(e);
    res.series.push_back(smp);
    for (double tw : cfg.wigner_times) {
      if (std::abs(tw - t) > 1e-12) continue;
      const std::vector<double> axis = linear_axis(-cfg.wigner_half_width, cfg.wigner_half_width, cfg.wigner_step);
      for (Mode m : {Mode::B, Mode::A}) {
        for (bool kicked : {false, true}) {
          res.snapshots.push_back({t, m, kicked, wigner(partial_trace(s, kicked ? e : c, m), axis, axis)});
        }
      }
    }
  };

  if (cfg.mode == EvolutionMode::master) {
    LindbladRhs rhs(h, jumps);
    auto f = [&rhs](double t, const DenseMat& y, DenseMat& dy) { rhs(t, y, dy); };
    auto sc = make_dopri5<DenseMat>(f, cfg.controls);
    DenseMat y = rho0;
    double t = 0.0;
    std::size_t k = 0;
    for (; k < grid.size() && grid[k] < kick.t_kick - 1e-12; ++k) {
      sc.advance(t, y, grid[k]);
      emit(grid[k], y, y);
    }
    // grid holds t_kick itself.
    sc.advance(t, y, grid[k]);
    DenseMat ye = apply_kick(s, y, kick.delta_phi);
    emit(grid[k], y, ye);
    double te = t;
    // Same step history as the clean branch; only the cached stage is stale.
    auto se = sc;
    se.reset();
    for (std::size_t j = k + 1; j < grid.size(); ++j) {
      sc.advance(t, y, grid[j]);
      se.advance(te, ye, grid[j]);
      emit(grid[j], y, ye);
    }
  } else {
    LindbladRhs sys(h, jumps);
    MixedStateSampler sampler(rho0);
    const auto n = static_cast<std::size_t>(cfg.n_traj);
    std::vector<QuantumJumpIntegrator> qc;
    qc.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t ts = trajectory_seed(cfg.seed, i);
      std::mt19937_64 pick(ts);
      const DenseVec psi0 = sampler.sample(std::uniform_real_distribution<double>(0.0, 1.0)(pick));
      qc.emplace_back(sys, psi0, splitmix64(ts), 0.0, cfg.controls);
    }
    // Each kicked trajectory shares the stream state of its unkicked twin up to the kick.
    std::vector<std::optional<QuantumJumpIntegrator>> qe(n);
    std::vector<DenseVec> vc(n), ve(n);
    bool kicked = false;
    for (double t : grid) {
      const bool at_kick = !kicked && std::abs(t - kick.t_kick) < 1e-12;
      detail::parallel_for(cfg.n_traj, cfg.workers, [&](int ii) {
        const auto i = static_cast<std::size_t>(ii);
        qc[i].evolve_to(t);
        vc[i] = qc[i].state();
        if (at_kick) {
          qe[i].emplace(qc[i]);
          qe[i]->set_state(apply_kick(s, vc[i], kick.delta_phi));
        } else if (qe[i]) {
          qe[i]->evolve_to(t);
        }
        ve[i] = qe[i] ? qe[i]->state() : vc[i];
      });
      if (at_kick) kicked = true;
      // Summed in trajectory order, so the result does not depend on the worker count.
      DenseMat clean = DenseMat::Zero(s.dim(), s.dim()), err = DenseMat::Zero(s.dim(), s.dim());
      for (std::size_t i = 0; i < n; ++i) {
        clean.noalias() += vc[i] * vc[i].adjoint();
        err.noalias() += ve[i] * ve[i].adjoint();
      }
      clean /= static_cast<double>(n);
      err /= static_cast<double>(n);
      emit(t, clean, err);
    }
  }
  return res;
}

}  // namespace bhd
