#pragma once

// Quantities computed from eigenoperators: selection of the four sector
// representatives, partial traces and antibonding blocks, purity,
// Hilbert-Schmidt distances, the noiseless-subsystem comparison basis,
// expectation values and Wigner functions.

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bhd/eigensolver.hpp"
#include "bhd/model.hpp"

namespace bhd {

// ---------------------------------------------------------------- basics

/// Standard partial trace; the result lives on FockSpace{k_b, 1} (keep B)
/// or FockSpace{1, k_a} (keep A).
inline DenseMat partial_trace(const FockSpace& s, const DenseMat& op, Mode keep) {
  if (op.rows() != s.dim() || op.cols() != s.dim()) throw DimensionError("partial_trace: shape mismatch");
  const int kb = s.k_b();
  const int ka = s.k_a();
  if (keep == Mode::B) {
    DenseMat out = DenseMat::Zero(kb, kb);
    for (int i = 0; i < kb; ++i)
      for (int j = 0; j < kb; ++j)
        for (int n = 0; n < ka; ++n) out(i, j) += op(s.index(i, n), s.index(j, n));
    return out;
  }
  DenseMat out = DenseMat::Zero(ka, ka);
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < ka; ++j)
      for (int n = 0; n < kb; ++n) out(i, j) += op(s.index(n, i), s.index(n, j));
  return out;
}

inline OperatorMatrix partial_trace(const OperatorMatrix& op, Mode keep) {
  const FockSpace& s = op.space();
  const FockSpace out_space = keep == Mode::B ? FockSpace(s.k_b(), 1) : FockSpace(1, s.k_a());
  return OperatorMatrix::from_dense(out_space, partial_trace(s, op.dense(), keep));
}

/// The bonding-mode block <., row_na| op |., col_na>, a k_b x k_b matrix.
inline DenseMat a_sector_block(const FockSpace& s, const DenseMat& op, int row_na, int col_na) {
  if (row_na < 0 || col_na < 0 || row_na >= s.k_a() || col_na >= s.k_a()) {
    throw std::out_of_range("a_sector_block: antibonding index out of range");
  }
  const int kb = s.k_b();
  DenseMat out(kb, kb);
  for (int i = 0; i < kb; ++i)
    for (int j = 0; j < kb; ++j) out(i, j) = op(s.index(i, row_na), s.index(j, col_na));
  return out;
}

inline double trace_norm(const DenseMat& x) {
  return Eigen::BDCSVD<DenseMat>(x).singularValues().sum();
}

/// Tr[x x^dag] / (sum of singular values)^2. Equals Tr[rho^2] for a density matrix.
inline double purity(const DenseMat& x) {
  const auto sv = Eigen::BDCSVD<DenseMat>(x).singularValues();
  const double s1 = sv.sum();
  if (s1 == 0.0) throw std::invalid_argument("purity: zero operator");
  return sv.squaredNorm() / (s1 * s1);
}

/// 1 - |Tr[z1^dag z2]| / (||z1|| ||z2||), Frobenius norms. In [0, 1].
inline double hs_distance(const DenseMat& z1, const DenseMat& z2) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) throw DimensionError("hs_distance: shape mismatch");
  const double n1 = z1.norm();
  const double n2 = z2.norm();
  if (n1 == 0.0 || n2 == 0.0) throw std::invalid_argument("hs_distance: zero operator");
  const double ov = std::abs((z1.array().conjugate() * z2.array()).sum()) / (n1 * n2);
  return std::max(0.0, 1.0 - ov);
}

// ---------------------------------------------------------------- selection

/// Pair with the largest real part; among pairs tied within 1e-8 in Re,
/// one with Im > 0 is preferred.
inline std::size_t select_nonstationary_index(const EigenSystem& sys) {
  if (sys.pairs.empty()) throw std::invalid_argument("select_nonstationary: empty system");
  std::size_t best = 0;
  for (std::size_t i = 1; i < sys.pairs.size(); ++i) {
    const cplx a = sys.pairs[i].lambda;
    const cplx b = sys.pairs[best].lambda;
    if (a.real() > b.real() + 1e-8) {
      best = i;
    } else if (std::abs(a.real() - b.real()) <= 1e-8 && a.imag() > 0.0 && b.imag() <= 0.0) {
      best = i;
    }
  }
  return best;
}

inline const EigenPair& select_nonstationary(const EigenSystem& sys) {
  return sys.pairs[select_nonstationary_index(sys)];
}

/// Index of the pair whose right eigenoperator overlaps most with `previous`.
inline std::size_t continue_branch(const EigenSystem& sys, const DenseMat& previous) {
  if (sys.pairs.empty()) throw std::invalid_argument("continue_branch: empty system");
  std::size_t best = 0;
  double best_ov = -1.0;
  for (std::size_t i = 0; i < sys.pairs.size(); ++i) {
    const double ov = 1.0 - hs_distance(sys.right(i), previous);
    if (ov > best_ov) {
      best_ov = ov;
      best = i;
    }
  }
  return best;
}

struct BranchPoint {
  double f_tilde = 0.0;
  std::size_t selected = 0;
  cplx lambda;
  /// Continuation of the previous point's selection into this point.
  std::optional<std::size_t> continued;
  std::optional<cplx> continued_lambda;
  /// The selection is not the continuation of the previous selection.
  bool switched = false;
  int branch = 0;
};

/// Labels a drive sweep. The selection at each point is select_nonstationary;
/// a switch is recorded when it differs from the overlap continuation of the
/// previous selection. Branch labels increment on every switch.
inline std::vector<BranchPoint> track_branches(const std::vector<double>& f_tilde,
                                               const std::vector<EigenSystem>& systems) {
  if (f_tilde.size() != systems.size()) throw std::invalid_argument("track_branches: size mismatch");
  std::vector<BranchPoint> out;
  int label = 0;
  for (std::size_t k = 0; k < systems.size(); ++k) {
    BranchPoint bp;
    bp.f_tilde = f_tilde[k];
    bp.selected = select_nonstationary_index(systems[k]);
    bp.lambda = systems[k].pairs[bp.selected].lambda;
    if (k > 0) {
      const DenseMat prev = systems[k - 1].right(out.back().selected);
      bp.continued = continue_branch(systems[k], prev);
      bp.continued_lambda = systems[k].pairs[*bp.continued].lambda;
      bp.switched = *bp.continued != bp.selected;
      if (bp.switched) ++label;
    }
    bp.branch = label;
    out.push_back(bp);
  }
  return out;
}

// ---------------------------------------------------------------- operator set

enum class Normalization { trace, trace_norm };

inline const char* normalization_name(Normalization n) { return n == Normalization::trace ? "trace" : "trace-norm"; }

/// r_ee and r_oo are scaled to unit trace. r_eo and r_oe are traceless, so
/// they are scaled to unit trace norm, which is what a |e><o| (x) M factor
/// with Tr M = 1 has; their phase is the eigensolver's.
struct EigenOperatorSet {
  FockSpace space{1, 1};
  ModelParams params;
  DenseMat r_ee, r_oo, r_eo, r_oe;
  std::array<cplx, 4> lambdas{};  // ee, eo, oe, oo
  std::array<Normalization, 4> normalization{Normalization::trace, Normalization::trace_norm,
                                             Normalization::trace_norm, Normalization::trace};
  /// Left eigenoperator of the selected eo pair when the solve provided one.
  std::optional<DenseMat> l_eo;

  const DenseMat& get(Sector s) const {
    switch (s) {
      case Sector::ee: return r_ee;
      case Sector::eo: return r_eo;
      case Sector::oe: return r_oe;
      default: return r_oo;
    }
  }
  cplx lambda(Sector s) const { return lambdas[static_cast<std::size_t>(s)]; }
};

namespace detail {
inline DenseMat trace_normalized(const DenseMat& r) {
  const cplx tr = r.trace();
  if (std::abs(tr) < 1e-12) throw NormalizationError("steady-state eigenoperator has vanishing trace");
  return r / tr;
}
}  // namespace detail

/// Builds the set from solved ee, oo and eo systems. r_ee and r_oo are the
/// leading (steady) pairs; r_eo is select_nonstationary. When no oe system is
/// given, r_oe = r_eo^dag and lambda_oe = conj(lambda_eo), which holds exactly
/// because the Liouvillian commutes with the adjoint map.
inline EigenOperatorSet make_operator_set(const ModelParams& p, const EigenSystem& ee, const EigenSystem& oo,
                                          const EigenSystem& eo, const EigenSystem* oe = nullptr) {
  if (ee.pairs.empty() || oo.pairs.empty() || eo.pairs.empty()) {
    throw std::invalid_argument("make_operator_set: empty system");
  }
  EigenOperatorSet set;
  set.space = ee.space;
  set.params = p;
  set.r_ee = detail::trace_normalized(ee.right(0));
  set.r_oo = detail::trace_normalized(oo.right(0));
  const std::size_t ieo = select_nonstationary_index(eo);
  DenseMat r_eo = eo.right(ieo);
  const double tn = trace_norm(r_eo);
  set.r_eo = r_eo / tn;
  if (eo.pairs[ieo].left_block.size() > 0) set.l_eo = eo.left(ieo) * tn;
  set.lambdas[0] = ee.pairs[0].lambda;
  set.lambdas[1] = eo.pairs[ieo].lambda;
  set.lambdas[3] = oo.pairs[0].lambda;
  if (oe == nullptr) {
    set.r_oe = set.r_eo.adjoint();
    set.lambdas[2] = std::conj(set.lambdas[1]);
  } else {
    // Match the oe pair to conj(lambda_eo) and align its phase to r_eo^dag.
    std::size_t best = 0;
    for (std::size_t i = 1; i < oe->pairs.size(); ++i) {
      if (std::abs(oe->pairs[i].lambda - std::conj(set.lambdas[1])) <
          std::abs(oe->pairs[best].lambda - std::conj(set.lambdas[1])))
        best = i;
    }
    DenseMat r = oe->right(best);
    const DenseMat target = set.r_eo.adjoint();
    const cplx ov = (r.array().conjugate() * target.array()).sum();
    if (std::abs(ov) > 0.0) r *= ov / std::abs(ov);
    set.r_oe = r / trace_norm(r);
    set.lambdas[2] = oe->pairs[best].lambda;
  }
  return set;
}

// ---------------------------------------------------------------- NS comparison

inline constexpr std::array<std::pair<Sector, Sector>, 6> kSectorPairs = {{
    {Sector::ee, Sector::oo},
    {Sector::ee, Sector::eo},
    {Sector::ee, Sector::oe},
    {Sector::oo, Sector::eo},
    {Sector::oo, Sector::oe},
    {Sector::eo, Sector::oe},
}};

inline std::string pair_name(Sector a, Sector b) {
  return std::string(sector_name(a)) + "-" + sector_name(b);
}

/// The four operators expressed on the noiseless-subsystem factor.
///
/// The parity P = (-1)^{n_A} splits the Hilbert space into even and odd
/// subspaces; r_ee is supported on even x even, r_oo on odd x odd, r_eo on
/// even x odd. A qubit factorization rho_Q (x) M identifies the two subspaces
/// through some unitary. Each subspace is expressed in the eigenbasis of its
/// steady-state block (r_ee or r_oo), ordered by descending eigenvalue, which
/// is the basis that diagonalizes r_ee and r_oo. The coherence blocks are
/// mapped with the same bases and the residual phase freedom of the odd basis
/// is fixed so that diag(z_eo) is real and non-negative.
struct CommonBasis {
  DenseMat z_ee, z_oo, z_eo, z_oe;
  DenseMat u_even, u_odd;  // columns: eigenvectors on the even / odd subspace
  std::vector<int> even_index, odd_index;
  double hermitian_residual_ee = 0.0;  // ||r - r^dag|| / ||r||
  double hermitian_residual_oo = 0.0;
  bool hermitian_warning = false;  // either residual above 1e-6

  const DenseMat& get(Sector s) const {
    switch (s) {
      case Sector::ee: return z_ee;
      case Sector::eo: return z_eo;
      case Sector::oe: return z_oe;
      default: return z_oo;
    }
  }
};

inline constexpr double kHermitianWarnTol = 1e-6;

inline CommonBasis common_basis(const EigenOperatorSet& set) {
  const FockSpace& s = set.space;
  CommonBasis cb;
  for (int i = 0; i < s.dim(); ++i) (s.n_a(i) % 2 == 0 ? cb.even_index : cb.odd_index).push_back(i);
  const int ne = static_cast<int>(cb.even_index.size());
  const int no = static_cast<int>(cb.odd_index.size());
  const int m = std::max(ne, no);

  auto sub = [](const DenseMat& x, const std::vector<int>& r, const std::vector<int>& c) {
    DenseMat out(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(c.size()));
    for (std::size_t i = 0; i < r.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(r[i], c[j]);
    return out;
  };
  auto herm_residual = [](const DenseMat& x) { return (x - x.adjoint()).norm() / x.norm(); };
  cb.hermitian_residual_ee = herm_residual(set.r_ee);
  cb.hermitian_residual_oo = herm_residual(set.r_oo);
  cb.hermitian_warning = cb.hermitian_residual_ee > kHermitianWarnTol || cb.hermitian_residual_oo > kHermitianWarnTol;

  auto eigenbasis = [](const DenseMat& block) {
    const DenseMat h = 0.5 * (block + block.adjoint());
    Eigen::SelfAdjointEigenSolver<DenseMat> es(h);
    // Descending eigenvalue order.
    return DenseMat(es.eigenvectors().rowwise().reverse());
  };
  const DenseMat ree = sub(set.r_ee, cb.even_index, cb.even_index);
  const DenseMat roo = sub(set.r_oo, cb.odd_index, cb.odd_index);
  cb.u_even = eigenbasis(ree);
  cb.u_odd = eigenbasis(roo);

  DenseMat zeo = cb.u_even.adjoint() * sub(set.r_eo, cb.even_index, cb.odd_index) * cb.u_odd;
  for (int k = 0; k < std::min(ne, no); ++k) {
    const cplx d = zeo(k, k);
    if (std::abs(d) > 0.0) {
      const cplx ph = std::abs(d) / d;
      cb.u_odd.col(k) *= ph;
      zeo.col(k) *= ph;
    }
  }
  auto pad = [m](const DenseMat& x) {
    DenseMat out = DenseMat::Zero(m, m);
    out.topLeftCorner(x.rows(), x.cols()) = x;
    return out;
  };
  cb.z_ee = pad(cb.u_even.adjoint() * ree * cb.u_even);
  cb.z_oo = pad(cb.u_odd.adjoint() * roo * cb.u_odd);
  cb.z_eo = pad(zeo);
  cb.z_oe = pad(cb.u_odd.adjoint() * sub(set.r_oe, cb.odd_index, cb.even_index) * cb.u_even);
  return cb;
}

struct NSReport {
  std::map<std::string, double> hs_distances;  // keyed by pair_name
  int n_scale = 0;
  double f_tilde = 0.0;
  bool hermitian_warning = false;
};

inline NSReport ns_report(const EigenOperatorSet& set) {
  const CommonBasis cb = common_basis(set);
  NSReport r;
  r.n_scale = set.params.n_scale;
  r.f_tilde = set.params.f_tilde;
  r.hermitian_warning = cb.hermitian_warning;
  for (const auto& [a, b] : kSectorPairs) r.hs_distances[pair_name(a, b)] = hs_distance(cb.get(a), cb.get(b));
  return r;
}

/// Bonding-mode distances: Tr_A of r_ee and r_oo against the (0,1)
/// antibonding block of r_eo (and its adjoint), since Tr_A r_eo vanishes.
inline NSReport bonding_report(const EigenOperatorSet& set) {
  const FockSpace& s = set.space;
  std::map<Sector, DenseMat> z;
  z[Sector::ee] = partial_trace(s, set.r_ee, Mode::B);
  z[Sector::oo] = partial_trace(s, set.r_oo, Mode::B);
  z[Sector::eo] = a_sector_block(s, set.r_eo, 0, 1);
  z[Sector::oe] = a_sector_block(s, set.r_oe, 1, 0);
  NSReport r;
  r.n_scale = set.params.n_scale;
  r.f_tilde = set.params.f_tilde;
  for (const auto& [a, b] : kSectorPairs) r.hs_distances[pair_name(a, b)] = hs_distance(z[a], z[b]);
  return r;
}

// ---------------------------------------------------------------- expectations

enum class ExpectationMode { trace, block_trace };

/// trace: Tr[obs op] / Tr[op].
/// block_trace: for traceless eo/oe operators. Uses the (0,1) antibonding
/// block X of op and the bonding part O of the observable (its (0,0) block,
/// so the observable must act on the bonding mode only): Tr[O X] / Tr[X].
inline cplx expectation(const FockSpace& s, const DenseMat& op, const DenseMat& observable, ExpectationMode mode) {
  if (op.rows() != s.dim() || observable.rows() != s.dim()) throw DimensionError("expectation: shape mismatch");
  if (mode == ExpectationMode::trace) {
    const cplx tr = op.trace();
    if (std::abs(tr) < 1e-12) throw NormalizationError("expectation: vanishing trace");
    return (observable * op).trace() / tr;
  }
  const DenseMat x = a_sector_block(s, op, 0, 1);
  const DenseMat o = a_sector_block(s, observable, 0, 0);
  const cplx tr = x.trace();
  if (std::abs(tr) < 1e-12) throw NormalizationError("expectation: vanishing block trace");
  return (o * x).trace() / tr;
}

// ---------------------------------------------------------------- Wigner

struct WignerGrid {
  std::vector<double> x;  // Re alpha
  std::vector<double> y;  // Im alpha
  Eigen::MatrixXd re;     // re(i, j) at alpha = x[j] + i y[i]
  Eigen::MatrixXd im;
  double edge_population = 0.0;  // |rho(k-1, k-1)|: weight in the last Fock level
  bool truncation_warning = false;
};

inline std::vector<double> linear_axis(double lo, double hi, double step) {
  std::vector<double> out;
  const long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

/// W(alpha) = (2/pi) Tr[D(alpha) Pi D(alpha)^dag rho] on a rectangular grid,
/// default +-4 in both quadratures with step 0.05.
///
/// Matrix elements of the displaced parity in the Fock basis (m >= n):
///   <m| D Pi D^dag |n> = (-1)^n sqrt(n!/m!) (2 alpha)^(m-n) e^{-2|alpha|^2} L_n^(m-n)(4|alpha|^2)
/// evaluated with a normalized three-term recurrence, so the displacement is
/// never truncated.
inline WignerGrid wigner(const DenseMat& rho, const std::vector<double>& xs, const std::vector<double>& ys) {
  if (rho.rows() != rho.cols()) throw DimensionError("wigner: operator must be square");
  const int k = static_cast<int>(rho.rows());
  WignerGrid g;
  g.x = xs;
  g.y = ys;
  g.re.resize(static_cast<Eigen::Index>(ys.size()), static_cast<Eigen::Index>(xs.size()));
  g.im.resize(g.re.rows(), g.re.cols());
  g.edge_population = std::abs(rho(k - 1, k - 1));
  g.truncation_warning = g.edge_population > kDisplacementLeakageTol;

  std::vector<double> f(static_cast<std::size_t>(k));
  for (std::size_t iy = 0; iy < ys.size(); ++iy) {
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      const cplx alpha(xs[ix], ys[iy]);
      const double x = 4.0 * std::norm(alpha);
      const double theta = std::arg(alpha);
      cplx w = 0.0;
      for (int d = 0; d < k; ++d) {
        // f_n = sqrt(n!/(n+d)!) x^{d/2} e^{-x/2} L_n^{(d)}(x), n = 0 .. k-1-d.
        const int len = k - d;
        const double log_pref = (x > 0.0 ? 0.5 * d * std::log(x) : (d == 0 ? 0.0 : -INFINITY)) - 0.5 * x -
                                0.5 * std::lgamma(d + 1.0);
        const double pref = std::exp(log_pref);
        double gm1 = 0.0;
        double g0 = 1.0;
        f[0] = pref;
        for (int n = 0; n + 1 < len; ++n) {
          const double g1 = ((2.0 * n + d + 1.0 - x) * g0 - std::sqrt(static_cast<double>(n) * (n + d)) * gm1) /
                            std::sqrt((n + 1.0) * (n + 1.0 + d));
          gm1 = g0;
          g0 = g1;
          f[static_cast<std::size_t>(n + 1)] = pref * g1;
        }
        const cplx ph = std::polar(1.0, d * theta);
        for (int n = 0; n < len; ++n) {
          const int m = n + d;
          const cplx mel = (n % 2 == 0 ? 1.0 : -1.0) * f[static_cast<std::size_t>(n)] * ph;  // <m|.|n>
          w += mel * rho(n, m);
          if (d > 0) w += std::conj(mel) * rho(m, n);
        }
      }
      w *= 2.0 / std::numbers::pi;
      g.re(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) = w.real();
      g.im(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix)) = w.imag();
    }
  }
  return g;
}

inline WignerGrid wigner(const DenseMat& rho, double half_width = 4.0, double step = 0.05) {
  const auto axis = linear_axis(-half_width, half_width, step);
  return wigner(rho, axis, axis);
}

}  // namespace bhd
