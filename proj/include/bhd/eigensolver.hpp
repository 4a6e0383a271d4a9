#pragma once

// Eigenpairs of Liouvillian sector blocks.
//
// dense_eig: LAPACK zgeev on the full block (all pairs, left and right).
// krylov_eig: restarted Krylov-Schur on the raw block, Ritz values ordered by
// real part, so the slowest-decaying modes converge first. Left vectors come
// from a second Krylov-Schur run on the adjoint block.
// shift_invert_eig: Krylov-Schur on a sparse-LU inverse, for pairs near given
// targets when the raw iteration is too slow.
//
// Returned right eigenvectors have unit 2-norm and their largest-magnitude
// entry is real positive; left eigenvectors are scaled so <l_j|r_k> = delta_jk.

#include <lapacke.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bhd/liouvillian.hpp"

namespace bhd {

struct EigenPair {
  cplx lambda;
  DenseVec right_block;  // unit norm, phase fixed
  DenseVec left_block;   // <left|right> = 1
  Sector sector = Sector::ee;
  double residual = 0.0;  // ||L r - lambda r|| / ||r||, re-verified by one matvec
};

struct SolveReport {
  enum class Method { dense, krylov, shift_invert };
  Method method = Method::dense;
  int krylov_dim = 0;
  int restarts = 0;
  long matvecs = 0;
  bool converged = false;
  int k_b = 0;
  int k_a = 0;
  double max_residual = 0.0;
};

inline const char* method_name(SolveReport::Method m) {
  switch (m) {
    case SolveReport::Method::dense: return "dense";
    case SolveReport::Method::krylov: return "krylov";
    default: return "shift-invert";
  }
}

struct EigenSystem {
  Sector sector = Sector::ee;
  std::vector<EigenPair> pairs;  // descending real part
  SolveReport report;
  std::vector<int> index_map;
  FockSpace space{1, 1};

  /// Right eigenoperator r_j as a dim x dim matrix.
  DenseMat right(std::size_t j) const { return scatter_vec(pairs.at(j).right_block); }
  /// Left eigenoperator l_j as a dim x dim matrix.
  DenseMat left(std::size_t j) const { return scatter_vec(pairs.at(j).left_block); }

 private:
  DenseMat scatter_vec(const DenseVec& v) const {
    const int d = space.dim();
    DenseMat out = DenseMat::Zero(d, d);
    for (std::size_t i = 0; i < index_map.size(); ++i) out(index_map[i] % d, index_map[i] / d) = v(static_cast<Eigen::Index>(i));
    return out;
  }
};

inline constexpr double kClusterTol = 1e-10;

namespace detail {

inline void fix_phase(DenseVec& v) {
  Eigen::Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  const cplx c = v(imax);
  if (std::abs(c) > 0.0) v *= std::abs(c) / c;
}

inline double residual_norm(const SparseMat& a, const DenseVec& v, cplx lambda) {
  const DenseVec r = a * v - lambda * v;
  return r.norm() / v.norm();
}

inline void sort_pairs_by_real(std::vector<EigenPair>& pairs) {
  std::stable_sort(pairs.begin(), pairs.end(), [](const EigenPair& x, const EigenPair& y) {
    if (x.lambda.real() != y.lambda.real()) return x.lambda.real() > y.lambda.real();
    return x.lambda.imag() > y.lambda.imag();
  });
}

/// Groups indices whose eigenvalues lie within kClusterTol of a neighbour.
inline std::vector<std::vector<std::size_t>> clusters(const std::vector<EigenPair>& pairs) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> used(pairs.size(), false);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (used[i]) continue;
    std::vector<std::size_t> c{i};
    used[i] = true;
    for (std::size_t q = 0; q < c.size(); ++q) {
      for (std::size_t j = 0; j < pairs.size(); ++j) {
        if (!used[j] && std::abs(pairs[j].lambda - pairs[c[q]].lambda) < kClusterTol) {
          used[j] = true;
          c.push_back(j);
        }
      }
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace detail

/// Rescales left vectors so that <l_j|r_k> = delta_jk, clusterwise for
/// degenerate eigenvalues. Throws NormalizationError on a vanishing overlap.
inline void biorthonormalize(std::vector<EigenPair>& pairs) {
  for (const auto& c : detail::clusters(pairs)) {
    const auto k = static_cast<Eigen::Index>(c.size());
    const Eigen::Index n = pairs[c[0]].right_block.size();
    DenseMat r(n, k), l(n, k);
    for (Eigen::Index q = 0; q < k; ++q) {
      r.col(q) = pairs[c[static_cast<std::size_t>(q)]].right_block;
      l.col(q) = pairs[c[static_cast<std::size_t>(q)]].left_block;
    }
    const DenseMat s = l.adjoint() * r;  // s(i,j) = <l_i|r_j>
    Eigen::FullPivLU<DenseMat> lu(s);
    if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-300) {
      throw NormalizationError("left/right overlap is singular near lambda = " +
                               std::to_string(pairs[c[0]].lambda.real()) + "+" +
                               std::to_string(pairs[c[0]].lambda.imag()) + "i (defective or mismatched pair)");
    }
    // l' = l s^{-H}  =>  l'^H r = s^{-1} l^H r = I
    const DenseMat lnew = l * lu.inverse().adjoint();
    for (Eigen::Index q = 0; q < k; ++q) pairs[c[static_cast<std::size_t>(q)]].left_block = lnew.col(q);
  }
}

/// max |<l_j|r_k> - delta_jk| over the set.
inline double biorthonormality_error(const std::vector<EigenPair>& pairs) {
  double err = 0.0;
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const cplx o = pairs[j].left_block.dot(pairs[k].right_block);
      err = std::max(err, std::abs(o - (j == k ? cplx(1.0) : cplx(0.0))));
    }
  }
  return err;
}

struct DenseOptions {
  int dense_limit = 20000;
  bool compute_vectors = true;
};

/// Full spectrum of a sector block via zgeev. Eigenvalues sorted by descending real part.
inline EigenSystem dense_eig(const SectorBlock& block, const DenseOptions& opts = {}) {
  const int n = block.size();
  if (n > opts.dense_limit) {
    throw DenseLimitError("block dimension " + std::to_string(n) + " exceeds the dense limit " +
                          std::to_string(opts.dense_limit) + "; use krylov_eig for the leading pairs");
  }
  EigenSystem sys;
  sys.sector = block.sector;
  sys.index_map = block.index_map;
  sys.space = block.space;
  sys.report.method = SolveReport::Method::dense;
  sys.report.k_b = block.space.k_b();
  sys.report.k_a = block.space.k_a();
  if (n == 0) {
    sys.report.converged = true;
    return sys;
  }

  DenseMat a(block.matrix);
  DenseVec w(n);
  const char jobv = opts.compute_vectors ? 'V' : 'N';
  DenseMat vl(opts.compute_vectors ? n : 1, opts.compute_vectors ? n : 1);
  DenseMat vr(opts.compute_vectors ? n : 1, opts.compute_vectors ? n : 1);
  auto* ap = reinterpret_cast<lapack_complex_double*>(a.data());
  const int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, jobv, jobv, n, ap, n, reinterpret_cast<lapack_complex_double*>(w.data()),
                                 reinterpret_cast<lapack_complex_double*>(vl.data()), static_cast<int>(vl.rows()),
                                 reinterpret_cast<lapack_complex_double*>(vr.data()), static_cast<int>(vr.rows()));
  if (info != 0) throw ConvergenceError("zgeev failed with info = " + std::to_string(info));

  sys.pairs.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    EigenPair& p = sys.pairs[static_cast<std::size_t>(i)];
    p.lambda = w(i);
    p.sector = block.sector;
    if (opts.compute_vectors) {
      p.right_block = vr.col(i);
      p.right_block.normalize();
      detail::fix_phase(p.right_block);
      p.left_block = vl.col(i);  // zgeev: u^H A = lambda u^H, i.e. A^H u = conj(lambda) u
      p.residual = detail::residual_norm(block.matrix, p.right_block, p.lambda);
    }
  }
  detail::sort_pairs_by_real(sys.pairs);
  if (opts.compute_vectors) {
    biorthonormalize(sys.pairs);
    for (const auto& p : sys.pairs) sys.report.max_residual = std::max(sys.report.max_residual, p.residual);
  }
  sys.report.converged = true;
  return sys;
}

struct KrylovOptions {
  int n_pairs = 6;
  int krylov_dim = 0;  // 0 -> 4 * n_pairs + 20
  int max_restarts = 40;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  bool compute_left = true;

  int effective_dim(int n) const {
    const int m = krylov_dim > 0 ? krylov_dim : 4 * n_pairs + 20;
    return std::min(m, n);
  }
};

namespace detail {

struct KrylovSchurResult {
  std::vector<cplx> values;
  std::vector<DenseVec> vectors;
  std::vector<double> residuals;
  int restarts = 0;
  long matvecs = 0;
  bool converged = false;
};

inline DenseVec seeded_start(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseVec v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = g(rng);
    const double im = g(rng);
    v(i) = cplx(re, im);
  }
  return v.normalized();
}

/// Orthogonalizes w against the first j+1 columns of v (two passes of classical
/// Gram-Schmidt). Returns the projection coefficients.
inline DenseVec orthogonalize(const DenseMat& v, Eigen::Index j, DenseVec& w) {
  DenseVec h = v.leftCols(j + 1).adjoint() * w;
  w.noalias() -= v.leftCols(j + 1) * h;
  const DenseVec h2 = v.leftCols(j + 1).adjoint() * w;
  w.noalias() -= v.leftCols(j + 1) * h2;
  h += h2;
  return h;
}

/// Moves the Schur-form eigenvalues flagged in `select` to the leading block.
inline void reorder_schur(DenseMat& t, DenseMat& q, const std::vector<int>& select) {
  const int m = static_cast<int>(t.rows());
  std::vector<lapack_logical> sel(select.begin(), select.end());
  DenseVec w(m);
  lapack_int msel = 0;
  double s = 0.0, sep = 0.0;
  const int info = LAPACKE_ztrsen(LAPACK_COL_MAJOR, 'N', 'V', sel.data(), m, reinterpret_cast<lapack_complex_double*>(t.data()), m,
                                  reinterpret_cast<lapack_complex_double*>(q.data()), m,
                                  reinterpret_cast<lapack_complex_double*>(w.data()), &msel, &s, &sep);
  if (info != 0) throw ConvergenceError("ztrsen failed with info = " + std::to_string(info));
}

/// Krylov-Schur iteration for the n_want eigenvalues of largest real part.
inline KrylovSchurResult krylov_schur(const std::function<void(const DenseVec&, DenseVec&)>& apply, Eigen::Index n,
                                      int n_want, int m, int max_restarts, double tol, std::uint64_t seed) {
  KrylovSchurResult res;
  n_want = std::min<int>(n_want, static_cast<int>(n));
  m = std::max(std::min<int>(m, static_cast<int>(n)), std::min<int>(n_want + 2, static_cast<int>(n)));

  DenseMat v = DenseMat::Zero(n, m + 1);
  DenseMat h = DenseMat::Zero(m + 1, m);
  v.col(0) = seeded_start(n, seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  int k = 0;
  DenseVec w(n);

  for (int restart = 0; restart <= max_restarts; ++restart) {
    res.restarts = restart;
    int m_eff = m;
    for (int j = k; j < m; ++j) {
      apply(v.col(j), w);
      ++res.matvecs;
      const DenseVec hj = orthogonalize(v, j, w);
      h.block(0, j, j + 1, 1) = hj;
      double beta = w.norm();
      if (beta < 1e-12 * std::max(1.0, hj.norm())) {
        // Invariant subspace: continue with a fresh random direction.
        if (j + 1 >= n) {
          h(j + 1, j) = 0.0;
          m_eff = j + 1;
          break;
        }
        DenseVec r = seeded_start(n, rng());
        orthogonalize(v, j, r);
        r.normalize();
        h(j + 1, j) = 0.0;
        v.col(j + 1) = r;
      } else {
        h(j + 1, j) = beta;
        v.col(j + 1) = w / beta;
      }
    }

    const DenseMat hm = h.topLeftCorner(m_eff, m_eff);
    Eigen::ComplexSchur<DenseMat> schur(hm);
    DenseMat t = schur.matrixT();
    DenseMat q = schur.matrixU();
    const double beta = std::abs(h(m_eff, m_eff - 1));

    // Rank Ritz values by real part.
    std::vector<int> order(static_cast<std::size_t>(m_eff));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return t(x, x).real() > t(y, y).real(); });

    const int keep = std::min(m_eff - 1, std::max(n_want + (m_eff - n_want) / 2, n_want));
    std::vector<int> select(static_cast<std::size_t>(m_eff), 0);
    for (int i = 0; i < keep; ++i) select[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    reorder_schur(t, q, select);

    // Ritz pairs of the leading keep x keep triangular block.
    const DenseMat tk = t.topLeftCorner(keep, keep);
    Eigen::ComplexEigenSolver<DenseMat> ces(tk);
    const DenseVec bq = beta * q.row(m_eff - 1).head(keep).transpose();
    std::vector<int> ritz(static_cast<std::size_t>(keep));
    std::iota(ritz.begin(), ritz.end(), 0);
    std::stable_sort(ritz.begin(), ritz.end(), [&](int x, int y) {
      return ces.eigenvalues()(x).real() > ces.eigenvalues()(y).real();
    });
    std::vector<double> resid(static_cast<std::size_t>(n_want));
    int n_conv = 0;
    for (int i = 0; i < n_want; ++i) {
      const DenseVec y = ces.eigenvectors().col(ritz[static_cast<std::size_t>(i)]).normalized();
      resid[static_cast<std::size_t>(i)] = std::abs(bq.dot(y.conjugate()));
      if (resid[static_cast<std::size_t>(i)] <= tol) ++n_conv;
    }

    const bool done = n_conv == n_want || m_eff < m || restart == max_restarts;
    if (done) {
      res.converged = n_conv == n_want;
      const DenseMat basis = v.leftCols(m_eff) * q.leftCols(keep);
      for (int i = 0; i < n_want; ++i) {
        const int idx = ritz[static_cast<std::size_t>(i)];
        res.values.push_back(ces.eigenvalues()(idx));
        res.vectors.push_back((basis * ces.eigenvectors().col(idx)).normalized());
        res.residuals.push_back(resid[static_cast<std::size_t>(i)]);
      }
      return res;
    }

    // Truncate to the kept Schur vectors: A V_k = V_k T_k + v_{m} b^T.
    const DenseMat vk = v.leftCols(m_eff) * q.leftCols(keep);
    v.leftCols(keep) = vk;
    v.col(keep) = v.col(m_eff);
    h.setZero();
    h.topLeftCorner(keep, keep) = t.topLeftCorner(keep, keep);
    h.block(keep, 0, 1, keep) = bq.transpose();
    k = keep;
  }
  return res;
}

}  // namespace detail

/// Leading n_pairs eigenpairs of a block, by largest real part.
inline EigenSystem krylov_eig(const SectorBlock& block, const KrylovOptions& opts = {}) {
  EigenSystem sys;
  sys.sector = block.sector;
  sys.index_map = block.index_map;
  sys.space = block.space;
  sys.report.method = SolveReport::Method::krylov;
  sys.report.k_b = block.space.k_b();
  sys.report.k_a = block.space.k_a();
  const int n = block.size();
  const int m = opts.effective_dim(n);
  sys.report.krylov_dim = m;

  const SparseMat& a = block.matrix;
  auto apply = [&a](const DenseVec& x, DenseVec& y) { y.noalias() = a * x; };
  auto right = detail::krylov_schur(apply, n, opts.n_pairs, m, opts.max_restarts, opts.tol, opts.seed);
  sys.report.restarts = right.restarts;
  sys.report.matvecs = right.matvecs;

  std::vector<double> verified;
  for (std::size_t i = 0; i < right.values.size(); ++i) {
    EigenPair p;
    p.lambda = right.values[i];
    p.sector = block.sector;
    p.right_block = right.vectors[i];
    detail::fix_phase(p.right_block);
    p.residual = detail::residual_norm(a, p.right_block, p.lambda);
    ++sys.report.matvecs;
    verified.push_back(p.residual);
    sys.pairs.push_back(std::move(p));
  }
  sys.report.max_residual = verified.empty() ? 0.0 : *std::max_element(verified.begin(), verified.end());
  const bool ok = right.converged && sys.report.max_residual <= opts.tol * 10.0;
  if (!ok) {
    throw ConvergenceError("krylov_eig: " + std::string(sector_name(block.sector)) + " block (dim " + std::to_string(n) +
                               ") did not converge after " + std::to_string(right.restarts) +
                               " restarts; best residual " + std::to_string(sys.report.max_residual),
                           verified);
  }
  sys.report.converged = true;
  detail::sort_pairs_by_real(sys.pairs);
  return sys;
}

namespace detail {

/// Attaches left vectors to right pairs. `cand_lambda[i]` is the right-space
/// eigenvalue that left candidate i belongs to.
inline void attach_left(std::vector<EigenPair>& pairs, const std::vector<cplx>& cand_lambda,
                        const std::vector<DenseVec>& cand_vec) {
  std::vector<bool> taken(cand_lambda.size(), false);
  for (const auto& c : clusters(pairs)) {
    const cplx target = pairs[c[0]].lambda;
    std::vector<std::size_t> cands;
    for (std::size_t i = 0; i < cand_lambda.size(); ++i) {
      if (!taken[i] && std::abs(cand_lambda[i] - target) < kClusterTol * 1e3) cands.push_back(i);
    }
    if (cands.size() < c.size()) {
      // Fall back to nearest distinct candidates.
      cands.clear();
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < cand_lambda.size(); ++i) {
        if (!taken[i]) idx.push_back(i);
      }
      std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
        return std::abs(cand_lambda[x] - target) < std::abs(cand_lambda[y] - target);
      });
      for (std::size_t q = 0; q < c.size() && q < idx.size(); ++q) cands.push_back(idx[q]);
    }
    if (cands.size() > c.size()) {
      std::vector<cplx> cl;
      for (auto i : cands) cl.push_back(cand_lambda[i]);
      throw AmbiguousMatch("left eigenvectors: " + std::to_string(cands.size()) + " left candidates for a cluster of " +
                               std::to_string(c.size()) + " right eigenvalues",
                           cl);
    }
    if (cands.size() < c.size()) throw ConvergenceError("left eigenvectors: not enough converged left vectors");
    for (std::size_t q = 0; q < c.size(); ++q) {
      taken[cands[q]] = true;
      pairs[c[q]].left_block = cand_vec[cands[q]];
    }
  }
  biorthonormalize(pairs);
}

}  // namespace detail

/// Fills left eigenvectors for the given right pairs using the adjoint block.
/// Left eigenvalues (of A^H) are matched to right ones by min |conj(mu) - lambda|.
inline void left_eigs(const SectorBlock& block, std::vector<EigenPair>& pairs, const KrylovOptions& opts = {}) {
  if (pairs.empty()) return;
  const SparseMat adj = block.matrix.adjoint();
  const int n = block.size();
  KrylovOptions lopts = opts;
  lopts.n_pairs = std::min<int>(n, static_cast<int>(pairs.size()) + 2);
  const int m = lopts.effective_dim(n);
  auto apply = [&adj](const DenseVec& x, DenseVec& y) { y.noalias() = adj * x; };
  auto left = detail::krylov_schur(apply, n, lopts.n_pairs, m, lopts.max_restarts, lopts.tol, lopts.seed + 7919);
  std::vector<cplx> lam;
  for (const auto& v : left.values) lam.push_back(std::conj(v));
  detail::attach_left(pairs, lam, left.vectors);
}

/// krylov_eig followed by left_eigs when requested.
inline EigenSystem krylov_eig_with_left(const SectorBlock& block, const KrylovOptions& opts = {}) {
  EigenSystem sys = krylov_eig(block, opts);
  if (opts.compute_left) left_eigs(block, sys.pairs, opts);
  return sys;
}

}  // namespace bhd

namespace bhd {

struct ShiftInvertOptions {
  /// Targets. Each shift costs one sparse LU of the block.
  std::vector<cplx> shifts = {cplx(0.05, 0.0)};
  int n_pairs = 6;  // per shift
  int krylov_dim = 0;  // 0 -> 3 * n_pairs + 10
  int max_restarts = 100;
  double tol = 1e-10;  // on the inverted operator
  std::uint64_t seed = 1;
  bool compute_left = false;
};

/// Eigenpairs nearest each shift sigma via Krylov-Schur on -(A - sigma)^-1,
/// merged over shifts and sorted by descending real part. Used where the
/// largest-real-part iteration stalls (dense spectra near the imaginary axis
/// at large cutoffs). Residuals are verified on the raw block.
inline EigenSystem shift_invert_eig(const SectorBlock& block, const ShiftInvertOptions& opts) {
  EigenSystem sys;
  sys.sector = block.sector;
  sys.index_map = block.index_map;
  sys.space = block.space;
  sys.report.method = SolveReport::Method::shift_invert;
  sys.report.k_b = block.space.k_b();
  sys.report.k_a = block.space.k_a();
  const int n = block.size();
  if (n == 0 || opts.shifts.empty()) {
    sys.report.converged = true;
    return sys;
  }
  const int want = std::min(opts.n_pairs, n);
  const int m = std::min(n, opts.krylov_dim > 0 ? opts.krylov_dim : 3 * want + 10);
  sys.report.krylov_dim = m;
  SparseMat id(n, n);
  id.setIdentity();
  std::vector<double> verified;
  bool ok = true;
  for (std::size_t si = 0; si < opts.shifts.size(); ++si) {
    const cplx sigma = opts.shifts[si];
    SparseMat shifted = block.matrix - sigma * id;
    shifted.makeCompressed();
    Eigen::SparseLU<SparseMat, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(shifted);
    if (lu.info() != Eigen::Success) {
      throw ConvergenceError("shift_invert_eig: sparse LU failed at shift (" + std::to_string(sigma.real()) + ", " +
                             std::to_string(sigma.imag()) + ")");
    }
    auto apply = [&lu](const DenseVec& x, DenseVec& y) { y = -lu.solve(x); };
    auto r = detail::krylov_schur(apply, n, want, m, opts.max_restarts, opts.tol, opts.seed + si);
    sys.report.restarts = std::max(sys.report.restarts, r.restarts);
    sys.report.matvecs += r.matvecs;
    ok = ok && r.converged;

    std::vector<EigenPair> found;
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      EigenPair p;
      p.lambda = sigma - 1.0 / r.values[i];
      p.sector = block.sector;
      p.right_block = r.vectors[i];
      detail::fix_phase(p.right_block);
      p.residual = detail::residual_norm(block.matrix, p.right_block, p.lambda);
      ++sys.report.matvecs;
      found.push_back(std::move(p));
    }
    if (opts.compute_left) {
      auto lapply = [&lu](const DenseVec& x, DenseVec& y) { y = -lu.adjoint().solve(x); };
      auto l = detail::krylov_schur(lapply, n, std::min(n, want + 2), std::min(n, m + 4), opts.max_restarts, opts.tol,
                                    opts.seed + si + 7919);
      std::vector<cplx> lam;
      for (const auto& mu : l.values) lam.push_back(sigma - 1.0 / std::conj(mu));
      detail::attach_left(found, lam, l.vectors);
    }
    for (auto& p : found) {
      bool dup = false;
      for (const auto& q : sys.pairs) dup = dup || std::abs(q.lambda - p.lambda) < 1e-8;
      if (dup) continue;
      verified.push_back(p.residual);
      sys.pairs.push_back(std::move(p));
    }
  }
  sys.report.max_residual = verified.empty() ? 0.0 : *std::max_element(verified.begin(), verified.end());
  if (!ok) {
    throw ConvergenceError("shift_invert_eig: " + std::string(sector_name(block.sector)) + " block (dim " +
                               std::to_string(n) + ") did not converge after " + std::to_string(sys.report.restarts) +
                               " restarts",
                           verified);
  }
  sys.report.converged = true;
  detail::sort_pairs_by_real(sys.pairs);
  if (opts.compute_left) biorthonormalize(sys.pairs);
  return sys;
}

}  // namespace bhd
