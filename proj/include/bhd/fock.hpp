#pragma once

// Truncated two-mode Fock space and the sparse operator algebra on it.
//
// Basis ordering: index = n_b * k_a + n_a, antibonding fastest. A single
// bosonic mode is represented as FockSpace{k, 1} (mode B) or FockSpace{1, k}
// (mode A). Operators are plain truncations of the infinite matrices.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "bhd/errors.hpp"

namespace bhd {

using cplx = std::complex<double>;
using SparseMat = Eigen::SparseMatrix<cplx>;
using DenseMat = Eigen::MatrixXcd;
using DenseVec = Eigen::VectorXcd;
using Triplet = Eigen::Triplet<cplx>;

inline constexpr cplx kI{0.0, 1.0};

enum class Mode { B, A };

inline const char* mode_name(Mode m) { return m == Mode::B ? "B" : "A"; }

class FockSpace {
 public:
  FockSpace(int k_b, int k_a) : k_b_(k_b), k_a_(k_a) {
    if (k_b < 1 || k_a < 1) {
      throw std::invalid_argument("FockSpace cutoffs must be >= 1 (got k_b=" + std::to_string(k_b) +
                                  ", k_a=" + std::to_string(k_a) + ")");
    }
  }

  int k_b() const { return k_b_; }
  int k_a() const { return k_a_; }
  int dim() const { return k_b_ * k_a_; }
  int cutoff(Mode m) const { return m == Mode::B ? k_b_ : k_a_; }

  int index(int n_b, int n_a) const { return n_b * k_a_ + n_a; }
  int n_b(int i) const { return i / k_a_; }
  int n_a(int i) const { return i % k_a_; }
  int occupation(int i, Mode m) const { return m == Mode::B ? n_b(i) : n_a(i); }

  bool is_single_mode() const { return k_b_ == 1 || k_a_ == 1; }

  friend bool operator==(const FockSpace&, const FockSpace&) = default;

 private:
  int k_b_;
  int k_a_;
};

/// Drops stored entries that are exactly zero. No threshold.
inline void prune_exact(SparseMat& m) {
  m.prune([](Eigen::Index, Eigen::Index, const cplx& v) { return v != cplx(0.0); });
  m.makeCompressed();
}

class OperatorMatrix {
 public:
  OperatorMatrix(FockSpace space, SparseMat entries, std::optional<bool> hermitian_hint = std::nullopt)
      : space_(space), entries_(std::move(entries)), hermitian_hint_(hermitian_hint) {
    if (entries_.rows() != space_.dim() || entries_.cols() != space_.dim()) {
      throw DimensionError("operator shape " + std::to_string(entries_.rows()) + "x" +
                           std::to_string(entries_.cols()) + " does not match space dim " +
                           std::to_string(space_.dim()));
    }
    prune_exact(entries_);
  }

  static OperatorMatrix from_dense(FockSpace space, const DenseMat& m) {
    return OperatorMatrix(space, m.sparseView(0.0, 0.0));
  }

  const FockSpace& space() const { return space_; }
  const SparseMat& matrix() const { return entries_; }
  int dim() const { return space_.dim(); }
  std::optional<bool> hermitian_hint() const { return hermitian_hint_; }
  Eigen::Index nonzeros() const { return entries_.nonZeros(); }

  DenseMat dense() const { return DenseMat(entries_); }
  cplx at(int row, int col) const { return entries_.coeff(row, col); }

  /// True when every stored entry is exactly zero (after pruning: no entries).
  bool is_zero() const { return entries_.nonZeros() == 0; }

 private:
  FockSpace space_;
  SparseMat entries_;
  std::optional<bool> hermitian_hint_;
};

namespace detail {

inline void require_same_space(const OperatorMatrix& x, const OperatorMatrix& y, const char* op) {
  if (!(x.space() == y.space())) {
    throw DimensionError(std::string(op) + ": operands live on different Fock spaces (" +
                         std::to_string(x.space().k_b()) + "x" + std::to_string(x.space().k_a()) + " vs " +
                         std::to_string(y.space().k_b()) + "x" + std::to_string(y.space().k_a()) + ")");
  }
}

inline SparseMat from_triplets(int dim, const std::vector<Triplet>& t) {
  SparseMat m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  prune_exact(m);
  return m;
}

}  // namespace detail

inline OperatorMatrix identity(const FockSpace& s) {
  SparseMat m(s.dim(), s.dim());
  m.setIdentity();
  return OperatorMatrix(s, std::move(m), true);
}

inline OperatorMatrix destroy(const FockSpace& s, Mode mode) {
  std::vector<Triplet> t;
  for (int i = 0; i < s.dim(); ++i) {
    const int n = s.occupation(i, mode);
    if (n == 0) continue;
    const int j = mode == Mode::B ? s.index(n - 1, s.n_a(i)) : s.index(s.n_b(i), n - 1);
    t.emplace_back(j, i, std::sqrt(static_cast<double>(n)));
  }
  return OperatorMatrix(s, detail::from_triplets(s.dim(), t), false);
}

inline OperatorMatrix adjoint(const OperatorMatrix& x) {
  SparseMat m = x.matrix().adjoint();
  return OperatorMatrix(x.space(), std::move(m), x.hermitian_hint());
}

inline OperatorMatrix create(const FockSpace& s, Mode mode) { return adjoint(destroy(s, mode)); }

inline OperatorMatrix number(const FockSpace& s, Mode mode) {
  std::vector<Triplet> t;
  for (int i = 0; i < s.dim(); ++i) {
    const int n = s.occupation(i, mode);
    if (n != 0) t.emplace_back(i, i, static_cast<double>(n));
  }
  return OperatorMatrix(s, detail::from_triplets(s.dim(), t), true);
}

/// Z2 parity of the antibonding occupation, diagonal (-1)^{n_a}.
inline OperatorMatrix parity_operator(const FockSpace& s) {
  std::vector<Triplet> t;
  t.reserve(s.dim());
  for (int i = 0; i < s.dim(); ++i) t.emplace_back(i, i, (s.n_a(i) % 2 == 0) ? 1.0 : -1.0);
  return OperatorMatrix(s, detail::from_triplets(s.dim(), t), true);
}

inline OperatorMatrix add(const OperatorMatrix& x, const OperatorMatrix& y) {
  detail::require_same_space(x, y, "add");
  return OperatorMatrix(x.space(), SparseMat(x.matrix() + y.matrix()));
}

inline OperatorMatrix subtract(const OperatorMatrix& x, const OperatorMatrix& y) {
  detail::require_same_space(x, y, "subtract");
  return OperatorMatrix(x.space(), SparseMat(x.matrix() - y.matrix()));
}

inline OperatorMatrix scale(const OperatorMatrix& x, cplx c) {
  return OperatorMatrix(x.space(), SparseMat(x.matrix() * c));
}

inline OperatorMatrix multiply(const OperatorMatrix& x, const OperatorMatrix& y) {
  detail::require_same_space(x, y, "multiply");
  return OperatorMatrix(x.space(), SparseMat(x.matrix() * y.matrix()));
}

inline OperatorMatrix commutator(const OperatorMatrix& x, const OperatorMatrix& y) {
  detail::require_same_space(x, y, "commutator");
  SparseMat xy = x.matrix() * y.matrix();
  SparseMat yx = y.matrix() * x.matrix();
  return OperatorMatrix(x.space(), SparseMat(xy - yx));
}

inline OperatorMatrix operator+(const OperatorMatrix& x, const OperatorMatrix& y) { return add(x, y); }
inline OperatorMatrix operator-(const OperatorMatrix& x, const OperatorMatrix& y) { return subtract(x, y); }
inline OperatorMatrix operator*(const OperatorMatrix& x, const OperatorMatrix& y) { return multiply(x, y); }
inline OperatorMatrix operator*(cplx c, const OperatorMatrix& x) { return scale(x, c); }
inline OperatorMatrix operator*(double c, const OperatorMatrix& x) { return scale(x, cplx(c)); }

/// X_B (k_b x k_b) tensor X_A (k_a x k_a) in the n_a-fastest ordering.
inline OperatorMatrix tensor(const FockSpace& s, const SparseMat& x_b, const SparseMat& x_a) {
  if (x_b.rows() != s.k_b() || x_b.cols() != s.k_b() || x_a.rows() != s.k_a() || x_a.cols() != s.k_a()) {
    throw DimensionError("tensor: factor shapes do not match the space cutoffs");
  }
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(x_b.nonZeros() * x_a.nonZeros()));
  for (int ob = 0; ob < x_b.outerSize(); ++ob) {
    for (SparseMat::InnerIterator ib(x_b, ob); ib; ++ib) {
      for (int oa = 0; oa < x_a.outerSize(); ++oa) {
        for (SparseMat::InnerIterator ia(x_a, oa); ia; ++ia) {
          t.emplace_back(s.index(static_cast<int>(ib.row()), static_cast<int>(ia.row())),
                         s.index(static_cast<int>(ib.col()), static_cast<int>(ia.col())), ib.value() * ia.value());
        }
      }
    }
  }
  return OperatorMatrix(s, detail::from_triplets(s.dim(), t));
}

/// Exact (zero-tolerance) Hermiticity test of a sparse operator.
/// (X + X^dag)/2. Entrywise the result is exactly Hermitian: the sum commutes and halving is exact.
inline OperatorMatrix hermitian_part(const OperatorMatrix& x) {
  SparseMat m = x.matrix();
  SparseMat h = 0.5 * (m + SparseMat(m.adjoint()));
  return OperatorMatrix(x.space(), std::move(h), true);
}

inline bool is_exactly_hermitian(const OperatorMatrix& x) { return subtract(x, adjoint(x)).is_zero(); }

struct Displacement {
  OperatorMatrix op;
  double leakage;  // top-level population of D(alpha)|0>
  bool truncation_warning;
};

inline constexpr double kDisplacementLeakageTol = 1e-6;

namespace detail {

/// exp(alpha a^dag - conj(alpha) a) on a single mode with cutoff k.
inline DenseMat single_mode_displacement(int k, cplx alpha) {
  DenseMat a = DenseMat::Zero(k, k);
  for (int n = 1; n < k; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  // G = alpha a^dag - conj(alpha) a is anti-Hermitian; K = iG is Hermitian.
  const DenseMat g = alpha * a.adjoint() - std::conj(alpha) * a;
  const DenseMat k_herm = kI * g;
  Eigen::SelfAdjointEigenSolver<DenseMat> es(0.5 * (k_herm + k_herm.adjoint()));
  const Eigen::VectorXd w = es.eigenvalues();
  DenseVec phases(k);
  for (int i = 0; i < k; ++i) phases(i) = std::exp(-kI * w(i));
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

inline Displacement displacement(const FockSpace& s, Mode mode, cplx alpha) {
  const int k = s.cutoff(mode);
  const DenseMat d = detail::single_mode_displacement(k, alpha);
  const double leak = std::norm(d(k - 1, 0));
  SparseMat d_sparse = d.sparseView(0.0, 0.0);
  SparseMat id_other(s.cutoff(mode == Mode::B ? Mode::A : Mode::B), s.cutoff(mode == Mode::B ? Mode::A : Mode::B));
  id_other.setIdentity();
  OperatorMatrix op = mode == Mode::B ? tensor(s, d_sparse, id_other) : tensor(s, id_other, d_sparse);
  return Displacement{std::move(op), leak, leak > kDisplacementLeakageTol};
}

}  // namespace bhd
