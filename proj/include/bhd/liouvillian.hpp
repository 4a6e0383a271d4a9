#pragma once

// Lindblad superoperator on column-stacked density matrices and its exact
// decomposition into the four strong-parity sectors.
//
// vec(X)[col * dim + row] = X(row, col), so vec(A X B) = (B^T kron A) vec(X).

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bhd/fock.hpp"
#include "bhd/model.hpp"

namespace bhd {

enum class Sector { ee = 0, eo = 1, oe = 2, oo = 3 };

inline constexpr std::array<Sector, 4> kAllSectors = {Sector::ee, Sector::eo, Sector::oe, Sector::oo};

inline const char* sector_name(Sector s) {
  switch (s) {
    case Sector::ee: return "ee";
    case Sector::eo: return "eo";
    case Sector::oe: return "oe";
    case Sector::oo: return "oo";
  }
  return "?";
}

inline Sector sector_from_name(const std::string& s) {
  for (Sector x : kAllSectors) {
    if (s == sector_name(x)) return x;
  }
  throw std::invalid_argument("unknown sector '" + s + "'");
}

/// Sector of the matrix element (row, col): first letter is the row parity.
inline Sector sector_of(const FockSpace& s, int row, int col) {
  const int pr = s.n_a(row) % 2;
  const int pc = s.n_a(col) % 2;
  return static_cast<Sector>(2 * pr + pc);
}

inline DenseVec vectorize(const DenseMat& rho) {
  if (rho.rows() != rho.cols()) throw DimensionError("vectorize: matrix must be square");
  return Eigen::Map<const DenseVec>(rho.data(), rho.size());
}

inline DenseVec vectorize(const OperatorMatrix& rho) { return vectorize(rho.dense()); }

inline DenseMat devectorize(const DenseVec& v, int dim) {
  if (v.size() != static_cast<Eigen::Index>(dim) * dim) {
    throw DimensionError("devectorize: length " + std::to_string(v.size()) + " is not " + std::to_string(dim) + "^2");
  }
  return Eigen::Map<const DenseMat>(v.data(), dim, dim);
}

/// Sparse Kronecker product kron(x, y)[i*ry + k, j*cy + l] = x(i,j) y(k,l).
inline SparseMat kron(const SparseMat& x, const SparseMat& y) {
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(x.nonZeros() * y.nonZeros()));
  for (int ox = 0; ox < x.outerSize(); ++ox) {
    for (SparseMat::InnerIterator ix(x, ox); ix; ++ix) {
      for (int oy = 0; oy < y.outerSize(); ++oy) {
        for (SparseMat::InnerIterator iy(y, oy); iy; ++iy) {
          t.emplace_back(ix.row() * y.rows() + iy.row(), ix.col() * y.cols() + iy.col(), ix.value() * iy.value());
        }
      }
    }
  }
  SparseMat out(x.rows() * y.rows(), x.cols() * y.cols());
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

struct Superoperator {
  FockSpace space;
  SparseMat matrix;
  std::array<std::vector<int>, 4> sector_masks;

  static constexpr const char* vectorization = "column-stacking";

  int liouville_dim() const { return space.dim() * space.dim(); }
  const std::vector<int>& mask(Sector s) const { return sector_masks[static_cast<int>(s)]; }
};

/// Four index sets over 0..dim^2-1, sorted ascending, keyed by Sector.
inline std::array<std::vector<int>, 4> sector_masks(const FockSpace& s) {
  std::array<std::vector<int>, 4> masks;
  const int d = s.dim();
  for (int col = 0; col < d; ++col) {
    for (int row = 0; row < d; ++row) {
      masks[static_cast<int>(sector_of(s, row, col))].push_back(col * d + row);
    }
  }
  return masks;
}

/// L = -i(I(x)H - H^T(x)I) + sum_k rate_k [conj(L_k)(x)L_k - 1/2 I(x)L_k^dag L_k - 1/2 (L_k^dag L_k)^T(x)I]
inline Superoperator build_liouvillian(const OperatorMatrix& h, const std::vector<JumpOperator>& jumps) {
  const FockSpace& s = h.space();
  for (const auto& j : jumps) {
    if (!(j.op.space() == s)) throw DimensionError("build_liouvillian: jump operator '" + j.label + "' space mismatch");
  }
  SparseMat id(s.dim(), s.dim());
  id.setIdentity();
  const SparseMat& hm = h.matrix();
  SparseMat ht = hm.transpose();
  SparseMat l = (kron(id, hm) - kron(ht, id)) * (-kI);
  for (const auto& j : jumps) {
    if (j.rate == 0.0) continue;
    const SparseMat& lm = j.op.matrix();
    SparseMat ldl = lm.adjoint() * lm;
    SparseMat ldl_t = ldl.transpose();
    SparseMat lc = lm.conjugate();
    SparseMat term = kron(lc, lm) - 0.5 * kron(id, ldl) - 0.5 * kron(ldl_t, id);
    l += j.rate * term;
  }
  prune_exact(l);
  return Superoperator{s, std::move(l), sector_masks(s)};
}

inline Superoperator build_liouvillian(const FockSpace& s, const ModelParams& p) {
  return build_liouvillian(hamiltonian_bs(s, p), jump_operators(s, p));
}

/// devectorize(L vec(rho)).
inline DenseMat apply(const Superoperator& l, const DenseMat& rho) {
  const DenseVec v = vectorize(rho);
  const DenseVec w = l.matrix * v;
  return devectorize(w, l.space.dim());
}

struct SectorBlock {
  Sector sector;
  SparseMat matrix;
  std::vector<int> index_map;  // block index -> vectorized index in the parent
  FockSpace space;

  int size() const { return static_cast<int>(index_map.size()); }
};

/// Throws SymmetryViolation on the first stored entry coupling two different sectors.
inline void assert_sector_diagonal(const Superoperator& l) {
  const FockSpace& s = l.space;
  const int d = s.dim();
  for (int o = 0; o < l.matrix.outerSize(); ++o) {
    for (SparseMat::InnerIterator it(l.matrix, o); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      const Sector sr = sector_of(s, r % d, r / d);
      const Sector sc = sector_of(s, c % d, c / d);
      if (sr != sc && it.value() != cplx(0.0)) {
        throw SymmetryViolation(std::string("superoperator couples sector ") + sector_name(sc) + " to " +
                                    sector_name(sr) + " at (" + std::to_string(r) + ", " + std::to_string(c) +
                                    ")",
                                r, c, it.value());
      }
    }
  }
}

inline SectorBlock extract_block(const Superoperator& l, Sector sector) {
  assert_sector_diagonal(l);
  const auto& mask = l.mask(sector);
  std::vector<int> local(static_cast<std::size_t>(l.liouville_dim()), -1);
  for (std::size_t i = 0; i < mask.size(); ++i) local[static_cast<std::size_t>(mask[i])] = static_cast<int>(i);
  std::vector<Triplet> t;
  for (int col : mask) {
    for (SparseMat::InnerIterator it(l.matrix, col); it; ++it) {
      t.emplace_back(local[static_cast<std::size_t>(it.row())], local[static_cast<std::size_t>(col)], it.value());
    }
  }
  const int n = static_cast<int>(mask.size());
  SparseMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return SectorBlock{sector, std::move(m), mask, l.space};
}

/// Block vector -> full dim x dim operator (zeros outside the sector).
inline DenseMat scatter(const SectorBlock& b, const DenseVec& v) {
  const int d = b.space.dim();
  DenseMat out = DenseMat::Zero(d, d);
  for (int i = 0; i < b.size(); ++i) {
    const int g = b.index_map[static_cast<std::size_t>(i)];
    out(g % d, g / d) = v(i);
  }
  return out;
}

/// Full operator -> block vector (entries outside the sector dropped).
inline DenseVec gather(const SectorBlock& b, const DenseMat& x) {
  const int d = b.space.dim();
  DenseVec v(b.size());
  for (int i = 0; i < b.size(); ++i) {
    const int g = b.index_map[static_cast<std::size_t>(i)];
    v(i) = x(g % d, g / d);
  }
  return v;
}

// Triplet dump: 8-byte magic "BHDTRIP1", u64 rows, u64 cols, u64 nnz, then nnz
// records of (u64 row, u64 col, f64 re, f64 im), all little-endian.

inline constexpr char kTripletMagic[8] = {'B', 'H', 'D', 'T', 'R', 'I', 'P', '1'};

namespace detail {
inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 8);
}
inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("triplet file truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
inline void put_f64(std::ostream& os, double d) {
  std::uint64_t v;
  std::memcpy(&v, &d, 8);
  put_u64(os, v);
}
inline double get_f64(std::istream& is) {
  const std::uint64_t v = get_u64(is);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}
}  // namespace detail

inline void write_triplets(const std::string& path, const SparseMat& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kTripletMagic, 8);
  detail::put_u64(os, static_cast<std::uint64_t>(m.rows()));
  detail::put_u64(os, static_cast<std::uint64_t>(m.cols()));
  detail::put_u64(os, static_cast<std::uint64_t>(m.nonZeros()));
  for (int o = 0; o < m.outerSize(); ++o) {
    for (SparseMat::InnerIterator it(m, o); it; ++it) {
      detail::put_u64(os, static_cast<std::uint64_t>(it.row()));
      detail::put_u64(os, static_cast<std::uint64_t>(it.col()));
      detail::put_f64(os, it.value().real());
      detail::put_f64(os, it.value().imag());
    }
  }
}

inline SparseMat read_triplets(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kTripletMagic, 8) != 0) throw std::runtime_error(path + ": not a triplet dump");
  const auto rows = detail::get_u64(is);
  const auto cols = detail::get_u64(is);
  const auto nnz = detail::get_u64(is);
  std::vector<Triplet> t;
  t.reserve(nnz);
  for (std::uint64_t k = 0; k < nnz; ++k) {
    const auto r = detail::get_u64(is);
    const auto c = detail::get_u64(is);
    const double re = detail::get_f64(is);
    const double im = detail::get_f64(is);
    t.emplace_back(static_cast<int>(r), static_cast<int>(c), cplx(re, im));
  }
  SparseMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace bhd
