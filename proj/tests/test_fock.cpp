#include <gtest/gtest.h>

#include <random>

#include "bhd/fock.hpp"

using namespace bhd;

namespace {

DenseVec basis(const FockSpace& s, int nb, int na) {
  DenseVec v = DenseVec::Zero(s.dim());
  v(s.index(nb, na)) = 1.0;
  return v;
}

SparseMat random_sparse(int n, std::mt19937_64& rng, double fill = 0.4) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(u(rng)) < fill) t.emplace_back(i, j, cplx(u(rng), u(rng)));
  SparseMat m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

}  // namespace

TEST(FockSpace, IndexOrderingHasAntibondingFastest) {
  FockSpace s(4, 3);
  EXPECT_EQ(s.dim(), 12);
  for (int i = 0; i < s.dim(); ++i) {
    EXPECT_EQ(s.index(s.n_b(i), s.n_a(i)), i);
  }
  EXPECT_EQ(s.index(2, 1), 7);
  EXPECT_THROW(FockSpace(0, 3), std::invalid_argument);
  EXPECT_THROW(FockSpace(3, 0), std::invalid_argument);
}

TEST(Destroy, SingleModeMatrixElements) {
  FockSpace s(3, 1);
  const DenseMat a = destroy(s, Mode::B).dense();
  EXPECT_EQ((a * basis(s, 1, 0) - basis(s, 0, 0)).norm(), 0.0);
  EXPECT_NEAR((a * basis(s, 2, 0) - std::sqrt(2.0) * basis(s, 1, 0)).norm(), 0.0, 1e-15);
  EXPECT_EQ((a * basis(s, 0, 0)).norm(), 0.0);
}

TEST(Destroy, CommutatorIsIdentityBelowTopLevel) {
  FockSpace s(5, 1);
  const auto a = destroy(s, Mode::B);
  const DenseMat c = commutator(a, adjoint(a)).dense();
  for (int n = 0; n < 4; ++n) EXPECT_LT(std::abs(c(n, n) - 1.0), 4e-15);
  EXPECT_EQ(c(4, 4), cplx(-4.0));
  DenseMat off = c;
  off.diagonal().setZero();
  EXPECT_EQ(off.norm(), 0.0);
}

TEST(Destroy, CommutatorExactOnBothModes) {
  FockSpace s(4, 3);
  for (Mode m : {Mode::B, Mode::A}) {
    const auto a = destroy(s, m);
    const DenseMat c = (a * create(s, m) - create(s, m) * a).dense();
    for (int i = 0; i < s.dim(); ++i) {
      if (s.occupation(i, m) < s.cutoff(m) - 1) EXPECT_LT(std::abs(c(i, i) - 1.0), 4e-15);
    }
  }
}

TEST(Number, DiagonalOccupations) {
  FockSpace s(5, 6);
  const DenseMat nb = number(s, Mode::B).dense();
  EXPECT_EQ((nb * basis(s, 0, 0)).norm(), 0.0);
  EXPECT_EQ((nb * basis(s, 3, 1) - 3.0 * basis(s, 3, 1)).norm(), 0.0);
  // Tr[n_A] = 15 per bonding level for k_a = 6.
  EXPECT_EQ(number(s, Mode::A).dense().trace(), cplx(15.0 * 5));
  for (Mode m : {Mode::B, Mode::A}) {
    EXPECT_LT(subtract(number(s, m), adjoint(destroy(s, m)) * destroy(s, m)).matrix().norm(), 1e-13);
  }
}

TEST(Parity, SquaresToIdentityAndCommutesWithNumbers) {
  FockSpace s(4, 6);
  const auto p = parity_operator(s);
  EXPECT_TRUE(subtract(p * p, identity(s)).is_zero());
  EXPECT_EQ((p.dense() * basis(s, 2, 1) + basis(s, 2, 1)).norm(), 0.0);
  EXPECT_EQ(p.dense().trace(), cplx(0.0));
  EXPECT_EQ(parity_operator(FockSpace(4, 5)).dense().trace(), cplx(4.0));
  EXPECT_TRUE(commutator(p, number(s, Mode::A)).is_zero());
  EXPECT_TRUE(commutator(p, number(s, Mode::B)).is_zero());
}

TEST(Algebra, BasicIdentities) {
  FockSpace s(4, 3);
  const auto a = destroy(s, Mode::B);
  EXPECT_TRUE(commutator(a, a).is_zero());
  const DenseMat ad = create(s, Mode::B).dense();
  for (int n = 1; n < 4; ++n) EXPECT_EQ(ad(s.index(n, 0), s.index(n - 1, 0)), cplx(std::sqrt(double(n))));
  const DenseMat n2 = (adjoint(a) * a).dense() * basis(s, 2, 0);
  EXPECT_NEAR((n2 - 2.0 * basis(s, 2, 0)).norm(), 0.0, 1e-15);
  EXPECT_TRUE(subtract(adjoint(adjoint(a)), a).is_zero());
}

TEST(Algebra, SpaceMismatchThrows) {
  const auto x = destroy(FockSpace(3, 2), Mode::B);
  const auto y = destroy(FockSpace(2, 3), Mode::B);
  EXPECT_THROW(add(x, y), DimensionError);
  EXPECT_THROW(multiply(x, y), DimensionError);
  EXPECT_THROW(commutator(x, y), DimensionError);
  EXPECT_THROW(OperatorMatrix(FockSpace(2, 2), SparseMat(3, 3)), DimensionError);
}

TEST(Algebra, NoStoredExactZeros) {
  FockSpace s(4, 3);
  const auto a = destroy(s, Mode::A);
  const auto z = subtract(a, a);
  EXPECT_EQ(z.nonzeros(), 0);
  const auto c = commutator(number(s, Mode::B), number(s, Mode::A));
  EXPECT_EQ(c.nonzeros(), 0);
}

TEST(Tensor, MatrixElementsFactorize) {
  std::mt19937_64 rng(3);
  FockSpace s(4, 3);
  const SparseMat xb = random_sparse(4, rng);
  const SparseMat xa = random_sparse(3, rng);
  const DenseMat t = tensor(s, xb, xa).dense();
  const DenseMat db(xb), da(xa);
  for (int i = 0; i < s.dim(); ++i)
    for (int j = 0; j < s.dim(); ++j)
      EXPECT_EQ(t(i, j), db(s.n_b(i), s.n_b(j)) * da(s.n_a(i), s.n_a(j)));
}

TEST(Displacement, ZeroIsIdentity) {
  FockSpace s(10, 1);
  const auto d = displacement(s, Mode::B, 0.0);
  EXPECT_NEAR((d.op.dense() - DenseMat::Identity(10, 10)).norm(), 0.0, 1e-14);
  EXPECT_FALSE(d.truncation_warning);
}

TEST(Displacement, CoherentStatePhotonNumber) {
  FockSpace s(20, 1);
  const auto d = displacement(s, Mode::B, 1.0);
  const DenseVec psi = d.op.dense().col(0);
  const double n = (psi.adjoint() * number(s, Mode::B).dense() * psi)(0).real();
  EXPECT_NEAR(n, 1.0, 1e-8);
  // Poisson amplitudes.
  double fact = 1.0;
  for (int k = 0; k < 8; ++k) {
    if (k > 0) fact *= k;
    EXPECT_NEAR(std::abs(psi(k)), std::exp(-0.5) / std::sqrt(fact), 1e-8);
  }
}

TEST(Displacement, InverseWithinTolerance) {
  FockSpace s(20, 1);
  const DenseMat p = displacement(s, Mode::B, 0.5).op.dense() * displacement(s, Mode::B, -0.5).op.dense();
  EXPECT_LT((p - DenseMat::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Displacement, LeakageWarningAtSmallCutoff) {
  FockSpace s(8, 1);
  const auto d = displacement(s, Mode::B, cplx(2.5, 0.0));
  EXPECT_TRUE(d.truncation_warning);
  EXPECT_GT(d.leakage, kDisplacementLeakageTol);
}

TEST(Displacement, ActsOnSelectedModeOnly) {
  FockSpace s(6, 4);
  const DenseMat d = displacement(s, Mode::A, cplx(0.3, 0.2)).op.dense();
  const DenseMat d1 = detail::single_mode_displacement(4, cplx(0.3, 0.2));
  for (int i = 0; i < s.dim(); ++i)
    for (int j = 0; j < s.dim(); ++j) {
      const cplx expect = s.n_b(i) == s.n_b(j) ? d1(s.n_a(i), s.n_a(j)) : cplx(0.0);
      EXPECT_NEAR(std::abs(d(i, j) - expect), 0.0, 1e-15);
    }
}
