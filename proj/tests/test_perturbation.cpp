#include <gtest/gtest.h>

#include <random>

#include "bhd/perturbation.hpp"
#include "bhd/spectral.hpp"

using namespace bhd;

namespace {

struct Fixture {
  FockSpace space{8, 4};
  ModelParams params = monostable_preset(1.8, 1);
  Superoperator l0 = build_liouvillian(space, params);
  EigenSystem eo = dense_eig(extract_block(l0, Sector::eo));
  EigenSystem ee = dense_eig(extract_block(l0, Sector::ee));
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

SparseMat identity_super(int n) {
  SparseMat id(n, n);
  id.setIdentity();
  return id;
}

}  // namespace

TEST(FirstOrder, ZeroPerturbation) {
  const auto& f = fixture();
  const std::size_t j = select_nonstationary_index(f.eo);
  const int n = f.l0.liouville_dim();
  EXPECT_EQ(first_order_shift(f.eo.left(j), f.eo.right(j), SparseMat(n, n)), cplx(0.0));
}

TEST(FirstOrder, IdentityShiftsByConstant) {
  const auto& f = fixture();
  const int n = f.l0.liouville_dim();
  const cplx c(-0.3, 0.7);
  for (std::size_t j : {std::size_t{0}, std::size_t{3}, select_nonstationary_index(f.eo)}) {
    const cplx got = first_order_shift(f.eo.left(j), f.eo.right(j), SparseMat(c * identity_super(n)));
    EXPECT_LT(std::abs(got - c), 1e-8);
  }
}

TEST(FirstOrder, LinearInPerturbation) {
  const auto& f = fixture();
  const std::size_t j = select_nonstationary_index(f.eo);
  const SparseMat a = dephasing_superoperator(f.space).matrix;
  auto pl = f.params;
  pl.f_tilde = 1.0;
  const SparseMat b = build_liouvillian(f.space, pl).matrix;
  const DenseMat l = f.eo.left(j), r = f.eo.right(j);
  const cplx lhs = first_order_shift(l, r, SparseMat(2.0 * a + 0.5 * b));
  const cplx rhs = 2.0 * first_order_shift(l, r, a) + 0.5 * first_order_shift(l, r, b);
  EXPECT_LT(std::abs(lhs - rhs), 1e-10);
}

TEST(FirstOrder, RequiresBiorthonormalPair) {
  const auto& f = fixture();
  const std::size_t j = select_nonstationary_index(f.eo);
  EXPECT_THROW(first_order_shift(2.0 * f.eo.left(j), f.eo.right(j), dephasing_superoperator(f.space)),
               NormalizationError);
  EXPECT_THROW(dephasing_shift(f.space, 2.0 * f.eo.left(j), f.eo.right(j)), NormalizationError);
  EXPECT_THROW(first_order_shift(f.eo.left(j), f.eo.right(j), SparseMat(3, 3)), DimensionError);
}

TEST(Dephasing, OperatorFormMatchesSuperoperator) {
  const auto& f = fixture();
  const std::size_t j = select_nonstationary_index(f.eo);
  const cplx a = dephasing_shift(f.space, f.eo.left(j), f.eo.right(j));
  const cplx b = first_order_shift(f.eo.left(j), f.eo.right(j), dephasing_superoperator(f.space));
  EXPECT_LT(std::abs(a - b), 1e-12);
  EXPECT_LT(a.real(), 0.0);
  EXPECT_GT(std::abs(a.imag()), 1e-6);  // frequency shift is nonzero
}

TEST(Dephasing, ZeroRateGivesZeroShift) {
  const auto& f = fixture();
  const auto r = dephasing_result(f.eo, select_nonstationary_index(f.eo), 0.0);
  EXPECT_EQ(r.delta_lambda, cplx(0.0));
  EXPECT_EQ(r.extra_decay(), 0.0);
  EXPECT_EQ(r.frequency_shift(), 0.0);
}

TEST(Dephasing, SteadyStateIsProtected) {
  const auto& f = fixture();
  const auto r = dephasing_result(f.ee, 0, 0.1);
  EXPECT_LT(std::abs(r.lambda0), 1e-8);
  EXPECT_LT(std::abs(r.delta_lambda), 1e-10);
  EXPECT_LE(r.shifted().real(), 1e-10);
}

TEST(Dephasing, MissingLeftVectorRejected) {
  auto sys = fixture().eo;
  sys.pairs[0].left_block.resize(0);
  EXPECT_THROW(dephasing_result(sys, 0, 0.1), NormalizationError);
}

TEST(SecondOrder, RatioBoundedAgainstExactDiagonalization) {
  const auto& f = fixture();
  const std::size_t j = select_nonstationary_index(f.eo);
  const cplx lam0 = f.eo.pairs[j].lambda;
  const cplx lam1 = dephasing_shift(f.space, f.eo.left(j), f.eo.right(j));
  std::vector<double> ratios;
  for (double a : {1e-3, 1e-2}) {
    auto p = f.params;
    p.dephase_rate = a;
    const auto sys = dense_eig(extract_block(build_liouvillian(f.space, p), Sector::eo), {20000, false});
    // Continue the unperturbed eigenvalue to the nearest perturbed one.
    cplx best = sys.pairs.front().lambda;
    for (const auto& q : sys.pairs)
      if (std::abs(q.lambda - lam0 - a * lam1) < std::abs(best - lam0 - a * lam1)) best = q.lambda;
    ratios.push_back(second_order_ratio(best, lam0, lam1, a));
  }
  EXPECT_TRUE(std::isfinite(ratios[0]));
  EXPECT_LE(ratios[0], 2.0 * ratios[1]);
  EXPECT_GE(ratios[0], 0.5 * ratios[1]);
}
