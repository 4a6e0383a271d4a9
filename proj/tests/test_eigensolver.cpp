#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "bhd/eigensolver.hpp"
#include "bhd/pipeline.hpp"

using namespace bhd;

namespace {

SectorBlock model_block(int kb, int ka, Sector s, double f = 1.8, int n = 1) {
  return extract_block(build_liouvillian(FockSpace(kb, ka), monostable_preset(f, n)), s);
}

KrylovOptions wide(int n_pairs) {
  KrylovOptions o;
  o.n_pairs = n_pairs;
  o.krylov_dim = 120;
  o.max_restarts = 400;
  return o;
}

}  // namespace

TEST(DenseEig, SingleDecayingMode) {
  FockSpace s(2, 1);
  const auto l = build_liouvillian(OperatorMatrix(s, SparseMat(2, 2)), {{1.0, destroy(s, Mode::B), "a"}});
  const auto sys = dense_eig(extract_block(l, Sector::ee));
  ASSERT_EQ(sys.pairs.size(), 4u);
  const double want[] = {0.0, -0.5, -0.5, -1.0};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(sys.pairs[static_cast<std::size_t>(i)].lambda.real(), want[i], 1e-12);
    EXPECT_NEAR(sys.pairs[static_cast<std::size_t>(i)].lambda.imag(), 0.0, 1e-12);
  }
  EXPECT_EQ(sys.report.method, SolveReport::Method::dense);
  EXPECT_TRUE(sys.report.converged);
}

TEST(DenseEig, SortedResidualsAndBiorthonormal) {
  const auto sys = dense_eig(model_block(6, 4, Sector::eo));
  for (std::size_t i = 1; i < sys.pairs.size(); ++i) EXPECT_GE(sys.pairs[i - 1].lambda.real(), sys.pairs[i].lambda.real());
  for (const auto& p : sys.pairs) {
    EXPECT_LE(p.residual, 1e-9);
    EXPECT_LE(p.lambda.real(), 1e-10);
    EXPECT_NEAR(p.right_block.norm(), 1.0, 1e-12);
  }
  EXPECT_LT(biorthonormality_error(sys.pairs), 1e-8);
}

TEST(DenseEig, SingleSteadyStatePerDiagonalSector) {
  for (Sector s : {Sector::ee, Sector::oo}) {
    DenseOptions o;
    o.compute_vectors = false;
    const auto sys = dense_eig(model_block(8, 4, s), o);
    int zeros = 0;
    for (const auto& p : sys.pairs) {
      if (std::abs(p.lambda) < 1e-8) {
        ++zeros;
      } else {
        EXPECT_LT(p.lambda.real(), -1e-6);
      }
    }
    EXPECT_EQ(zeros, 1) << sector_name(s);
  }
}

TEST(DenseEig, CoherenceSectorsAreConjugate) {
  const auto eo = dense_eig(model_block(6, 4, Sector::eo));
  const auto oe = dense_eig(model_block(6, 4, Sector::oe));
  ASSERT_EQ(eo.pairs.size(), oe.pairs.size());
  std::vector<bool> used(oe.pairs.size(), false);
  for (const auto& p : eo.pairs) {
    double best = INFINITY;
    std::size_t bi = 0;
    for (std::size_t j = 0; j < oe.pairs.size(); ++j) {
      const double d = std::abs(std::conj(oe.pairs[j].lambda) - p.lambda);
      if (!used[j] && d < best) {
        best = d;
        bi = j;
      }
    }
    used[bi] = true;
    EXPECT_LT(best, 1e-10);
  }
}

TEST(DenseEig, RefusesOverLimit) {
  DenseOptions o;
  o.dense_limit = 10;
  EXPECT_THROW(dense_eig(model_block(4, 2, Sector::ee), o), DenseLimitError);
}

TEST(KrylovEig, AgreesWithDense) {
  for (Sector s : {Sector::ee, Sector::eo}) {
    const auto b = model_block(10, 4, s);
    const auto dense = dense_eig(b);
    const auto kry = krylov_eig(b, wide(6));
    ASSERT_EQ(kry.pairs.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_LT(std::abs(kry.pairs[i].lambda - dense.pairs[i].lambda), 1e-8) << sector_name(s) << " pair " << i;
      EXPECT_LE(kry.pairs[i].residual, 1e-8);
    }
    EXPECT_TRUE(kry.report.converged);
    EXPECT_EQ(kry.report.method, SolveReport::Method::krylov);
  }
}

TEST(KrylovEig, SteadyStateAtTwoCopies) {
  const auto b = model_block(20, 6, Sector::ee, 1.8, 2);
  KrylovOptions o = wide(2);
  o.krylov_dim = 200;
  const auto sys = krylov_eig(b, o);
  EXPECT_LT(std::abs(sys.pairs.front().lambda), 1e-8);
}

TEST(KrylovEig, SeededDeterminism) {
  const auto b = model_block(8, 4, Sector::eo);
  const auto x = krylov_eig(b, wide(4));
  const auto y = krylov_eig(b, wide(4));
  ASSERT_EQ(x.pairs.size(), y.pairs.size());
  for (std::size_t i = 0; i < x.pairs.size(); ++i) {
    EXPECT_EQ(x.pairs[i].lambda, y.pairs[i].lambda);
    EXPECT_EQ((x.pairs[i].right_block - y.pairs[i].right_block).norm(), 0.0);
  }
}

TEST(KrylovEig, NonConvergenceCarriesResiduals) {
  const auto b = model_block(10, 4, Sector::eo);
  KrylovOptions o;
  o.n_pairs = 6;
  o.krylov_dim = 14;
  o.max_restarts = 0;
  o.tol = 1e-14;
  try {
    krylov_eig(b, o);
    FAIL() << "expected ConvergenceError";
  } catch (const ConvergenceError& e) {
    EXPECT_FALSE(e.best_residuals.empty());
  }
}

TEST(LeftEigs, NormalGeneratorHasEqualLeftAndRight) {
  FockSpace s(4, 1);
  const auto x = destroy(s, Mode::B) + create(s, Mode::B);
  const auto l = build_liouvillian(OperatorMatrix(s, SparseMat(4, 4)), {{1.0, x, "x"}});
  const auto b = extract_block(l, Sector::ee);
  const DenseMat a(b.matrix);
  ASSERT_LT((a - a.adjoint()).norm(), 1e-14);
  const auto sys = dense_eig(b);
  // Each left vector lies in the span of the right vectors of its eigenvalue.
  for (const auto& p : sys.pairs) {
    std::vector<DenseVec> span;
    for (const auto& q : sys.pairs)
      if (std::abs(q.lambda - p.lambda) < 1e-8) span.push_back(q.right_block);
    DenseMat basis(a.rows(), static_cast<Eigen::Index>(span.size()));
    for (std::size_t i = 0; i < span.size(); ++i) basis.col(static_cast<Eigen::Index>(i)) = span[i];
    const DenseVec l = p.left_block.normalized();
    const DenseVec proj = basis * basis.colPivHouseholderQr().solve(l);
    EXPECT_LT((proj - l).norm(), 1e-10);
  }
}

TEST(LeftEigs, KrylovLeftVectorsBiorthonormal) {
  const auto b = model_block(8, 4, Sector::eo);
  KrylovOptions o = wide(4);
  const auto sys = krylov_eig_with_left(b, o);
  for (const auto& p : sys.pairs) {
    ASSERT_EQ(p.left_block.size(), p.right_block.size());
    EXPECT_GT(std::abs(p.left_block.dot(p.right_block)), 0.0);
    const DenseVec res = b.matrix.adjoint() * p.left_block - std::conj(p.lambda) * p.left_block;
    EXPECT_LT(res.norm() / p.left_block.norm(), 1e-7);
  }
  EXPECT_LT(biorthonormality_error(sys.pairs), 1e-8);
}

TEST(Biorthonormalize, SingularOverlapThrows) {
  std::vector<EigenPair> pairs(1);
  pairs[0].lambda = 1.0;
  pairs[0].right_block = DenseVec::Unit(3, 0);
  pairs[0].left_block = DenseVec::Unit(3, 1);
  EXPECT_THROW(biorthonormalize(pairs), NormalizationError);
}

TEST(ShiftInvert, AgreesWithDenseNearTargets) {
  const auto b = model_block(10, 4, Sector::eo);
  const auto dense = dense_eig(b);
  ShiftInvertOptions o;
  o.shifts = targets_for(monostable_preset(1.8, 1), Sector::eo);
  o.n_pairs = 4;
  o.compute_left = true;
  const auto si = shift_invert_eig(b, o);
  ASSERT_FALSE(si.pairs.empty());
  for (const auto& p : si.pairs) {
    double best = INFINITY;
    for (const auto& q : dense.pairs) best = std::min(best, std::abs(q.lambda - p.lambda));
    EXPECT_LT(best, 1e-8);
    EXPECT_LT(p.residual, 1e-8);
  }
  EXPECT_LT(biorthonormality_error(si.pairs), 1e-8);
  EXPECT_EQ(si.report.method, SolveReport::Method::shift_invert);
  // The slowest-decaying coherence is among the targets.
  EXPECT_LT(std::abs(si.pairs.front().lambda - dense.pairs.front().lambda), 1e-8);
}

TEST(ShiftInvert, FindsSteadyState) {
  ShiftInvertOptions o;
  o.n_pairs = 2;
  const auto sys = shift_invert_eig(model_block(10, 4, Sector::oo), o);
  EXPECT_LT(std::abs(sys.pairs.front().lambda), 1e-9);
}

TEST(Pipeline, MethodResolution) {
  SolverSettings s;
  EXPECT_EQ(resolve_method(s, 100), SolverMethod::dense);
  EXPECT_EQ(resolve_method(s, 5000), SolverMethod::krylov);
  s.method = SolverMethod::shift_invert;
  EXPECT_EQ(resolve_method(s, 100), SolverMethod::shift_invert);
  EXPECT_EQ(solver_method_from_name("shift-invert"), SolverMethod::shift_invert);
  EXPECT_THROW(solver_method_from_name("lanczos"), ConfigError);
}

TEST(ConvergenceSweep, UndrivenIsTriviallyStable) {
  const auto rep = convergence_sweep(monostable_preset(0.0, 1), Sector::eo, {4, 6, 8}, 4);
  ASSERT_EQ(rep.steps.size(), 3u);
  ASSERT_TRUE(rep.stable_from.has_value());
  EXPECT_EQ(*rep.stable_from, 4);
}

TEST(ConvergenceSweep, LeadingCoherenceStableByFourteen) {
  SolverSettings s;
  s.method = SolverMethod::krylov;
  s.krylov = wide(4);
  s.krylov.krylov_dim = 160;
  const auto rep = convergence_sweep(monostable_preset(1.8, 1), Sector::eo, {10, 14, 18}, 6, s);
  ASSERT_EQ(rep.steps.size(), 3u);
  for (const auto& st : rep.steps) EXPECT_TRUE(st.report.converged) << st.k_b;
  ASSERT_TRUE(rep.stable_from.has_value());
  EXPECT_LE(*rep.stable_from, 14);
  EXPECT_FALSE(rep.steps[1].stable);  // 10 -> 14 still moves
}

TEST(ConvergenceSweep, RejectsNonIncreasingLadder) {
  EXPECT_THROW(convergence_sweep(monostable_preset(), Sector::ee, {6, 6}), ConfigError);
}
