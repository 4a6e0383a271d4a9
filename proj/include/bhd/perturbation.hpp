#pragma once

// First-order eigenvalue shifts under a perturbing superoperator, used for
// collective dephasing: lambda(a) = lambda0 + a <<l0| L1 |r0>> + O(a^2).

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "bhd/eigensolver.hpp"
#include "bhd/liouvillian.hpp"
#include "bhd/model.hpp"

namespace bhd {

/// |Tr[l^dag r] - 1| tolerance demanded before computing a shift.
inline constexpr double kBiorthonormalTol = 1e-8;

struct PerturbationResult {
  cplx lambda0;
  cplx delta_lambda;  // first-order coefficient, before multiplying by alpha
  double alpha = 0.0;
  Sector sector = Sector::ee;

  cplx shifted() const { return lambda0 + alpha * delta_lambda; }
  /// -Re(alpha delta_lambda): the additional decay rate.
  double extra_decay() const { return -alpha * delta_lambda.real(); }
  /// Im(alpha delta_lambda): the frequency shift.
  double frequency_shift() const { return alpha * delta_lambda.imag(); }
};

namespace detail {
inline void require_biorthonormal(const DenseMat& l0, const DenseMat& r0) {
  const cplx ov = (l0.array().conjugate() * r0.array()).sum();
  if (std::abs(ov - 1.0) > kBiorthonormalTol) {
    throw NormalizationError("first_order_shift: Tr[l^dag r] = (" + std::to_string(ov.real()) + ", " +
                             std::to_string(ov.imag()) + "), expected 1; biorthonormalize first");
  }
}
}  // namespace detail

/// Tr[l0^dag L1(r0)] with L1 given as a vectorized superoperator.
inline cplx first_order_shift(const DenseMat& l0, const DenseMat& r0, const SparseMat& perturbation) {
  if (l0.rows() != r0.rows() || l0.cols() != r0.cols()) throw DimensionError("first_order_shift: shape mismatch");
  if (perturbation.rows() != r0.size() || perturbation.cols() != r0.size()) {
    throw DimensionError("first_order_shift: superoperator does not match operator size");
  }
  detail::require_biorthonormal(l0, r0);
  const DenseVec lr = perturbation * vectorize(r0);
  return vectorize(l0).dot(lr);
}

inline cplx first_order_shift(const DenseMat& l0, const DenseMat& r0, const Superoperator& perturbation) {
  return first_order_shift(l0, r0, perturbation.matrix);
}

/// D[L](x) = L x L^dag - (1/2){L^dag L, x} applied in operator form.
inline DenseMat dissipator_action(const SparseMat& l, const DenseMat& x) {
  const SparseMat ld = l.adjoint();
  const SparseMat ll = ld * l;
  return DenseMat(l * (x * ld)) - 0.5 * DenseMat(ll * x) - 0.5 * DenseMat(x * ll);
}

/// Tr[l0^dag D[L_d](r0)] for collective dephasing L_d = n_B + n_A, without
/// building the dim^2 superoperator.
inline cplx dephasing_shift(const FockSpace& s, const DenseMat& l0, const DenseMat& r0) {
  if (r0.rows() != s.dim() || l0.rows() != s.dim()) throw DimensionError("dephasing_shift: shape mismatch");
  detail::require_biorthonormal(l0, r0);
  const DenseMat d = dissipator_action(collective_dephasing(s).matrix(), r0);
  return (l0.array().conjugate() * d.array()).sum();
}

/// Unit-rate dephasing superoperator D[n_B + n_A].
inline Superoperator dephasing_superoperator(const FockSpace& s) {
  return build_liouvillian(OperatorMatrix(s, SparseMat(s.dim(), s.dim()), true),
                           {JumpOperator{1.0, collective_dephasing(s), "dephasing"}});
}

/// Shift of pair j of a solved system (left vectors required).
inline PerturbationResult dephasing_result(const EigenSystem& sys, std::size_t j, double rate) {
  const auto& pair = sys.pairs.at(j);
  if (pair.left_block.size() == 0) throw NormalizationError("dephasing_result: left eigenvector missing");
  PerturbationResult r;
  r.lambda0 = pair.lambda;
  r.alpha = rate;
  r.sector = sys.sector;
  if (rate == 0.0) {
    r.delta_lambda = 0.0;
    return r;
  }
  r.delta_lambda = dephasing_shift(sys.space, sys.left(j), sys.right(j));
  return r;
}

struct DephasingRow {
  int n_scale = 0;
  PerturbationResult result;
};

/// CSV columns: n_scale, sector, re_lambda0, im_lambda0, re_shift, im_shift, rate.
/// The shift columns hold the first-order coefficient times the rate.
inline const char* kDephasingColumns = "n_scale,sector,re_lambda0,im_lambda0,re_shift,im_shift,rate";

/// Ratio |lambda(a) - lambda0 - a lambda1| / a^2 for the exact eigenvalue
/// lambda(a) of L0 + a L1. Bounded as a -> 0 when lambda1 is correct.
inline double second_order_ratio(cplx lambda_exact, cplx lambda0, cplx lambda1, double a) {
  return std::abs(lambda_exact - lambda0 - a * lambda1) / (a * a);
}

}  // namespace bhd
