#pragma once

// Driven-dissipative Bose-Hubbard dimer: parameters, thermodynamic scaling,
// Hamiltonians and jump operators.
//
// Nonlinearity convention: the lab-basis Kerr term is U a_i^dag a_i^dag a_i a_i
// per site; rotating to a_{B,A} = (a_1 +- a_2)/sqrt(2) turns it exactly into
// (U/2)(B^2 + A^2 + B^dag^2 A^2 + h.c. + 4 n_B n_A), so both Hamiltonians use
// the same U.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bhd/fock.hpp"

namespace bhd {

/// How gamma enters the dissipator. `amplitude`: gamma is the field damping
/// rate of the mean-field equations (d alpha_B/dt = -gamma alpha_B + ...), so
/// the Lindblad term is 2 gamma D[a_B]. `lindblad`: the term is gamma D[a_B]
/// and the field decays at gamma / 2.
enum class LossConvention { amplitude, lindblad };

inline const char* loss_convention_name(LossConvention c) {
  return c == LossConvention::amplitude ? "amplitude" : "lindblad";
}

struct ModelParams {
  double j = 1.1;
  double delta = 0.8;
  double u_tilde = 1.0;
  double f_tilde = 1.8;
  double gamma = 1.0;
  double dephase_rate = 0.0;
  int n_scale = 1;
  LossConvention loss = LossConvention::amplitude;

  double drive() const { return f_tilde * std::sqrt(static_cast<double>(n_scale)); }
  double nonlinearity() const { return u_tilde / static_cast<double>(n_scale); }
  /// Rate multiplying D[a_B] in the master equation.
  double loss_rate() const { return loss == LossConvention::amplitude ? 2.0 * gamma : gamma; }
  /// Decay rate of the coherent amplitude <a_B>.
  double amplitude_damping() const { return loss == LossConvention::amplitude ? gamma : 0.5 * gamma; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct ScaledParams {
  double f;
  double u;
};

/// F = F~ sqrt(N), U = U~ / N.
inline ScaledParams scaled_params(const ModelParams& p) {
  if (p.n_scale < 1) throw std::invalid_argument("n_scale must be >= 1");
  return {p.drive(), p.nonlinearity()};
}

/// J=1.1, Delta=0.8, U~=1, gamma=1: the monostable parameter set.
inline ModelParams monostable_preset(double f_tilde = 1.8, int n_scale = 1) {
  ModelParams p;
  p.f_tilde = f_tilde;
  p.n_scale = n_scale;
  return p;
}

inline constexpr int kAntibondingCutoff = 6;

struct CutoffPreset {
  int n_scale;
  int k_b;
};

inline constexpr CutoffPreset kCutoffLadder[] = {{1, 14}, {2, 20}, {3, 24}, {4, 30}, {10, 50}, {20, 100}};

/// Preset cutoffs (K_B per N, K_A = 6); nullopt for N outside the ladder.
inline std::optional<FockSpace> preset_space(int n_scale) {
  for (const auto& c : kCutoffLadder) {
    if (c.n_scale == n_scale) return FockSpace(c.k_b, kAntibondingCutoff);
  }
  return std::nullopt;
}

/// Beam-splitter basis Hamiltonian, assembled from ladder operators.
inline OperatorMatrix hamiltonian_bs(const FockSpace& s, const ModelParams& p) {
  const auto [f, u] = scaled_params(p);
  const auto b = destroy(s, Mode::B);
  const auto a = destroy(s, Mode::A);
  const auto bd = adjoint(b);
  const auto ad = adjoint(a);
  const auto nb = number(s, Mode::B);
  const auto na = number(s, Mode::A);

  OperatorMatrix h = (std::sqrt(2.0) * f) * (bd + b);
  h = h + (-p.delta - p.j) * nb;
  h = h + (-p.delta + p.j) * na;
  if (u != 0.0) {
    OperatorMatrix kerr = bd * bd * b * b;
    kerr = kerr + ad * ad * a * a;
    kerr = kerr + bd * bd * a * a;
    kerr = kerr + b * b * ad * ad;
    kerr = kerr + 4.0 * (nb * na);
    h = h + (u / 2.0) * kerr;
  }
  return hermitian_part(h);
}

/// Lab-basis Hamiltonian. Site 1 occupies the B slot of the space, site 2 the A slot.
inline OperatorMatrix hamiltonian_lab(const FockSpace& s, const ModelParams& p) {
  const auto [f, u] = scaled_params(p);
  const auto a1 = destroy(s, Mode::B);
  const auto a2 = destroy(s, Mode::A);
  const auto a1d = adjoint(a1);
  const auto a2d = adjoint(a2);

  OperatorMatrix h = f * (a1 + a2 + a1d + a2d);
  h = h + (-p.delta) * (a1d * a1);
  h = h + (-p.delta) * (a2d * a2);
  h = h + (-p.j) * (a1d * a2 + a1 * a2d);
  if (u != 0.0) h = h + u * (a1d * a1d * a1 * a1 + a2d * a2d * a2 * a2);
  return hermitian_part(h);
}

struct JumpOperator {
  double rate;
  OperatorMatrix op;
  std::string label;
};

/// loss_rate() * D[a_B], plus dephase_rate * D[n_B + n_A] when the rate is positive.
inline std::vector<JumpOperator> jump_operators(const FockSpace& s, const ModelParams& p) {
  std::vector<JumpOperator> out;
  out.push_back({p.loss_rate(), destroy(s, Mode::B), "loss"});
  if (p.dephase_rate > 0.0) {
    out.push_back({p.dephase_rate, number(s, Mode::B) + number(s, Mode::A), "dephasing"});
  }
  return out;
}

/// Collective dephasing operator L_d = n_B + n_A.
inline OperatorMatrix collective_dephasing(const FockSpace& s) { return number(s, Mode::B) + number(s, Mode::A); }

/// Lab-mode occupation n_1 = a_1^dag a_1 with a_1 = (a_B + a_A)/sqrt(2).
/// Breaks the parity symmetry; used as a negative control.
inline OperatorMatrix lab_mode_number(const FockSpace& s) {
  const auto a1 = scale(destroy(s, Mode::B) + destroy(s, Mode::A), 1.0 / std::sqrt(2.0));
  return adjoint(a1) * a1;
}

}  // namespace bhd
