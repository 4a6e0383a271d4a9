#pragma once

#include <stdexcept>
#include <string>
#include <vector>
#include <complex>

namespace bhd {

/// Operands live on different Fock spaces or have incompatible shapes.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A superoperator couples two parity sectors that should be disjoint.
struct SymmetryViolation : std::runtime_error {
  SymmetryViolation(const std::string& what, long row, long col, std::complex<double> value)
      : std::runtime_error(what), row(row), col(col), value(value) {}
  long row;
  long col;
  std::complex<double> value;
};

/// An iterative method stopped before reaching its tolerance.
struct ConvergenceError : std::runtime_error {
  ConvergenceError(const std::string& what, std::vector<double> best_residuals = {})
      : std::runtime_error(what), best_residuals(std::move(best_residuals)) {}
  std::vector<double> best_residuals;
};

/// Left/right eigenvector pair is not biorthonormal.
struct NormalizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense diagonalization requested for a block larger than the configured limit.
struct DenseLimitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Left eigenvalues cannot be matched one-to-one with right eigenvalues.
struct AmbiguousMatch : std::runtime_error {
  AmbiguousMatch(const std::string& what, std::vector<std::complex<double>> cluster)
      : std::runtime_error(what), cluster(std::move(cluster)) {}
  std::vector<std::complex<double>> cluster;
};

/// Assembled initial state needed a positivity repair larger than allowed.
struct PositivityError : std::runtime_error {
  PositivityError(const std::string& what, double repair) : std::runtime_error(what), repair(repair) {}
  double repair;
};

/// Bad or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace bhd
