#pragma once

#include <vector>

#include "conjlab/dynsys.hpp"
#include "conjlab/maps.hpp"

namespace conjlab {

/// Multipliers on the sample grid of the trajectories; lambda/mu at T are zero.
struct AdjointPath {
  std::vector<double> times;
  std::vector<Vector> lambda;
  std::vector<Vector> mu;

  double lambda_sup() const;
  double mu_sup() const;
};

/// Phi(t) = dy(t)/dy0 on the sample grid.
struct SensitivityPath {
  std::vector<double> times;
  std::vector<Matrix> Phi;
};

/// H = -(1/T)|K(x) - y|^2 + lambda^T f(t, x) + mu^T g(t, y).
double hamiltonian(double t, const Vector& x, const Vector& y, const ConjugacyMap& K, std::size_t index,
                   const Vector& lambda, const Vector& mu, double T, const SystemSpec& f,
                   const SystemSpec& g);

/// Backward rk4 for
///   lambda' = (2/T) DK^T (K x - y) - Df^T lambda,
///   mu'     = -(2/T) (K x - y) - Dg^T mu,
/// with zero terminal values. X must be a trajectory of f and Y of g; states
/// between samples come from cubic Hermite interpolation. For a MapSequence the
/// mismatch source is interpolated linearly between samples.
AdjointPath integrate_adjoints(const Trajectory& X, const Trajectory& Y, const ConjugacyMap& K,
                               const SystemSpec& f, const SystemSpec& g);

/// Exact gradient of discrete_cost over constant matrices: (2/N) sum_{i=1..N} (K x_i - y_i) x_i^T.
Matrix stationarity_gradient(const Matrix& K, const Trajectory& X, const Trajectory& Y);

/// Frobenius norm of stationarity_gradient.
double stationarity_residual(const Matrix& K, const Trajectory& X, const Trajectory& Y);

/// Largest eigenvalue of the Hessian of -J_N over constant matrices, per row of K:
/// -(2/N) sum x_i x_i^T. Nonpositive means the second-order condition holds.
double curvature_check(const Trajectory& X);

/// rk4 for Phi' = Dg(t, y(t)) Phi, Phi(0) = I, along Y.
SensitivityPath variational_matrix(const SystemSpec& spec, const Trajectory& Y);

/// Per-sample n x n residual of the entrywise stationarity condition, entry (i, j):
///   2 x_j (K x)_j - 2 [x_j y_j + x_j(0) (x^T K Phi)_i] + 2 x_j(0) (y^T Phi)_i.
std::vector<Matrix> kkt_residual(const MapSequence& Kseq, const Trajectory& X, const Trajectory& Y,
                                 const SensitivityPath& Phi);

/// Same condition with Phi(t) = exp(A t) evaluated directly.
std::vector<Matrix> kkt2_residual(const MapSequence& Kseq, const Trajectory& X, const Trajectory& Y,
                                  const Matrix& A);

/// K*(x) = C x + y0 - C x0 for the pair x' = A x + B, y' = C (A x + B).
AffineMap example1_map(const Matrix& C, const Vector& x0, const Vector& y0);

/// The y system of that pair written in y alone (C invertible):
/// y' = C A C^{-1} (y - D) + C B with D = y0 - C x0.
SystemSpec example1_target(const Matrix& A, const Vector& B, const Matrix& C, const Vector& x0,
                           const Vector& y0);

}  // namespace conjlab
