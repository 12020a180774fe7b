#pragma once

#include <functional>
#include <string>
#include <vector>

#include "conjlab/types.hpp"

namespace conjlab {

/// y' = A y + r(y) near a hyperbolic equilibrium, with the dichotomy of A.
struct HartmanProblem {
  Matrix A;
  Matrix Pplus;   // projection onto the decaying part
  Matrix Pminus;  // I - Pplus
  double M = 1.0;
  double eta = 1.0;
  std::function<Vector(const Vector&)> r;
  double r_lip = 0.0;
  double r_sup = 0.0;  // bound on |r| over the region of interest; 0 means unknown
  Matrix grad_r0;

  int dim() const { return static_cast<int>(A.rows()); }

  /// Projections from the eigendecomposition of A, M = cond(V), eta = min |Re lambda|.
  /// Throws for eigenvalues on the imaginary axis or eigenvector condition above 1e8.
  static HartmanProblem from_matrix(const Matrix& A, std::function<Vector(const Vector&)> r = {},
                                    double r_lip = 0.0, Matrix grad_r0 = Matrix());

  void validate() const;
};

/// e^{At} P+ for t >= 0, -e^{At} P- for t < 0.
Matrix green_kernel(const HartmanProblem& problem, double t);

/// (2M/eta) |r|_Lip; below 1 certifies the Picard iteration.
double contraction_certificate(const HartmanProblem& problem);

/// Vector-valued function on a regular grid over a box, multilinear between nodes.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(Vector lower, Vector upper, std::vector<int> nodes, int components);

  int dim() const { return static_cast<int>(lower_.size()); }
  int components() const { return static_cast<int>(values_.rows()); }
  std::size_t node_count() const { return static_cast<std::size_t>(values_.cols()); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const std::vector<int>& nodes() const { return nodes_; }

  /// Coordinates of node k; the first axis varies slowest (row-major).
  Vector node(std::size_t k) const;
  Matrix& values() { return values_; }
  const Matrix& values() const { return values_; }

  bool contains(const Vector& x) const;
  Vector clamp(const Vector& x) const;
  /// Multilinear interpolation at clamp(x).
  Vector operator()(const Vector& x) const;

  std::string to_json() const;

 private:
  Vector lower_, upper_;
  std::vector<int> nodes_;
  Matrix values_;
};

struct FixedPointOptions {
  Vector lower;
  Vector upper;
  std::vector<int> nodes;
  double s_cutoff = 0.0;  // 0 picks S with M e^{-eta S} sup|r| < tol / 10
  double quad_step = 0.01;
  double tol = 1e-8;
  int max_iter = 200;
  unsigned threads = 0;
};

struct FixedPointResult {
  GridFunction g;
  std::vector<double> sup_changes;
  std::vector<double> ratios;
  int iterations = 0;
  double s_cutoff = 0.0;
  double truncation_bound = 0.0;
  double certificate = 0.0;
};

/// Picard iteration g <- T g with
///   (T g)(x) = int_{-S}^{S} G_A(s) r(z + g(z)) ds,  z = clamp(e^{-As} x),
/// trapezoid rule with step quad_step, Jacobi sweeps over the grid nodes.
FixedPointResult solve_conjugacy_fixed_point(const HartmanProblem& problem, const FixedPointOptions& opts);

/// max_t |(e^{At}x0 + g(e^{At}x0)) - y(t)| where y solves y' = Ay + r(y), y(0) = x0 + g(x0), by rk4.
double verify_conjugacy(const HartmanProblem& problem, const GridFunction& g, const Vector& x0,
                        double horizon, double dt);

/// G(t) = int_0^t U U^T ds with U(s) = e^{As} grad_r0 x0, trapezoid rule.
Matrix controllability_gramian(const HartmanProblem& problem, const Vector& x0, double t, double quad_step = 1e-3);

struct TerminalMapResult {
  std::vector<double> times;
  std::vector<double> K;  // U^T(t) G^{-1}(t1) d
  std::vector<Vector> y;
  Matrix gramian;         // G(t1)
  double gramian_condition = 0.0;
  double endpoint_residual = 0.0;
  int iterations = 0;
};

/// Steers y from y0 at t = 0 to y1 at t = t1 through the fixed point of
///   (P y)(t) = e^{At} y0 + e^{At} G(t) G^{-1}(t1) (e^{-At1} y1 - y0).
TerminalMapResult terminal_map(const HartmanProblem& problem, const Vector& x0, const Vector& y0,
                               const Vector& y1, double t1, double tol = 1e-10, int max_iter = 10,
                               double quad_step = 1e-3);

/// q(t1) = (M e^{-eta t1} + (M^3 c1^2 c2 |x0|^2 / 2eta) e^{-eta t1})
///         / (1 - (M^4 c1^2 c2 |x0|^2 / 2eta) e^{-2 eta t1}).
double decay_factor(double M, double eta, double c1, double c2, double x0_norm, double t1);

/// K(x) = (D/C + y0) ((x + B/A) / (x0 + B/A))^{C/A} - D/C for x' = Ax + B, y' = Cy + D.
double example2_closed_form(double A, double B, double C, double D, double x0, double y0, double x);

}  // namespace conjlab
