#pragma once

#include <string>
#include <variant>
#include <vector>

#include "conjlab/geomap.hpp"
#include "conjlab/types.hpp"

namespace conjlab {

/// Per-sample matrices K(i). Index i refers to sample i of the trajectories;
/// `start` is the sample index of matrices[0].
struct MapSequence {
  std::size_t start = 0;
  std::vector<Matrix> matrices;
  std::vector<bool> invertible;

  std::size_t size() const { return matrices.size(); }
  /// Matrix for sample i; indices past the end reuse the last matrix.
  const Matrix& at(std::size_t i) const;
  std::size_t flagged() const;
};

/// Graded monomial exponents of total degree <= degree in `dim` variables,
/// ordered by degree and then lexicographically (highest power of x1 first).
std::vector<std::vector<int>> monomial_exponents(int dim, int degree);

/// f(x) = sum_alpha a_alpha x^alpha, one coefficient column per monomial.
struct PolynomialMap {
  int dim = 0;
  int degree = 0;
  std::vector<std::vector<int>> exponents;
  Matrix coefficients;  // dim x exponents.size()
  bool rank_deficient = false;

  Vector features(const Vector& x) const;
  Vector operator()(const Vector& x) const { return coefficients * features(x); }
  Matrix jacobian(const Vector& x) const;
};

using ConjugacyMap = std::variant<Matrix, AffineMap, MapSequence, PiecewiseAffineMap, PolynomialMap>;

std::string map_kind(const ConjugacyMap& map);

/// K applied to the state x of sample i at time t. Piecewise-affine maps whose
/// dimension is one larger than x act on (x, t) and drop the time coordinate.
Vector apply_map(const ConjugacyMap& map, std::size_t i, double t, const Vector& x);

/// DK at (i, t, x), n x n.
Matrix map_jacobian(const ConjugacyMap& map, std::size_t i, double t, const Vector& x);

}  // namespace conjlab
