#include "conjlab/maps.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace conjlab {

const Matrix& MapSequence::at(std::size_t i) const {
  if (matrices.empty()) throw InvalidArgument("empty map sequence");
  if (i < start) throw InvalidArgument("map sequence has no matrix for sample " + std::to_string(i));
  return matrices[std::min(i - start, matrices.size() - 1)];
}

std::size_t MapSequence::flagged() const {
  return static_cast<std::size_t>(std::count(invertible.begin(), invertible.end(), false));
}

std::vector<std::vector<int>> monomial_exponents(int dim, int degree) {
  if (dim < 1 || degree < 0) throw InvalidArgument("monomial_exponents: need dim >= 1 and degree >= 0");
  std::vector<std::vector<int>> out;
  std::vector<int> alpha(static_cast<std::size_t>(dim), 0);
  for (int total = 0; total <= degree; ++total) {
    std::function<void(int, int)> fill = [&](int pos, int left) {
      if (pos == dim - 1) {
        alpha[static_cast<std::size_t>(pos)] = left;
        out.push_back(alpha);
        return;
      }
      for (int p = left; p >= 0; --p) {
        alpha[static_cast<std::size_t>(pos)] = p;
        fill(pos + 1, left - p);
      }
    };
    fill(0, total);
  }
  return out;
}

Vector PolynomialMap::features(const Vector& x) const {
  if (x.size() != dim) throw InvalidArgument("polynomial map applied to a state of wrong dimension");
  Vector phi(static_cast<Eigen::Index>(exponents.size()));
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    double v = 1.0;
    for (int j = 0; j < dim; ++j) {
      const int p = exponents[k][static_cast<std::size_t>(j)];
      for (int q = 0; q < p; ++q) v *= x(j);
    }
    phi(static_cast<Eigen::Index>(k)) = v;
  }
  return phi;
}

Matrix PolynomialMap::jacobian(const Vector& x) const {
  if (x.size() != dim) throw InvalidArgument("polynomial map applied to a state of wrong dimension");
  // dphi_k/dx_j for every monomial, then contract with the coefficients.
  Matrix dphi = Matrix::Zero(static_cast<Eigen::Index>(exponents.size()), dim);
  for (std::size_t k = 0; k < exponents.size(); ++k) {
    for (int j = 0; j < dim; ++j) {
      const int pj = exponents[k][static_cast<std::size_t>(j)];
      if (pj == 0) continue;
      double v = pj;
      for (int l = 0; l < dim; ++l) {
        const int p = exponents[k][static_cast<std::size_t>(l)] - (l == j ? 1 : 0);
        for (int q = 0; q < p; ++q) v *= x(l);
      }
      dphi(static_cast<Eigen::Index>(k), j) = v;
    }
  }
  return coefficients * dphi;
}

std::string map_kind(const ConjugacyMap& map) {
  switch (map.index()) {
    case 0: return "constant";
    case 1: return "affine";
    case 2: return "sequence";
    case 3: return "piecewise-affine";
    default: return "polynomial";
  }
}

namespace {

struct Apply {
  std::size_t i;
  double t;
  const Vector& x;

  Vector operator()(const Matrix& k) const {
    if (k.cols() != x.size()) throw InvalidArgument("constant map applied to a state of wrong dimension");
    return k * x;
  }
  Vector operator()(const AffineMap& m) const {
    if (m.dim() != x.size()) throw InvalidArgument("affine map applied to a state of wrong dimension");
    return m(x);
  }
  Vector operator()(const MapSequence& s) const {
    const Matrix& k = s.at(i);
    if (k.cols() != x.size()) throw InvalidArgument("map sequence applied to a state of wrong dimension");
    return k * x;
  }
  Vector operator()(const PiecewiseAffineMap& p) const {
    if (p.dim() == x.size() + 1) {
      Vector aug(x.size() + 1);
      aug << x, t;
      return p.apply(t, aug).head(x.size());
    }
    return p.apply(t, x);
  }
  Vector operator()(const PolynomialMap& p) const { return p(x); }
};

struct Jacobian {
  std::size_t i;
  double t;
  const Vector& x;

  Matrix operator()(const Matrix& k) const { return k; }
  Matrix operator()(const AffineMap& m) const { return m.M; }
  Matrix operator()(const MapSequence& s) const { return s.at(i); }
  Matrix operator()(const PiecewiseAffineMap& p) const {
    const Matrix& m = p.jacobian(t);
    if (p.dim() == x.size() + 1) return m.topLeftCorner(x.size(), x.size());
    return m;
  }
  Matrix operator()(const PolynomialMap& p) const { return p.jacobian(x); }
};

}  // namespace

Vector apply_map(const ConjugacyMap& map, std::size_t i, double t, const Vector& x) {
  return std::visit(Apply{i, t, x}, map);
}

Matrix map_jacobian(const ConjugacyMap& map, std::size_t i, double t, const Vector& x) {
  return std::visit(Jacobian{i, t, x}, map);
}

}  // namespace conjlab
