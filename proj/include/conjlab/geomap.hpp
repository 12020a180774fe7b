#pragma once

#include <string>
#include <vector>

#include "conjlab/dynsys.hpp"
#include "conjlab/types.hpp"

namespace conjlab {

/// Planar rotation acting on coordinates (plane, plane + 1) as [[c, -s], [s, c]].
struct GivensFactor {
  int plane = 0;
  double c = 1.0;
  double s = 0.0;
};

/// Ordered product R = G_{n-1} ... G_1 of planar rotations.
struct RotationChain {
  int dim = 0;
  std::vector<GivensFactor> factors;

  Matrix matrix() const;
  Vector apply(const Vector& x) const;
};

/// Sub-norms below this make a Givens factor the identity.
inline constexpr double kGivensDegenerate = 1e-14;

/// Rotation chain sending the unit vector u onto the last basis vector e_n.
RotationChain align_to_axis(const Vector& u);

/// Orthogonal P = Q^T R with R u = e_n and Q v = e_n, so that P u = v.
Matrix rotation_between(const Vector& u, const Vector& v);

/// x -> M x + b.
struct AffineMap {
  Matrix M;
  Vector b;

  static AffineMap identity(int dim);
  int dim() const { return static_cast<int>(M.rows()); }
  Vector operator()(const Vector& x) const { return M * x + b; }
  bool invertible() const;
};

/// Scale-rotation-translation sending the ray x_start + s x_dir onto y_start + s y_dir.
AffineMap build_segment_map(const Vector& x_start, const Vector& x_dir,
                            const Vector& y_start, const Vector& y_dir);

AffineMap invert(const AffineMap& map);

/// K(t): maps[l] is active on (tau_l, tau_{l+1}]; maps[0] also owns tau_0.
class PiecewiseAffineMap {
 public:
  PiecewiseAffineMap() = default;
  PiecewiseAffineMap(std::vector<double> breakpoints, std::vector<AffineMap> maps);

  static PiecewiseAffineMap identity(int dim, double t0, double t1);

  int dim() const { return maps_.empty() ? 0 : maps_.front().dim(); }
  std::size_t segments() const { return maps_.size(); }
  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<AffineMap>& maps() const { return maps_; }

  /// Index of the map active at t. Throws when t is outside [tau_0, tau_m].
  std::size_t interval(double t) const;
  Vector apply(double t, const Vector& x) const;
  const Matrix& jacobian(double t) const { return maps_[interval(t)].M; }

 private:
  std::vector<double> breakpoints_;
  std::vector<AffineMap> maps_;
};

Vector apply(const PiecewiseAffineMap& pmap, double t, const Vector& x);

/// Segment-by-segment conjugacy between two polylines sharing breakpoints.
PiecewiseAffineMap build_polyline_conjugacy(const Trajectory& px, const Trajectory& py);

/// max over nodes and `per_segment` interior points of |K(t) phi(t) - psi(t)|.
double polyline_residual(const PiecewiseAffineMap& pmap, const Trajectory& px,
                         const Trajectory& py, int per_segment = 3);

std::string to_json(const PiecewiseAffineMap& pmap);
PiecewiseAffineMap piecewise_affine_from_json(const std::string& text);

}  // namespace conjlab
