#include "conjlab/geomap.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace conjlab {

Matrix RotationChain::matrix() const {
  Matrix r = Matrix::Identity(dim, dim);
  for (const auto& g : factors) {
    // Left-multiply by the planar factor: only rows plane and plane + 1 change.
    const Eigen::RowVectorXd a = r.row(g.plane);
    const Eigen::RowVectorXd b = r.row(g.plane + 1);
    r.row(g.plane) = g.c * a - g.s * b;
    r.row(g.plane + 1) = g.s * a + g.c * b;
  }
  return r;
}

Vector RotationChain::apply(const Vector& x) const {
  Vector y = x;
  for (const auto& g : factors) {
    const double a = y(g.plane), b = y(g.plane + 1);
    y(g.plane) = g.c * a - g.s * b;
    y(g.plane + 1) = g.s * a + g.c * b;
  }
  return y;
}

RotationChain align_to_axis(const Vector& u) {
  const auto n = static_cast<int>(u.size());
  if (n < 1) throw InvalidArgument("align_to_axis: empty vector");
  if (!u.allFinite() || std::abs(u.norm() - 1.0) > 1e-10) {
    throw InvalidArgument("align_to_axis: input must be a unit vector");
  }
  RotationChain chain;
  chain.dim = n;
  chain.factors.reserve(static_cast<std::size_t>(std::max(n - 1, 0)));
  double carry = u(0);
  for (int k = 0; k + 1 < n; ++k) {
    const double a = carry;
    const double b = u(k + 1);
    const double r = std::hypot(a, b);
    GivensFactor g;
    g.plane = k;
    if (r >= kGivensDegenerate) {
      g.c = b / r;
      g.s = a / r;
      carry = r;
    } else {
      carry = b;
    }
    chain.factors.push_back(g);
  }
  return chain;
}

Matrix rotation_between(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw InvalidArgument("rotation_between: dimension mismatch");
  const Matrix r = align_to_axis(u).matrix();
  const Matrix q = align_to_axis(v).matrix();
  return q.transpose() * r;
}

AffineMap AffineMap::identity(int dim) {
  return AffineMap{Matrix::Identity(dim, dim), Vector::Zero(dim)};
}

bool AffineMap::invertible() const {
  return M.rows() == M.cols() && std::abs(M.determinant()) > 1e-12;
}

AffineMap build_segment_map(const Vector& x_start, const Vector& x_dir,
                            const Vector& y_start, const Vector& y_dir) {
  const auto n = x_start.size();
  if (x_dir.size() != n || y_start.size() != n || y_dir.size() != n) {
    throw InvalidArgument("build_segment_map: dimension mismatch");
  }
  const double nx = x_dir.norm();
  const double ny = y_dir.norm();
  if (!(nx > 0.0) || !(ny > 0.0)) throw InvalidArgument("build_segment_map: zero direction vector");
  AffineMap map;
  map.M = (ny / nx) * rotation_between(x_dir / nx, y_dir / ny);
  map.b = y_start - map.M * x_start;
  return map;
}

AffineMap invert(const AffineMap& map) {
  if (!map.invertible()) throw SingularMatrixError("invert: affine map is singular");
  Eigen::PartialPivLU<Matrix> lu(map.M);
  AffineMap inv;
  inv.M = lu.inverse();
  inv.b = -(inv.M * map.b);
  return inv;
}

PiecewiseAffineMap::PiecewiseAffineMap(std::vector<double> breakpoints, std::vector<AffineMap> maps)
    : breakpoints_(std::move(breakpoints)), maps_(std::move(maps)) {
  if (maps_.empty()) throw InvalidArgument("piecewise map needs at least one interval");
  if (breakpoints_.size() != maps_.size() + 1) {
    throw InvalidArgument("piecewise map needs one more breakpoint than maps");
  }
  for (std::size_t l = 0; l + 1 < breakpoints_.size(); ++l) {
    if (!(breakpoints_[l] < breakpoints_[l + 1])) {
      throw InvalidArgument("piecewise map breakpoints must be strictly increasing");
    }
  }
  const int n = maps_.front().dim();
  for (const auto& m : maps_) {
    if (m.M.rows() != n || m.M.cols() != n || m.b.size() != n) {
      throw InvalidArgument("piecewise map intervals disagree on dimension");
    }
  }
}

PiecewiseAffineMap PiecewiseAffineMap::identity(int dim, double t0, double t1) {
  return PiecewiseAffineMap({t0, t1}, {AffineMap::identity(dim)});
}

std::size_t PiecewiseAffineMap::interval(double t) const {
  if (maps_.empty()) throw InvalidArgument("empty piecewise map");
  if (!(t >= breakpoints_.front() && t <= breakpoints_.back())) {
    throw InvalidArgument("time " + std::to_string(t) + " is outside the map's range");
  }
  // Interior breakpoints belong to the interval on their left.
  const auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t);
  std::size_t l = static_cast<std::size_t>(it - breakpoints_.begin());
  l = l == 0 ? 0 : l - 1;
  return std::min(l, maps_.size() - 1);
}

Vector PiecewiseAffineMap::apply(double t, const Vector& x) const {
  const auto& m = maps_[interval(t)];
  if (x.size() != m.dim()) throw InvalidArgument("piecewise map applied to a state of wrong dimension");
  return m(x);
}

Vector apply(const PiecewiseAffineMap& pmap, double t, const Vector& x) { return pmap.apply(t, x); }

namespace {

void check_polylines(const Trajectory& px, const Trajectory& py) {
  if (px.size() < 2) throw InvalidArgument("polyline needs at least one segment");
  if (px.size() != py.size() || px.dim() != py.dim()) {
    throw InvalidArgument("polylines differ in node count or dimension");
  }
  for (std::size_t k = 0; k < px.size(); ++k) {
    if (px.time(k) != py.time(k)) throw InvalidArgument("polylines have mismatched breakpoints");
  }
}

}  // namespace

PiecewiseAffineMap build_polyline_conjugacy(const Trajectory& px, const Trajectory& py) {
  check_polylines(px, py);
  const std::size_t m = px.steps();
  std::vector<double> taus(m + 1);
  std::vector<AffineMap> maps(m);
  for (std::size_t k = 0; k <= m; ++k) taus[k] = px.time(k);
  for (std::size_t l = 0; l < m; ++l) {
    const Vector xs = px.state(l);
    const Vector ys = py.state(l);
    const Vector xd = px.state(l + 1) - xs;
    const Vector yd = py.state(l + 1) - ys;
    if (xd.norm() == 0.0 || yd.norm() == 0.0) {
      throw NumericalError("degenerate polyline segment " + std::to_string(l));
    }
    maps[l] = build_segment_map(xs, xd, ys, yd);
    if (!maps[l].invertible()) throw NumericalError("segment map " + std::to_string(l) + " is singular");
  }
  return PiecewiseAffineMap(std::move(taus), std::move(maps));
}

double polyline_residual(const PiecewiseAffineMap& pmap, const Trajectory& px,
                         const Trajectory& py, int per_segment) {
  check_polylines(px, py);
  double worst = 0.0;
  for (std::size_t l = 0; l < px.steps(); ++l) {
    for (int q = 0; q <= per_segment; ++q) {
      const double s = static_cast<double>(q) / (per_segment + 1);
      const double t = px.time(l) + s * px.dt();
      const Vector phi = (1.0 - s) * px.state(l) + s * px.state(l + 1);
      const Vector psi = (1.0 - s) * py.state(l) + s * py.state(l + 1);
      // Evaluate with the segment's own map so that s = 0 exercises the left node too.
      const Vector img = pmap.maps()[l](phi);
      worst = std::max(worst, (img - psi).norm());
      if (q == 0) worst = std::max(worst, (pmap.apply(t, phi) - psi).norm());
    }
  }
  const std::size_t last = px.steps();
  worst = std::max(worst, (pmap.apply(px.time(last), px.state(last)) - py.state(last)).norm());
  return worst;
}

std::string to_json(const PiecewiseAffineMap& pmap) {
  nlohmann::json j;
  j["dim"] = pmap.dim();
  j["breakpoints"] = pmap.breakpoints();
  auto& maps = j["maps"] = nlohmann::json::array();
  for (const auto& m : pmap.maps()) {
    std::vector<double> rows;
    rows.reserve(static_cast<std::size_t>(m.M.size()));
    for (Eigen::Index r = 0; r < m.M.rows(); ++r)
      for (Eigen::Index c = 0; c < m.M.cols(); ++c) rows.push_back(m.M(r, c));
    maps.push_back({{"M", rows}, {"b", std::vector<double>(m.b.data(), m.b.data() + m.b.size())}});
  }
  return j.dump();
}

PiecewiseAffineMap piecewise_affine_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("piecewise map json: ") + e.what());
  }
  try {
    const int n = j.at("dim").get<int>();
    auto taus = j.at("breakpoints").get<std::vector<double>>();
    std::vector<AffineMap> maps;
    for (const auto& jm : j.at("maps")) {
      const auto rows = jm.at("M").get<std::vector<double>>();
      const auto b = jm.at("b").get<std::vector<double>>();
      if (rows.size() != static_cast<std::size_t>(n) * n || b.size() != static_cast<std::size_t>(n)) {
        throw InvalidArgument("piecewise map json: interval has wrong size");
      }
      AffineMap m;
      m.M = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(rows.data(), n, n);
      m.b = Eigen::Map<const Vector>(b.data(), n);
      maps.push_back(std::move(m));
    }
    return PiecewiseAffineMap(std::move(taus), std::move(maps));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("piecewise map json: ") + e.what());
  }
}

}  // namespace conjlab
