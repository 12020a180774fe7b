#include "conjlab/dynsys.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

namespace conjlab {

double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return smax / smin;
}

std::string to_string(SystemKind kind) {
  switch (kind) {
    case SystemKind::lorenz: return "lorenz";
    case SystemKind::chua: return "chua";
    case SystemKind::chen: return "chen";
    case SystemKind::linear_affine: return "linear-affine";
    case SystemKind::custom: return "custom";
  }
  return "custom";
}

SystemKind system_kind_from_string(const std::string& name) {
  if (name == "lorenz") return SystemKind::lorenz;
  if (name == "chua") return SystemKind::chua;
  if (name == "chen") return SystemKind::chen;
  if (name == "linear-affine" || name == "linear_affine") return SystemKind::linear_affine;
  if (name == "custom") return SystemKind::custom;
  throw InvalidArgument("unknown system kind '" + name + "'");
}

SystemSpec SystemSpec::lorenz(std::string name, double sigma, double rho, double beta) {
  SystemSpec s;
  s.name = std::move(name);
  s.dim = 3;
  s.kind = SystemKind::lorenz;
  s.params = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
  return s;
}

SystemSpec SystemSpec::chua(std::string name, double alpha, double beta, double m0, double m1) {
  SystemSpec s;
  s.name = std::move(name);
  s.dim = 3;
  s.kind = SystemKind::chua;
  s.params = {{"alpha", alpha}, {"beta", beta}, {"m0", m0}, {"m1", m1}};
  return s;
}

SystemSpec SystemSpec::chen(std::string name, double a, double b, double c) {
  SystemSpec s;
  s.name = std::move(name);
  s.dim = 3;
  s.kind = SystemKind::chen;
  s.params = {{"a", a}, {"b", b}, {"c", c}};
  return s;
}

SystemSpec SystemSpec::linear_affine(std::string name, Matrix A, Vector B) {
  SystemSpec s;
  s.name = std::move(name);
  s.dim = static_cast<int>(A.rows());
  s.kind = SystemKind::linear_affine;
  s.A = std::move(A);
  s.B = std::move(B);
  s.validate();
  return s;
}

SystemSpec SystemSpec::make_custom(std::string name, int dim,
                                   std::function<Vector(double, const Vector&)> field,
                                   std::function<Matrix(double, const Vector&)> jacobian) {
  SystemSpec s;
  s.name = std::move(name);
  s.dim = dim;
  s.kind = SystemKind::custom;
  s.custom = std::make_shared<CustomField>(CustomField{std::move(field), std::move(jacobian)});
  s.validate();
  return s;
}

double SystemSpec::param(const std::string& key) const {
  auto it = params.find(key);
  if (it == params.end()) {
    throw InvalidArgument("system '" + name + "' is missing parameter '" + key + "'");
  }
  return it->second;
}

void SystemSpec::validate() const {
  if (dim < 1) throw InvalidArgument("system '" + name + "': dim must be >= 1");
  switch (kind) {
    case SystemKind::lorenz:
    case SystemKind::chua:
    case SystemKind::chen:
      if (dim != 3) throw InvalidArgument("system '" + name + "': " + to_string(kind) + " has dim 3");
      for (const auto& [key, value] : params) {
        if (!std::isfinite(value)) throw InvalidArgument("system '" + name + "': parameter '" + key + "' is not finite");
      }
      break;
    case SystemKind::linear_affine:
      if (A.rows() != dim || A.cols() != dim) throw InvalidArgument("system '" + name + "': A must be dim x dim");
      if (B.size() != dim) throw InvalidArgument("system '" + name + "': B must have length dim");
      if (!A.allFinite() || !B.allFinite()) throw InvalidArgument("system '" + name + "': A and B must be finite");
      break;
    case SystemKind::custom:
      if (!custom || !custom->field) throw InvalidArgument("system '" + name + "': custom kind needs a field callback");
      break;
  }
}

namespace {

void check_dim(const SystemSpec& spec, const Vector& x) {
  if (x.size() != spec.dim) {
    throw InvalidArgument("system '" + spec.name + "' has dim " + std::to_string(spec.dim) +
                          ", state has length " + std::to_string(x.size()));
  }
}

double chua_diode(double y1, double m0, double m1) {
  return m1 * y1 + 0.5 * (m0 - m1) * (std::abs(y1 + 1.0) - std::abs(y1 - 1.0));
}

}  // namespace

Vector eval_field(const SystemSpec& spec, double t, const Vector& x) {
  check_dim(spec, x);
  Vector dx(spec.dim);
  switch (spec.kind) {
    case SystemKind::lorenz: {
      const double sigma = spec.param("sigma"), rho = spec.param("rho"), beta = spec.param("beta");
      dx << sigma * (x(1) - x(0)), rho * x(0) - x(1) - x(0) * x(2), x(0) * x(1) - beta * x(2);
      break;
    }
    case SystemKind::chua: {
      const double alpha = spec.param("alpha"), beta = spec.param("beta");
      const double fy = chua_diode(x(0), spec.param("m0"), spec.param("m1"));
      dx << alpha * (x(1) - x(0) - fy), x(0) - x(1) + x(2), -beta * x(1);
      break;
    }
    case SystemKind::chen: {
      const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c");
      dx << a * (x(1) - x(0)), (c - a) * x(0) + c * x(1) - x(0) * x(2), x(0) * x(1) - b * x(2);
      break;
    }
    case SystemKind::linear_affine:
      dx.noalias() = spec.A * x + spec.B;
      break;
    case SystemKind::custom:
      if (!spec.custom || !spec.custom->field) throw InvalidArgument("custom system without field");
      dx = spec.custom->field(t, x);
      if (dx.size() != spec.dim) throw InvalidArgument("custom field returned wrong dimension");
      break;
  }
  return dx;
}

Matrix eval_jacobian(const SystemSpec& spec, double t, const Vector& x) {
  check_dim(spec, x);
  Matrix j(spec.dim, spec.dim);
  switch (spec.kind) {
    case SystemKind::lorenz: {
      const double sigma = spec.param("sigma"), rho = spec.param("rho"), beta = spec.param("beta");
      j << -sigma, sigma, 0.0,
           rho - x(2), -1.0, -x(0),
           x(1), x(0), -beta;
      break;
    }
    case SystemKind::chua: {
      const double alpha = spec.param("alpha"), beta = spec.param("beta");
      // Slope of the piecewise-linear diode; the inner segment owns |y1| < 1.
      const double slope = std::abs(x(0)) < 1.0 ? spec.param("m0") : spec.param("m1");
      j << -alpha * (1.0 + slope), alpha, 0.0,
           1.0, -1.0, 1.0,
           0.0, -beta, 0.0;
      break;
    }
    case SystemKind::chen: {
      const double a = spec.param("a"), b = spec.param("b"), c = spec.param("c");
      j << -a, a, 0.0,
           (c - a) - x(2), c, -x(0),
           x(1), x(0), -b;
      break;
    }
    case SystemKind::linear_affine:
      j = spec.A;
      break;
    case SystemKind::custom:
      if (!spec.custom || !spec.custom->jacobian) {
        throw InvalidArgument("system '" + spec.name + "' has no Jacobian callback");
      }
      j = spec.custom->jacobian(t, x);
      if (j.rows() != spec.dim || j.cols() != spec.dim) throw InvalidArgument("custom Jacobian has wrong shape");
      break;
  }
  return j;
}

Trajectory::Trajectory(double t0, double dt, Matrix states, std::shared_ptr<const SystemSpec> system)
    : t0_(t0), dt_(dt), states_(std::move(states)), system_(std::move(system)) {
  if (!(dt_ > 0.0) || !std::isfinite(dt_)) throw InvalidArgument("trajectory dt must be positive and finite");
  if (!std::isfinite(t0_)) throw InvalidArgument("trajectory t0 must be finite");
}

namespace {

void check_state(const Vector& x, std::size_t step, const std::string& name) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i)) || std::abs(x(i)) > kBlowUpThreshold) {
      throw BlowUpError("trajectory of '" + name + "' diverged at step " + std::to_string(step), step);
    }
  }
}

std::size_t step_count(double horizon, double dt) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be positive and finite");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive and finite");
  const double n = std::round(horizon / dt);
  if (n < 1.0 || n > 1e9) throw InvalidArgument("horizon/dt gives an unusable step count");
  return static_cast<std::size_t>(n);
}

}  // namespace

Trajectory integrate(const SystemSpec& spec, const State& x0, double t0, double horizon,
                     const IntegratorConfig& cfg) {
  spec.validate();
  check_dim(spec, x0);
  const std::size_t n_steps = step_count(horizon, cfg.dt);
  const double h = cfg.dt;
  Matrix states(spec.dim, static_cast<Eigen::Index>(n_steps + 1));
  Vector x = x0;
  check_state(x, 0, spec.name);
  states.col(0) = x;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t = t0 + static_cast<double>(k) * h;
    if (cfg.method == Method::rk4) {
      const Vector k1 = eval_field(spec, t, x);
      const Vector k2 = eval_field(spec, t + 0.5 * h, x + 0.5 * h * k1);
      const Vector k3 = eval_field(spec, t + 0.5 * h, x + 0.5 * h * k2);
      const Vector k4 = eval_field(spec, t + h, x + h * k3);
      x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    } else {
      x += h * eval_field(spec, t, x);
    }
    check_state(x, k + 1, spec.name);
    states.col(static_cast<Eigen::Index>(k + 1)) = x;
  }
  return Trajectory(t0, h, std::move(states), std::make_shared<const SystemSpec>(spec));
}

Trajectory euler_polyline(const SystemSpec& spec, const State& x0, double horizon, int m) {
  if (m < 1) throw InvalidArgument("euler_polyline needs m >= 1");
  if (!(horizon > 0.0)) throw InvalidArgument("horizon must be positive");
  spec.validate();
  check_dim(spec, x0);
  const double h = horizon / m;
  Matrix nodes(spec.dim, m + 1);
  Vector xi = x0;
  check_state(xi, 0, spec.name);
  nodes.col(0) = xi;
  for (int k = 0; k < m; ++k) {
    xi += h * eval_field(spec, k * h, xi);
    check_state(xi, static_cast<std::size_t>(k + 1), spec.name);
    nodes.col(k + 1) = xi;
  }
  return Trajectory(0.0, h, std::move(nodes), std::make_shared<const SystemSpec>(spec));
}

Trajectory augment_time(const Trajectory& traj) {
  Matrix aug(traj.dim() + 1, static_cast<Eigen::Index>(traj.size()));
  aug.topRows(traj.dim()) = traj.states();
  for (std::size_t k = 0; k < traj.size(); ++k) aug(traj.dim(), static_cast<Eigen::Index>(k)) = traj.time(k);
  return Trajectory(traj.t0(), traj.dt(), std::move(aug));
}

Matrix expm(const Matrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("expm needs a square matrix");
  if (a.size() == 0) return a;
  return a.exp();
}

State linear_solution(const Matrix& A, const Vector& B, const State& x0, double t) {
  const auto n = A.rows();
  if (A.cols() != n || B.size() != n || x0.size() != n) {
    throw InvalidArgument("linear_solution: dimension mismatch");
  }
  Matrix aug = Matrix::Zero(n + 1, n + 1);
  aug.topLeftCorner(n, n) = A * t;
  aug.topRightCorner(n, 1) = B * t;
  const Matrix e = expm(aug);
  // e = [[exp(At), int_0^t exp(As) ds B], [0, 1]]
  return e.topLeftCorner(n, n) * x0 + e.topRightCorner(n, 1);
}

Vector hermite_midpoint(const Trajectory& traj, const SystemSpec& spec, std::size_t k) {
  const Vector x0 = traj.state(k);
  const Vector x1 = traj.state(k + 1);
  const Vector f0 = eval_field(spec, traj.time(k), x0);
  const Vector f1 = eval_field(spec, traj.time(k + 1), x1);
  return 0.5 * (x0 + x1) + (traj.dt() / 8.0) * (f0 - f1);
}

namespace {

void put_double(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

std::vector<double> split_doubles(const std::string& line, std::size_t row) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(',', start);
    if (end == std::string::npos) end = line.size();
    const std::string field = line.substr(start, end - start);
    char* stop = nullptr;
    const double v = std::strtod(field.c_str(), &stop);
    if (field.empty() || stop == field.c_str() || *stop != '\0') {
      throw InvalidArgument("csv row " + std::to_string(row) + ": bad number '" + field + "'");
    }
    values.push_back(v);
    start = end + 1;
  }
  return values;
}

bool reproduces(double t0, double dt, const std::vector<double>& times) {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (t0 + static_cast<double>(k) * dt != times[k]) return false;
  }
  return true;
}

}  // namespace

void write_csv(std::ostream& out, const Trajectory& traj) {
  out << 't';
  for (int i = 1; i <= traj.dim(); ++i) out << ",x" << i;
  out << '\n';
  for (std::size_t k = 0; k < traj.size(); ++k) {
    put_double(out, traj.time(k));
    for (int i = 0; i < traj.dim(); ++i) {
      out << ',';
      put_double(out, traj.states()(i, static_cast<Eigen::Index>(k)));
    }
    out << '\n';
  }
}

Trajectory read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  int dim = 0;
  {
    std::stringstream hs(line);
    std::string col;
    std::getline(hs, col, ',');
    if (col != "t") throw InvalidArgument("csv: header must start with 't'");
    while (std::getline(hs, col, ',')) {
      ++dim;
      if (col != "x" + std::to_string(dim)) throw InvalidArgument("csv: unexpected header column '" + col + "'");
    }
  }
  if (dim < 1) throw InvalidArgument("csv: no state columns");
  std::vector<double> times;
  std::vector<double> flat;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    auto values = split_doubles(line, row);
    if (values.size() != static_cast<std::size_t>(dim) + 1) {
      throw InvalidArgument("csv row " + std::to_string(row) + ": expected " + std::to_string(dim + 1) + " columns");
    }
    times.push_back(values[0]);
    flat.insert(flat.end(), values.begin() + 1, values.end());
  }
  if (times.size() < 2) throw InvalidArgument("csv: need at least two samples");
  const double t0 = times.front();
  const double n = static_cast<double>(times.size() - 1);
  // Recover the dt that regenerates every written time stamp exactly.
  std::vector<double> candidates{times[1] - t0, (times.back() - t0) / n};
  double dt = candidates[1];
  bool exact = false;
  for (double base : candidates) {
    double lo = base, hi = base;
    for (int step = 0; step <= 4 && !exact; ++step) {
      for (double c : {lo, hi}) {
        if (c > 0.0 && reproduces(t0, c, times)) {
          dt = c;
          exact = true;
          break;
        }
      }
      lo = std::nextafter(lo, 0.0);
      hi = std::nextafter(hi, std::numeric_limits<double>::infinity());
    }
    if (exact) break;
  }
  if (!exact) {
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double expected = t0 + static_cast<double>(k) * dt;
      if (std::abs(expected - times[k]) > 1e-9 * std::max(1.0, std::abs(times[k]))) {
        throw InvalidArgument("csv: samples are not uniformly spaced");
      }
    }
  }
  Matrix states = Eigen::Map<const Matrix>(flat.data(), dim, static_cast<Eigen::Index>(times.size()));
  return Trajectory(t0, dt, std::move(states));
}

namespace presets {

SystemSpec lorenz1() { return SystemSpec::lorenz("lorenz1", 10.0, 28.0, 8.0 / 3.0); }
SystemSpec lorenz2() { return SystemSpec::lorenz("lorenz2", 10.0, 28.0, 3.0); }
SystemSpec chua() { return SystemSpec::chua("chua", 10.0, 15.0, -1.2, -0.6); }
SystemSpec chen() { return SystemSpec::chen("chen", 35.0, 3.0, 28.0); }
State lorenz_x0() { return (State(3) << 0.0, 1.0, 0.0).finished(); }
State chua_y0() { return (State(3) << 0.1, 0.3, -0.6).finished(); }
State chen_z0() { return (State(3) << 0.0, 1.0, 0.0).finished(); }

}  // namespace presets

}  // namespace conjlab
