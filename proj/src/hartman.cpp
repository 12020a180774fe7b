#include "conjlab/hartman.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "conjlab/dynsys.hpp"
#include "conjlab/simdeg.hpp"

namespace conjlab {

HartmanProblem HartmanProblem::from_matrix(const Matrix& A, std::function<Vector(const Vector&)> r,
                                           double r_lip, Matrix grad_r0) {
  if (A.rows() != A.cols() || A.rows() == 0) throw InvalidArgument("hartman: A must be square");
  const auto n = A.rows();
  Eigen::EigenSolver<Matrix> es(A);
  if (es.info() != Eigen::Success) throw NumericalError("hartman: eigendecomposition failed");
  const Eigen::MatrixXcd V = es.eigenvectors();
  const Eigen::VectorXcd lam = es.eigenvalues();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(V);
  const auto& sv = svd.singularValues();
  const double condV = sv(0) / sv(sv.size() - 1);
  if (!std::isfinite(condV) || condV > 1e8) {
    throw NumericalError("hartman: A is too close to defective (eigenvector condition " + std::to_string(condV) + ")");
  }
  Eigen::VectorXcd select(n);
  double eta = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double re = lam(i).real();
    if (std::abs(re) < 1e-12) throw InvalidArgument("hartman: A has an eigenvalue on the imaginary axis");
    select(i) = re < 0.0 ? 1.0 : 0.0;
    eta = std::min(eta, std::abs(re));
  }
  const Eigen::MatrixXcd pc = V * select.asDiagonal() * V.inverse();
  HartmanProblem p;
  p.A = A;
  p.Pplus = pc.real();
  p.Pminus = Matrix::Identity(n, n) - p.Pplus;
  p.M = std::max(1.0, condV);
  p.eta = eta;
  p.r = std::move(r);
  p.r_lip = r_lip;
  p.grad_r0 = grad_r0.size() == 0 ? Matrix::Zero(n, n) : std::move(grad_r0);
  p.validate();
  return p;
}

void HartmanProblem::validate() const {
  const auto n = A.rows();
  if (A.cols() != n || n == 0) throw InvalidArgument("hartman: A must be square");
  if (Pplus.rows() != n || Pplus.cols() != n || Pminus.rows() != n || Pminus.cols() != n) {
    throw InvalidArgument("hartman: projections have the wrong shape");
  }
  const Matrix id = Matrix::Identity(n, n);
  if ((Pplus + Pminus - id).norm() > 1e-9) throw InvalidArgument("hartman: P+ + P- must be the identity");
  if ((Pplus * Pplus - Pplus).norm() > 1e-8 * std::max(1.0, Pplus.norm())) {
    throw InvalidArgument("hartman: P+ is not a projection");
  }
  if (!(M >= 1.0) || !(eta > 0.0)) throw InvalidArgument("hartman: need M >= 1 and eta > 0");
  if (r_lip < 0.0 || r_sup < 0.0) throw InvalidArgument("hartman: r bounds must be nonnegative");
  if (grad_r0.size() != 0 && (grad_r0.rows() != n || grad_r0.cols() != n)) {
    throw InvalidArgument("hartman: grad r(0) must be n x n");
  }
}

Matrix green_kernel(const HartmanProblem& problem, double t) {
  const Matrix e = expm(problem.A * t);
  if (t >= 0.0) return e * problem.Pplus;
  return -(e * problem.Pminus);
}

double contraction_certificate(const HartmanProblem& problem) {
  return 2.0 * problem.M / problem.eta * problem.r_lip;
}

GridFunction::GridFunction(Vector lower, Vector upper, std::vector<int> nodes, int components)
    : lower_(std::move(lower)), upper_(std::move(upper)), nodes_(std::move(nodes)) {
  const auto n = lower_.size();
  if (n < 1 || upper_.size() != n || nodes_.size() != static_cast<std::size_t>(n)) {
    throw InvalidArgument("grid: box and resolution disagree on dimension");
  }
  std::size_t total = 1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lower_(i) < upper_(i))) throw InvalidArgument("grid: empty box");
    if (nodes_[static_cast<std::size_t>(i)] < 2) throw InvalidArgument("grid: need at least two nodes per axis");
    total *= static_cast<std::size_t>(nodes_[static_cast<std::size_t>(i)]);
  }
  if (components < 1) throw InvalidArgument("grid: need at least one component");
  values_ = Matrix::Zero(components, static_cast<Eigen::Index>(total));
}

Vector GridFunction::node(std::size_t k) const {
  const int n = dim();
  Vector x(n);
  for (int a = n - 1; a >= 0; --a) {
    const auto cnt = static_cast<std::size_t>(nodes_[static_cast<std::size_t>(a)]);
    const std::size_t idx = k % cnt;
    k /= cnt;
    x(a) = lower_(a) + (upper_(a) - lower_(a)) * static_cast<double>(idx) / static_cast<double>(cnt - 1);
  }
  return x;
}

bool GridFunction::contains(const Vector& x) const {
  for (int a = 0; a < dim(); ++a)
    if (!(x(a) >= lower_(a) && x(a) <= upper_(a))) return false;
  return true;
}

Vector GridFunction::clamp(const Vector& x) const {
  return x.cwiseMax(lower_).cwiseMin(upper_);
}

Vector GridFunction::operator()(const Vector& x) const {
  const int n = dim();
  if (x.size() != n) throw InvalidArgument("grid function evaluated at a point of wrong dimension");
  std::vector<std::size_t> base(static_cast<std::size_t>(n));
  std::vector<double> frac(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    const int cnt = nodes_[static_cast<std::size_t>(a)];
    const double h = (upper_(a) - lower_(a)) / (cnt - 1);
    const double u = (std::clamp(x(a), lower_(a), upper_(a)) - lower_(a)) / h;
    auto b = static_cast<std::size_t>(std::floor(u));
    b = std::min(b, static_cast<std::size_t>(cnt - 2));
    base[static_cast<std::size_t>(a)] = b;
    frac[static_cast<std::size_t>(a)] = u - static_cast<double>(b);
  }
  Vector out = Vector::Zero(components());
  const std::size_t corners = std::size_t{1} << n;
  for (std::size_t c = 0; c < corners; ++c) {
    double w = 1.0;
    std::size_t flat = 0;
    for (int a = 0; a < n; ++a) {
      const bool hi = (c >> a) & 1u;
      const double f = frac[static_cast<std::size_t>(a)];
      w *= hi ? f : 1.0 - f;
      flat = flat * static_cast<std::size_t>(nodes_[static_cast<std::size_t>(a)]) + base[static_cast<std::size_t>(a)] + (hi ? 1 : 0);
    }
    if (w != 0.0) out += w * values_.col(static_cast<Eigen::Index>(flat));
  }
  return out;
}

std::string GridFunction::to_json() const {
  std::ostringstream out;
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  auto vec = [&](const Vector& v) {
    out << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (i) out << ',';
      num(v(i));
    }
    out << ']';
  };
  out << "{\"lower\":";
  vec(lower_);
  out << ",\"upper\":";
  vec(upper_);
  out << ",\"nodes\":[";
  for (std::size_t i = 0; i < nodes_.size(); ++i) out << (i ? "," : "") << nodes_[i];
  out << "],\"components\":" << components() << ",\"values\":[";
  for (Eigen::Index k = 0; k < values_.cols(); ++k) {
    if (k) out << ',';
    vec(values_.col(k));
  }
  out << "]}";
  return out.str();
}

namespace {

// Quadrature nodes s_q with weights w_q and the matrices G_A(s_q), e^{-A s_q}.
struct Quadrature {
  std::vector<double> weight;
  std::vector<Matrix> kernel;
  std::vector<Matrix> pullback;
};

void add_branch(Quadrature& q, const HartmanProblem& p, double S, double h, bool positive) {
  const auto steps = static_cast<long>(std::ceil(S / h - 1e-9));
  const double step = S / static_cast<double>(steps);
  const Matrix proj = positive ? p.Pplus : p.Pminus;
  const double sign = positive ? 1.0 : -1.0;
  const Matrix e_step = expm(p.A * (sign * step));
  const Matrix e_back = expm(p.A * (-sign * step));
  Matrix e = Matrix::Identity(p.dim(), p.dim());
  Matrix back = e;
  for (long k = 0; k <= steps; ++k) {
    const double w = (k == 0 || k == steps) ? 0.5 * step : step;
    q.weight.push_back(w);
    q.kernel.push_back(positive ? Matrix(e * proj) : Matrix(-(e * proj)));
    q.pullback.push_back(back);
    e = e * e_step;
    back = back * e_back;
  }
}

}  // namespace

FixedPointResult solve_conjugacy_fixed_point(const HartmanProblem& problem, const FixedPointOptions& opts) {
  problem.validate();
  if (!problem.r) throw InvalidArgument("fixed point: perturbation r is missing");
  const double cert = contraction_certificate(problem);
  if (!(cert < 1.0)) throw NumericalError("fixed point: contraction certificate " + std::to_string(cert) + " >= 1");
  if (!(opts.quad_step > 0.0) || !(opts.tol > 0.0) || opts.max_iter < 1) {
    throw InvalidArgument("fixed point: quad_step, tol and max_iter must be positive");
  }
  const int n = problem.dim();
  GridFunction g(opts.lower, opts.upper, opts.nodes, n);

  // sup |r| over the box: use the supplied bound, else sample the grid nodes.
  double r_sup = problem.r_sup;
  if (r_sup == 0.0) {
    for (std::size_t k = 0; k < g.node_count(); ++k) r_sup = std::max(r_sup, problem.r(g.node(k)).norm());
  }
  double S = opts.s_cutoff;
  if (S <= 0.0) {
    S = r_sup > 0.0 ? std::max(opts.quad_step, std::log(10.0 * problem.M * r_sup / opts.tol) / problem.eta) : opts.quad_step;
  }

  Quadrature quad;
  add_branch(quad, problem, S, opts.quad_step, true);
  if (problem.Pminus.norm() > 1e-14) add_branch(quad, problem, S, opts.quad_step, false);

  FixedPointResult res;
  res.s_cutoff = S;
  res.certificate = cert;
  // Tail bound: |G_A(s)| <= M e^{-eta |s|} on both branches.
  res.truncation_bound = 2.0 * problem.M * r_sup * std::exp(-problem.eta * S) / problem.eta;

  const std::size_t nodes = g.node_count();
  std::vector<Vector> coords(nodes);
  for (std::size_t k = 0; k < nodes; ++k) coords[k] = g.node(k);

  unsigned threads = opts.threads == 0 ? worker_threads() : opts.threads;
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, nodes));
  Matrix next(n, static_cast<Eigen::Index>(nodes));
  auto sweep = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k) {
      Vector acc = Vector::Zero(n);
      for (std::size_t q = 0; q < quad.weight.size(); ++q) {
        const Vector z = g.clamp(quad.pullback[q] * coords[k]);
        acc += quad.weight[q] * (quad.kernel[q] * problem.r(z + g(z)));
      }
      next.col(static_cast<Eigen::Index>(k)) = acc;
    }
  };

  double prev_change = 0.0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    if (threads <= 1) {
      sweep(0, nodes);
    } else {
      std::vector<std::thread> pool;
      const std::size_t chunk = (nodes + threads - 1) / threads;
      for (unsigned w = 0; w < threads; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(nodes, lo + chunk);
        if (lo < hi) pool.emplace_back(sweep, lo, hi);
      }
      for (auto& th : pool) th.join();
    }
    if (!next.allFinite()) throw NumericalError("fixed point: iteration produced non-finite values");
    const double change = (next - g.values()).lpNorm<Eigen::Infinity>();
    g.values() = next;
    res.sup_changes.push_back(change);
    if (it > 1 && prev_change > 0.0) res.ratios.push_back(change / prev_change);
    prev_change = change;
    res.iterations = it;
    if (change < opts.tol) {
      res.g = std::move(g);
      return res;
    }
  }
  throw NumericalError("fixed point: no convergence after " + std::to_string(opts.max_iter) + " sweeps");
}

double verify_conjugacy(const HartmanProblem& problem, const GridFunction& g, const Vector& x0,
                        double horizon, double dt) {
  if (!problem.r) throw InvalidArgument("verify_conjugacy: perturbation r is missing");
  if (x0.size() != problem.dim()) throw InvalidArgument("verify_conjugacy: dimension mismatch");
  if (!(horizon > 0.0) || !(dt > 0.0)) throw InvalidArgument("verify_conjugacy: horizon and dt must be positive");
  const auto steps = static_cast<long>(std::llround(horizon / dt));
  auto field = [&](const Vector& y) -> Vector { return problem.A * y + problem.r(y); };
  const Matrix e_step = expm(problem.A * dt);
  Vector lin = x0;
  if (!g.contains(lin)) throw InvalidArgument("verify_conjugacy: x0 is outside the grid box");
  Vector y = x0 + g(x0);
  double worst = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const Vector k1 = field(y);
    const Vector k2 = field(y + 0.5 * dt * k1);
    const Vector k3 = field(y + 0.5 * dt * k2);
    const Vector k4 = field(y + dt * k3);
    y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    lin = e_step * lin;
    if (!g.contains(lin)) throw InvalidArgument("verify_conjugacy: linear orbit left the grid box at step " + std::to_string(k));
    worst = std::max(worst, (lin + g(lin) - y).norm());
  }
  return worst;
}

Matrix controllability_gramian(const HartmanProblem& problem, const Vector& x0, double t, double quad_step) {
  if (!(t > 0.0) || !(quad_step > 0.0)) throw InvalidArgument("gramian: t and quad_step must be positive");
  const int n = problem.dim();
  if (x0.size() != n) throw InvalidArgument("gramian: dimension mismatch");
  const Matrix grad = problem.grad_r0.size() == 0 ? Matrix::Zero(n, n) : problem.grad_r0;
  const auto steps = static_cast<long>(std::ceil(t / quad_step - 1e-9));
  const double h = t / static_cast<double>(steps);
  const Matrix e_step = expm(problem.A * h);
  Vector u = grad * x0;
  Matrix G = 0.5 * h * u * u.transpose();
  for (long k = 1; k <= steps; ++k) {
    u = e_step * u;
    G += (k == steps ? 0.5 * h : h) * u * u.transpose();
  }
  return 0.5 * (G + G.transpose());
}

TerminalMapResult terminal_map(const HartmanProblem& problem, const Vector& x0, const Vector& y0,
                               const Vector& y1, double t1, double tol, int max_iter, double quad_step) {
  const int n = problem.dim();
  if (x0.size() != n || y0.size() != n || y1.size() != n) throw InvalidArgument("terminal_map: dimension mismatch");
  if (!(t1 > 0.0) || !(quad_step > 0.0) || max_iter < 1) throw InvalidArgument("terminal_map: bad t1, step or budget");
  const Matrix grad = problem.grad_r0.size() == 0 ? Matrix::Zero(n, n) : problem.grad_r0;
  const auto steps = static_cast<long>(std::ceil(t1 / quad_step - 1e-9));
  const double h = t1 / static_cast<double>(steps);
  const Matrix e_step = expm(problem.A * h);

  TerminalMapResult res;
  std::vector<Vector> U;
  std::vector<Matrix> G;
  std::vector<Matrix> E;
  U.reserve(static_cast<std::size_t>(steps + 1));
  G.reserve(static_cast<std::size_t>(steps + 1));
  E.reserve(static_cast<std::size_t>(steps + 1));
  Vector u = grad * x0;
  Matrix e = Matrix::Identity(n, n);
  Matrix acc = Matrix::Zero(n, n);
  for (long k = 0; k <= steps; ++k) {
    if (k > 0) {
      const Vector prev = u;
      u = e_step * u;
      e = e * e_step;
      acc += 0.5 * h * (prev * prev.transpose() + u * u.transpose());
    }
    res.times.push_back(k == steps ? t1 : static_cast<double>(k) * h);
    U.push_back(u);
    G.push_back(0.5 * (acc + acc.transpose()));
    E.push_back(e);
  }
  res.gramian = G.back();
  res.gramian_condition = condition_number(res.gramian);
  if (!std::isfinite(res.gramian_condition) || res.gramian_condition > 1e10) {
    throw SingularMatrixError("terminal_map: Gramian is singular (condition " + std::to_string(res.gramian_condition) + ")");
  }
  Eigen::LDLT<Matrix> ldlt(res.gramian);
  const Vector d = expm(-problem.A * t1) * y1 - y0;
  const Vector w = ldlt.solve(d);
  res.K.reserve(U.size());
  for (const auto& uk : U) res.K.push_back(uk.dot(w));

  // P does not depend on its argument in this linearised form, so the loop
  // settles after the second application; it is kept to report the change.
  std::vector<Vector> y(U.size(), y0);
  for (int it = 1; it <= max_iter; ++it) {
    double change = 0.0;
    for (std::size_t k = 0; k < U.size(); ++k) {
      Vector py = E[k] * y0 + E[k] * (G[k] * w);
      if (k == 0) py = y0;
      change = std::max(change, (py - y[k]).lpNorm<Eigen::Infinity>());
      y[k] = std::move(py);
    }
    res.iterations = it;
    if (change < tol && it > 1) break;
    if (it == max_iter && change >= tol) throw NumericalError("terminal_map: iteration budget exhausted");
  }
  res.y = std::move(y);
  res.endpoint_residual = (res.y.back() - y1).norm();
  return res;
}

double decay_factor(double M, double eta, double c1, double c2, double x0_norm, double t1) {
  if (!(eta > 0.0)) throw InvalidArgument("decay_factor: eta must be positive");
  const double k = c1 * c1 * c2 * x0_norm * x0_norm / (2.0 * eta);
  const double e1 = std::exp(-eta * t1);
  const double den = 1.0 - M * M * M * M * k * e1 * e1;
  if (!(den > 0.0)) throw InvalidArgument("decay_factor: denominator is not positive");
  return (M * e1 + M * M * M * k * e1) / den;
}

double example2_closed_form(double A, double B, double C, double D, double x0, double y0, double x) {
  if (A == 0.0 || C == 0.0) throw InvalidArgument("example2: A and C must be nonzero");
  const double shift = B / A;
  if (x0 + shift == 0.0) throw InvalidArgument("example2: x0 + B/A must be nonzero");
  const double base = (x + shift) / (x0 + shift);
  const double expo = C / A;
  if (base <= 0.0 && expo != std::round(expo)) {
    throw InvalidArgument("example2: nonpositive base with non-integer exponent");
  }
  return (D / C + y0) * std::pow(base, expo) - D / C;
}

}  // namespace conjlab
