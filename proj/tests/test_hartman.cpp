#include <cmath>
#include <random>

#include "conjlab/hartman.hpp"
#include "conjlab/dynsys.hpp"
#include "doctest.h"

using namespace conjlab;

namespace {

Matrix scalar(double a) { return Matrix::Constant(1, 1, a); }
Vector vec1(double a) { return Vector::Constant(1, a); }

HartmanProblem sine_problem() {
  auto p = HartmanProblem::from_matrix(scalar(-1.0), [](const Vector& y) -> Vector { return 0.1 * y.array().sin().matrix(); }, 0.1,
                                       scalar(0.1));
  p.r_sup = 0.1;
  return p;
}

FixedPointOptions sine_options() {
  FixedPointOptions o;
  // h(x) = x + g(x) behaves like |x|^0.9 at the origin, so the grid has to be fine there.
  o.lower = vec1(-0.6);
  o.upper = vec1(0.6);
  o.nodes = {2401};
  o.quad_step = 0.01;
  o.tol = 1e-9;
  return o;
}

}  // namespace

TEST_CASE("dichotomy from eigen-split") {
  Matrix A(2, 2);
  A << -1.0, 2.0, 0.0, 3.0;
  const auto p = HartmanProblem::from_matrix(A);
  CHECK((p.Pplus + p.Pminus - Matrix::Identity(2, 2)).norm() < 1e-14);
  CHECK((p.Pplus * p.Pplus - p.Pplus).norm() < 1e-12);
  CHECK(p.eta == doctest::Approx(1.0));
  CHECK(p.M >= 1.0);
  // |e^{At} P+ x| <= M e^{-eta t} |P+ x| on samples.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = Vector::NullaryExpr(2, [&] { return normal(rng); });
    const double t = 0.25 * trial;
    CHECK((expm(A * t) * p.Pplus * x).norm() <= p.M * std::exp(-p.eta * t) * (p.Pplus * x).norm() * (1 + 1e-12) + 1e-14);
  }
  Matrix center(2, 2);
  center << 0.0, 1.0, -1.0, 0.0;
  CHECK_THROWS_AS(HartmanProblem::from_matrix(center), InvalidArgument);
  Matrix jordan(2, 2);
  jordan << -1.0, 1.0, 0.0, -1.0;
  CHECK_THROWS_AS(HartmanProblem::from_matrix(jordan), NumericalError);
}

TEST_CASE("green kernel") {
  const auto p = HartmanProblem::from_matrix(scalar(-1.0));
  CHECK(green_kernel(p, 1.0)(0, 0) == doctest::Approx(std::exp(-1.0)));
  CHECK(green_kernel(p, -1.0)(0, 0) == 0.0);
  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = -1.0;
  D(1, 1) = 1.0;
  const auto q = HartmanProblem::from_matrix(D);
  const Matrix g = green_kernel(q, -1.0);
  CHECK(std::abs(g(0, 0)) < 1e-15);
  CHECK(g(1, 1) == doctest::Approx(-std::exp(-1.0)));
  // Both branches together rebuild e^{At}.
  for (double t : {0.3, 1.1, 2.0}) {
    const Matrix sum = expm(D * t) * q.Pplus + expm(D * t) * q.Pminus;
    CHECK((green_kernel(q, t) - green_kernel(q, -t).cwiseProduct(Matrix::Zero(2, 2)) - expm(D * t) * q.Pplus).norm() < 1e-14);
    CHECK((sum - expm(D * t)).norm() < 1e-12);
    CHECK((green_kernel(q, -t) + expm(D * -t) * q.Pminus).norm() < 1e-14);
  }
}

TEST_CASE("contraction certificate") {
  auto p = HartmanProblem::from_matrix(scalar(-1.0));
  p.r_lip = 0.4;
  CHECK(contraction_certificate(p) == doctest::Approx(0.8));
  p.r_lip = 0.6;
  CHECK(contraction_certificate(p) == doctest::Approx(1.2));
  p.M = 2.0;
  p.eta = 4.0;
  p.r_lip = 0.5;
  CHECK(contraction_certificate(p) == doctest::Approx(0.5));
}

TEST_CASE("grid function interpolation") {
  Vector lo(2), hi(2);
  lo << 0.0, -1.0;
  hi << 2.0, 1.0;
  GridFunction g(lo, hi, {3, 5}, 1);
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    const Vector x = g.node(k);
    g.values()(0, static_cast<Eigen::Index>(k)) = 1.0 + 2.0 * x(0) - 3.0 * x(1) + x(0) * x(1);
  }
  CHECK(g.node(0) == lo);
  CHECK(g.node(g.node_count() - 1) == hi);
  CHECK(g.node(1)(1) == doctest::Approx(-0.5));
  // Bilinear functions are reproduced exactly.
  for (double a : {0.1, 0.77, 1.5}) {
    for (double b : {-0.9, 0.2, 0.61}) {
      const Vector x = (Vector(2) << a, b).finished();
      CHECK(g(x)(0) == doctest::Approx(1.0 + 2.0 * a - 3.0 * b + a * b).epsilon(1e-13));
    }
  }
  const Vector out = (Vector(2) << 5.0, -4.0).finished();
  CHECK_FALSE(g.contains(out));
  CHECK(g(out)(0) == doctest::Approx(g(g.clamp(out))(0)));
  CHECK(g.to_json().find("\"nodes\":[3,5]") != std::string::npos);
  CHECK_THROWS_AS(GridFunction(lo, hi, {1, 5}, 1), InvalidArgument);
}

TEST_CASE("zero perturbation") {
  Matrix A(2, 2);
  A << -1.0, 0.0, 0.0, 2.0;
  auto p = HartmanProblem::from_matrix(A, [](const Vector& y) -> Vector { return Vector::Zero(y.size()); });
  FixedPointOptions o;
  o.lower = Vector::Constant(2, -1.0);
  o.upper = Vector::Constant(2, 1.0);
  o.nodes = {5, 5};
  const auto res = solve_conjugacy_fixed_point(p, o);
  CHECK(res.iterations == 1);
  CHECK(res.g.values().norm() == 0.0);
  const Vector x0 = (Vector(2) << 0.5, 0.0).finished();
  CHECK(verify_conjugacy(p, res.g, x0, 2.0, 0.01) < 1e-9);
}

TEST_CASE("uncertified problems are refused") {
  auto p = sine_problem();
  p.r_lip = 0.6;
  CHECK_THROWS_AS(solve_conjugacy_fixed_point(p, sine_options()), NumericalError);
}

TEST_CASE("sine perturbation fixed point") {
  const auto p = sine_problem();
  CHECK(contraction_certificate(p) == doctest::Approx(0.2));
  const auto res = solve_conjugacy_fixed_point(p, sine_options());
  CHECK(res.iterations < 30);
  for (double r : res.ratios) CHECK(r <= contraction_certificate(p) + 0.05);
  CHECK(res.truncation_bound < 1e-9);
  for (double x0 : {-0.5, -0.2, -0.01, 0.0, 0.003, 0.3, 0.5}) CHECK(verify_conjugacy(p, res.g, vec1(x0), 5.0, 0.001) < 1e-4);

  // Deliberately wrong g.
  GridFunction wrong = res.g;
  wrong.values().setConstant(0.1);
  CHECK(verify_conjugacy(p, wrong, vec1(0.5), 5.0, 0.001) > 1e-2);
  CHECK_THROWS_AS(verify_conjugacy(p, res.g, vec1(1.0), 1.0, 0.01), InvalidArgument);
}

TEST_CASE("fixed point sweeps do not depend on thread count") {
  auto o = sine_options();
  o.nodes = {101};
  o.quad_step = 0.02;
  o.threads = 1;
  const auto a = solve_conjugacy_fixed_point(sine_problem(), o);
  o.threads = 4;
  const auto b = solve_conjugacy_fixed_point(sine_problem(), o);
  CHECK(a.g.values() == b.g.values());
  CHECK(a.sup_changes == b.sup_changes);
}

TEST_CASE("controllability gramian") {
  auto zero = HartmanProblem::from_matrix(scalar(-1.0), {}, 0.0, scalar(0.0));
  CHECK(controllability_gramian(zero, vec1(1.0), 2.0).norm() == 0.0);
  // Use a tiny negative A for the "A = 0" case; the dichotomy needs hyperbolicity.
  HartmanProblem flat = zero;
  flat.A = scalar(0.0);
  flat.grad_r0 = scalar(1.0);
  CHECK(controllability_gramian(flat, vec1(1.0), 3.0)(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
  auto decay = HartmanProblem::from_matrix(scalar(-1.0), {}, 0.0, scalar(1.0));
  for (double t : {0.5, 1.0, 4.0}) {
    CHECK(std::abs(controllability_gramian(decay, vec1(1.0), t)(0, 0) - (1 - std::exp(-2 * t)) / 2) < 1e-6);
  }
  Matrix A(3, 3);
  A << -1.0, 0.5, 0.0, 0.2, -2.0, 0.1, 0.0, 0.3, 1.5;
  auto p = HartmanProblem::from_matrix(A, {}, 0.0, Matrix::Random(3, 3));
  const Matrix G = controllability_gramian(p, Vector::Ones(3), 2.0);
  CHECK((G - G.transpose()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Matrix> es(G);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("terminal map") {
  const auto p = HartmanProblem::from_matrix(scalar(-1.0), {}, 0.0, scalar(1.0));
  const auto res = terminal_map(p, vec1(1.0), vec1(1.0), vec1(0.2), 1.0);
  CHECK(res.y.front()(0) == 1.0);
  CHECK(res.endpoint_residual < 1e-8);
  CHECK(std::abs(res.gramian(0, 0) - (1 - std::exp(-2.0)) / 2) < 1e-6);

  // Free-flow endpoint: K is zero and y is e^{At} y0.
  const auto free = terminal_map(p, vec1(1.0), vec1(1.0), vec1(std::exp(-1.0)), 1.0);
  for (double k : free.K) CHECK(std::abs(k) < 1e-12);
  for (std::size_t i = 0; i < free.times.size(); i += 100) {
    CHECK(free.y[i](0) == doctest::Approx(std::exp(-free.times[i])).epsilon(1e-12));
  }

  // Decay certificate: the free-flow endpoint sits below q(t1) |y0|.
  for (double t1 : {2.0, 4.0, 8.0}) {
    const double q = decay_factor(p.M, p.eta, 1.0, 1.0, 1.0, t1);
    REQUIRE(q < 1.0);
    const auto r = terminal_map(p, vec1(1.0), vec1(1.0), vec1(std::exp(-t1)), t1);
    CHECK(std::abs(r.y.back()(0)) <= q * 1.0);
  }

  // Singular Gramian in two dimensions (rank one).
  Matrix A = Matrix::Identity(2, 2) * -1.0;
  const auto s = HartmanProblem::from_matrix(A, {}, 0.0, Matrix::Identity(2, 2));
  CHECK_THROWS_AS(terminal_map(s, Vector::Ones(2), Vector::Ones(2), Vector::Zero(2), 1.0), SingularMatrixError);
}

TEST_CASE("decay factor") {
  CHECK(decay_factor(2.0, 0.5, 0.0, 3.0, 1.0, 2.0) == doctest::Approx(2.0 * std::exp(-1.0)));
  const double e1 = std::exp(-1.0);
  CHECK(decay_factor(1.0, 1.0, 1.0, 1.0, 1.0, 1.0) == doctest::Approx((e1 + e1 / 2) / (1 - e1 * e1 / 2)));
  double prev = decay_factor(1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
  bool crossed = prev < 1.0;
  for (double t = 1.1; t <= 10.0; t += 0.1) {
    const double q = decay_factor(1.0, 1.0, 1.0, 1.0, 1.0, t);
    CHECK(q > 0.0);
    if (crossed) CHECK(q < prev);
    crossed = crossed || q < 1.0;
    prev = q;
  }
  CHECK(crossed);
  CHECK_THROWS_AS(decay_factor(2.0, 0.1, 1.0, 1.0, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("example 2 closed form") {
  CHECK(example2_closed_form(1.5, 0.3, 1.5, 0.3, 0.7, 2.0, 0.7) == doctest::Approx(2.0));
  CHECK(example2_closed_form(1.0, 0.0, 2.0, 0.0, 1.0, 1.0, std::exp(1.0)) == doctest::Approx(std::exp(2.0)));
  CHECK_THROWS_AS(example2_closed_form(1.0, 0.0, 0.5, 0.0, 1.0, 1.0, -1.0), InvalidArgument);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double A = u(rng) < 0 ? -0.5 - std::abs(u(rng)) : 0.5 + std::abs(u(rng));
    const double C = 0.3 + std::abs(u(rng));
    const double B = u(rng), D = u(rng);
    const double x0 = 1.0 + std::abs(u(rng)), y0 = u(rng);
    // Keep x + B/A on one side of zero.
    if ((x0 + B / A) <= 0.0) continue;
    const auto xs = SystemSpec::linear_affine("x", scalar(A), vec1(B));
    const auto ys = SystemSpec::linear_affine("y", scalar(C), vec1(D));
    const auto X = integrate(xs, vec1(x0), 0.0, 1.0, {Method::rk4, 0.001});
    const auto Y = integrate(ys, vec1(y0), 0.0, 1.0, {Method::rk4, 0.001});
    for (std::size_t k = 0; k < X.size(); k += 50) {
      const double K = example2_closed_form(A, B, C, D, x0, y0, X.state(k)(0));
      CHECK(K == doctest::Approx(Y.state(k)(0)).epsilon(1e-9));
    }
  }
}
