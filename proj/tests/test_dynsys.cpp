#include <cmath>
#include <sstream>

#include "conjlab/dynsys.hpp"
#include "doctest.h"

using namespace conjlab;

namespace {

SystemSpec scalar_linear(double a, double b = 0.0) {
  return SystemSpec::linear_affine("lin", Matrix::Constant(1, 1, a), Vector::Constant(1, b));
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double rk4_error(double dt) {
  const auto traj = integrate(scalar_linear(-1.0), vec({1.0}), 0.0, 1.0, {Method::rk4, dt});
  return std::abs(traj.back()(0) - std::exp(-1.0));
}

double euler_error(int m) {
  const auto poly = euler_polyline(scalar_linear(-1.0), vec({1.0}), 1.0, m);
  return std::abs(poly.back()(0) - std::exp(-1.0));
}

}  // namespace

TEST_CASE("fields evaluate by hand") {
  const Vector x = vec({0.0, 1.0, 0.0});
  const Vector fl = eval_field(presets::lorenz1(), 0.0, x);
  CHECK(fl(0) == 10.0);
  CHECK(fl(1) == -1.0);
  CHECK(fl(2) == 0.0);
  const Vector fc = eval_field(presets::chen(), 0.0, x);
  CHECK(fc(0) == 35.0);
  CHECK(fc(1) == 28.0);
  CHECK(fc(2) == 0.0);
  const auto zero = SystemSpec::linear_affine("zero", Matrix::Zero(2, 2), Vector::Zero(2));
  CHECK(eval_field(zero, 3.0, vec({4.0, -5.0})).norm() == 0.0);
}

TEST_CASE("chua field uses the double-scroll diode") {
  const auto chua = presets::chua();
  // Inside |y1| < 1 the diode is m0 * y1; outside it is m1 * y1 + (m0 - m1) sign(y1).
  const Vector inner = eval_field(chua, 0.0, vec({0.5, 0.0, 0.0}));
  CHECK(inner(0) == doctest::Approx(10.0 * (0.0 - 0.5 - (-1.2 * 0.5))));
  const Vector outer = eval_field(chua, 0.0, vec({2.0, 1.0, -1.0}));
  const double diode = -0.6 * 2.0 + (-1.2 + 0.6);
  CHECK(outer(0) == doctest::Approx(10.0 * (1.0 - 2.0 - diode)));
  CHECK(outer(1) == doctest::Approx(2.0 - 1.0 - 1.0));
  CHECK(outer(2) == doctest::Approx(-15.0 * 1.0));
}

TEST_CASE("jacobians match central differences") {
  const Vector x = vec({1.3, -0.7, 2.1});
  for (const auto& spec : {presets::lorenz1(), presets::chen(), presets::chua()}) {
    const Matrix j = eval_jacobian(spec, 0.0, x);
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6;
      Vector xp = x, xm = x;
      xp(c) += h;
      xm(c) -= h;
      const Vector fd = (eval_field(spec, 0.0, xp) - eval_field(spec, 0.0, xm)) / (2 * h);
      CHECK((fd - j.col(c)).norm() < 1e-6);
    }
  }
}

TEST_CASE("spec validation and dimension errors") {
  CHECK_THROWS_AS(eval_field(presets::lorenz1(), 0.0, vec({1.0, 2.0})), InvalidArgument);
  CHECK_THROWS_AS(SystemSpec::linear_affine("bad", Matrix::Zero(2, 3), Vector::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(system_kind_from_string("duffing"), InvalidArgument);
  CHECK(system_kind_from_string("linear-affine") == SystemKind::linear_affine);
  SystemSpec s = presets::lorenz1();
  s.dim = 4;
  CHECK_THROWS_AS(s.validate(), InvalidArgument);
}

TEST_CASE("rk4 against the exponential") {
  CHECK(rk4_error(0.01) < 1e-9);
  const double ratio = rk4_error(0.02) / rk4_error(0.01);
  CHECK(ratio >= 12.0);
  CHECK(ratio <= 20.0);
}

TEST_CASE("zero field keeps the state") {
  const auto zero = SystemSpec::linear_affine("zero", Matrix::Zero(2, 2), Vector::Zero(2));
  const auto traj = integrate(zero, vec({1.5, -2.0}), 0.0, 1.0, {Method::rk4, 0.1});
  CHECK(traj.size() == 11);
  for (std::size_t k = 0; k < traj.size(); ++k) CHECK(traj.state(k) == vec({1.5, -2.0}));
  const auto poly = euler_polyline(zero, vec({1.5, -2.0}), 1.0, 7);
  for (std::size_t k = 0; k < poly.size(); ++k) CHECK(poly.state(k) == vec({1.5, -2.0}));
}

TEST_CASE("lorenz run stays bounded") {
  const auto traj = integrate(presets::lorenz1(), presets::lorenz_x0(), 0.0, 30.0);
  CHECK(traj.steps() == 3000);
  CHECK(traj.states().allFinite());
  CHECK(traj.states().lpNorm<Eigen::Infinity>() < 100.0);
}

TEST_CASE("blow-up names the step") {
  const auto grow = scalar_linear(50.0);
  try {
    integrate(grow, vec({1.0}), 0.0, 10.0, {Method::euler, 0.1});
    FAIL("expected blow-up");
  } catch (const BlowUpError& e) {
    // (1 + 5)^k passes 1e12 at k = 16.
    CHECK(e.step() == 16);
    CHECK(std::string(e.what()).find("16") != std::string::npos);
  }
}

TEST_CASE("euler polyline nodes") {
  const auto one = SystemSpec::linear_affine("one", Matrix::Zero(1, 1), Vector::Constant(1, 1.0));
  const auto poly = euler_polyline(one, vec({0.0}), 1.0, 4);
  REQUIRE(poly.size() == 5);
  for (int k = 0; k <= 4; ++k) CHECK(poly.state(k)(0) == doctest::Approx(0.25 * k).epsilon(1e-15));
  CHECK_THROWS_AS(euler_polyline(one, vec({0.0}), 1.0, 0), InvalidArgument);
}

TEST_CASE("euler polyline converges at first order") {
  for (int m : {100, 200, 400}) {
    const double ratio = euler_error(m) / euler_error(2 * m);
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
  }
}

TEST_CASE("time augmentation") {
  const auto zero = SystemSpec::linear_affine("zero", Matrix::Zero(1, 1), Vector::Zero(1));
  const auto traj = integrate(zero, vec({1.0}), 0.0, 2.0, {Method::rk4, 1.0});
  const auto aug = augment_time(traj);
  REQUIRE(aug.dim() == 2);
  CHECK(aug.state(0) == vec({1.0, 0.0}));
  CHECK(aug.state(1) == vec({1.0, 1.0}));
  CHECK(aug.state(2) == vec({1.0, 2.0}));

  const auto lor = integrate(presets::lorenz1(), presets::lorenz_x0(), 0.0, 1.0);
  const auto laug = augment_time(lor);
  CHECK(laug.states().topRows(3) == lor.states());
  for (std::size_t k = 0; k + 1 < laug.size(); ++k) {
    CHECK(laug.states()(3, k + 1) > laug.states()(3, k));
    CHECK((laug.state(k + 1) - laug.state(k)).norm() >= lor.dt() * (1 - 1e-12));
  }
}

TEST_CASE("linear solution oracles") {
  CHECK(linear_solution(Matrix::Zero(2, 2), vec({1.0, -2.0}), vec({3.0, 4.0}), 2.0).isApprox(vec({5.0, 0.0})));
  CHECK(linear_solution(Matrix::Constant(1, 1, -1.0), vec({0.0}), vec({1.0}), 1.0)(0) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(linear_solution(Matrix::Constant(1, 1, 1.0), vec({1.0}), vec({0.0}), 1.0)(0) ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-14));
  // Rotation generator: exp(At) is the rotation by t.
  Matrix A(2, 2);
  A << 0, -1, 1, 0;
  const Vector r = linear_solution(A, Vector::Zero(2), vec({1.0, 0.0}), 0.3);
  CHECK(r(0) == doctest::Approx(std::cos(0.3)).epsilon(1e-14));
  CHECK(r(1) == doctest::Approx(std::sin(0.3)).epsilon(1e-14));
}

TEST_CASE("rk4 matches linear_solution in 3-d") {
  Matrix A(3, 3);
  A << -0.5, 1.0, 0.0, -1.0, -0.5, 0.2, 0.0, 0.3, -1.0;
  const Vector B = vec({0.1, -0.2, 0.3});
  const auto spec = SystemSpec::linear_affine("lin3", A, B);
  const auto traj = integrate(spec, vec({1.0, 2.0, -1.0}), 0.0, 2.0, {Method::rk4, 0.001});
  CHECK((traj.back() - linear_solution(A, B, vec({1.0, 2.0, -1.0}), 2.0)).norm() < 1e-12);
}

TEST_CASE("hermite midpoint is fourth-order accurate") {
  const auto spec = scalar_linear(-1.0);
  const auto traj = integrate(spec, vec({1.0}), 0.0, 1.0, {Method::rk4, 0.1});
  const double exact = std::exp(-0.05);
  // Exact sample values are off by the rk4 error; that stays far below h^4.
  CHECK(std::abs(hermite_midpoint(traj, spec, 0)(0) - exact) < 1e-6);
}

TEST_CASE("csv round trip is bit exact") {
  const auto traj = integrate(presets::chua(), presets::chua_y0(), 0.0, 5.0, {Method::rk4, 0.01});
  std::stringstream a;
  write_csv(a, traj);
  std::stringstream in(a.str());
  const auto back = read_csv(in);
  CHECK(back.states() == traj.states());
  CHECK(back.t0() == traj.t0());
  for (std::size_t k = 0; k < traj.size(); ++k) CHECK(back.time(k) == traj.time(k));
  std::stringstream b;
  write_csv(b, back);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("t,x1,x2,x3\n", 0) == 0);
}

TEST_CASE("csv reader rejects malformed input") {
  std::stringstream bad1("t,y1\n0,1\n1,2\n");
  CHECK_THROWS_AS(read_csv(bad1), InvalidArgument);
  std::stringstream bad2("t,x1\n0,1\n1,abc\n");
  CHECK_THROWS_AS(read_csv(bad2), InvalidArgument);
  std::stringstream bad3("t,x1\n0,1\n1,2\n5,3\n");
  CHECK_THROWS_AS(read_csv(bad3), InvalidArgument);
}

TEST_CASE("integration is deterministic") {
  const auto a = integrate(presets::chen(), presets::chen_z0(), 0.0, 10.0);
  const auto b = integrate(presets::chen(), presets::chen_z0(), 0.0, 10.0);
  std::stringstream sa, sb;
  write_csv(sa, a);
  write_csv(sb, b);
  CHECK(sa.str() == sb.str());
}
