#include <cmath>
#include <random>

#include "conjlab/forecast.hpp"
#include "conjlab/simdeg.hpp"
#include "doctest.h"

using namespace conjlab;

namespace {

Matrix rotation_field(double w) {
  Matrix A(2, 2);
  A << 0.0, w, -w, 0.0;
  return A;
}

Trajectory perturbed(const SystemSpec& f, const Vector& x0, double eps, std::uint64_t seed, double T, double dt) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector d(x0.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = normal(rng);
  return integrate(f, x0 + eps * (1.0 + x0.norm()) * d.normalized(), 0.0, T, {Method::rk4, dt});
}

}  // namespace

TEST_CASE("segment series validation") {
  const auto f = SystemSpec::linear_affine("rot", rotation_field(1.0), Vector::Zero(2));
  const auto traj = integrate(f, Vector::Ones(2), -3.0, 3.0, {Method::rk4, 0.01});
  const auto s = SegmentSeries::split(traj, 3, 100);
  CHECK(s.size() == 3);
  CHECK(s.window() == doctest::Approx(1.0));
  CHECK(s[1].t0() == doctest::Approx(-2.0));
  CHECK(s[0].back() == s[1].front());
  CHECK_THROWS_AS(SegmentSeries::split(traj, 7, 100), InvalidArgument);

  auto segs = s.segments();
  Matrix bumped = segs[2].states();
  bumped.col(0).array() += 1e-6;
  segs[2] = Trajectory(segs[2].t0(), segs[2].dt(), bumped);
  CHECK_THROWS_AS(SegmentSeries{segs}, InvalidArgument);
  CHECK_THROWS_AS(SegmentSeries(std::vector<Trajectory>{}), InvalidArgument);
}

TEST_CASE("exact prediction map") {
  Matrix A(3, 3);
  A << -0.2, 1.0, 0.0, -1.0, -0.2, 0.0, 0.0, 0.0, -0.5;
  Matrix C(3, 3);
  C << 0.1, 0.0, 0.3, 0.0, -0.4, 1.0, 0.0, -1.0, -0.4;
  const auto f = SystemSpec::linear_affine("f", A, Vector::Zero(3));
  const auto g = SystemSpec::linear_affine("g", C, Vector::Zero(3));
  const Vector x0 = (Vector(3) << 1.0, 0.5, -0.3).finished();
  const Vector y0 = (Vector(3) << 0.2, -1.0, 0.8).finished();
  const auto x = integrate(f, x0, 0.0, 2.0, {Method::rk4, 0.01});
  const auto y = integrate(g, y0, 0.0, 2.0, {Method::rk4, 0.01});
  std::vector<Trajectory> cx, cy;
  for (std::uint64_t k = 1; k <= 2; ++k) {
    cx.push_back(perturbed(f, x0, 1e-3, k, 2.0, 0.01));
    cy.push_back(perturbed(g, y0, 1e-3, 10 + k, 2.0, 0.01));
  }
  const auto K = exact_prediction_map(x, cx, y, cy);
  CHECK(K.flagged() == 0);
  CHECK(stacked_residual(K, x, cx, y, cy) < 1e-8);
  CHECK(similarity_degree(discrete_cost(K, x, y)) == doctest::Approx(1.0).epsilon(1e-9));

  // Duplicated companions make every stack singular.
  CHECK_THROWS_AS(exact_prediction_map(x, {x, x}, y, {y, y}), SingularMatrixError);
  CHECK_THROWS_AS(exact_prediction_map(x, {x}, y, {y}), InvalidArgument);
}

TEST_CASE("exact prediction map in one dimension is a ratio") {
  const auto f = SystemSpec::linear_affine("f", Matrix::Constant(1, 1, -1.0), Vector::Zero(1));
  const auto g = SystemSpec::linear_affine("g", Matrix::Constant(1, 1, 0.5), Vector::Zero(1));
  const auto x = integrate(f, Vector::Constant(1, 2.0), 0.0, 1.0, {Method::rk4, 0.01});
  const auto y = integrate(g, Vector::Constant(1, -1.0), 0.0, 1.0, {Method::rk4, 0.01});
  const auto K = exact_prediction_map(x, {}, y, {});
  for (std::size_t k = 0; k < x.size(); ++k) CHECK(K.at(k)(0, 0) == doctest::Approx(y.state(k)(0) / x.state(k)(0)));
}

TEST_CASE("predict future on a scalar linear field") {
  const double a = -0.7, T = 1.0;
  const auto f = SystemSpec::linear_affine("f", Matrix::Constant(1, 1, a), Vector::Zero(1));
  const auto traj = integrate(f, Vector::Constant(1, 1.5), -3.0, 3.0, {Method::rk4, 0.001});
  const auto hist = SegmentSeries::split(traj, 3, 1000);
  const auto r = predict_future(hist);
  const double truth = 1.5 * std::exp(a * 3.0 + a * T);
  // Ten times the rk4 global error over the same span.
  const double rk4_err = std::abs(integrate(f, Vector::Constant(1, 1.5), 0.0, 4.0, {Method::rk4, 0.001}).back()(0) -
                                  1.5 * std::exp(4.0 * a));
  CHECK(std::abs(r.state(0) - truth) <= 10 * rk4_err + 1e-14);
  CHECK(r.fit_residual < 1e-12);
  CHECK(r.segment.t0() == doctest::Approx(0.0));
  CHECK(r.segment.back()(0) == doctest::Approx(r.state(0)));

  // Companions re-integrated from f agree with the data-only fit.
  const auto rf = predict_future(hist, &f);
  CHECK(std::abs(rf.state(0) - r.state(0)) < 1e-12);
  // A small seeded drift keeps the prediction close.
  const auto re = predict_future(hist, &f, {1e-3, 7});
  CHECK(std::abs(re.state(0) - truth) < 1e-2);
  CHECK(predict_future(hist, &f, {1e-3, 7}).state == re.state);
}

TEST_CASE("predict future with frozen dynamics") {
  const auto zero = SystemSpec::linear_affine("zero", Matrix::Zero(3, 3), Vector::Zero(3));
  const Vector x = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const auto traj = integrate(zero, x, -2.0, 2.0, {Method::rk4, 0.01});
  const auto hist = SegmentSeries::split(traj, 2, 100);
  CHECK((predict_future(hist).state - x).norm() < 1e-14);
  CHECK((infer_past(hist).state - x).norm() < 1e-14);
}

TEST_CASE("predict future on a 3-d linear field") {
  Matrix A(3, 3);
  A << -0.1, 1.0, 0.0, -1.0, -0.1, 0.0, 0.0, 0.0, -0.3;
  const auto f = SystemSpec::linear_affine("f", A, Vector::Zero(3));
  const Vector x0 = (Vector(3) << 1.0, 0.0, 2.0).finished();
  double prev = std::numeric_limits<double>::infinity();
  for (double dt : {0.04, 0.02, 0.01, 0.001}) {
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / dt));
    const auto traj = integrate(f, x0, -4.0, 4.0, {Method::rk4, dt});
    const auto r = predict_future(SegmentSeries::split(traj, 4, steps));
    const double err = (r.state - expm(A * 5.0) * x0).norm();
    CHECK(err < prev);
    prev = err;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("infer past closed form") {
  const auto f = SystemSpec::linear_affine("decay", Matrix::Constant(1, 1, -1.0), Vector::Zero(1));
  const double T = 0.5;
  const auto traj = integrate(f, Vector::Constant(1, 2.0), 0.0, 1.5, {Method::rk4, 0.001});
  const auto fut = SegmentSeries::split(traj, 3, 500);
  const auto r = infer_past(fut);
  CHECK(r.state(0) == doctest::Approx(2.0 * std::exp(T)).epsilon(1e-10));
  CHECK(r.segment.t0() == doctest::Approx(-T));
}

TEST_CASE("infer past undoes predict future on a rotation") {
  const auto f = SystemSpec::linear_affine("rot", rotation_field(2.0), Vector::Zero(2));
  const auto traj = integrate(f, (Vector(2) << 1.0, 0.5).finished(), -3.0, 3.0, {Method::rk4, 0.001});
  const auto hist = SegmentSeries::split(traj, 3, 1000);
  const auto ahead = predict_future(hist);
  std::vector<Trajectory> fut(hist.segments().begin() + 1, hist.segments().end());
  fut.push_back(ahead.segment);
  const auto back = infer_past(SegmentSeries(fut));
  CHECK((back.state - hist[0].front()).norm() < 1e-6);
}

TEST_CASE("lorenz short-horizon prediction") {
  const auto lor = presets::lorenz1();
  const auto traj = integrate(lor, presets::lorenz_x0(), 0.0, 21.0, {Method::rk4, 0.01});
  auto rel_error = [&](std::size_t steps) {
    const Trajectory tail(0.0, 0.01, traj.states().middleCols(static_cast<Eigen::Index>(2000 - 3 * steps),
                                                              static_cast<Eigen::Index>(3 * steps + 1)));
    const auto r = predict_future(SegmentSeries::split(tail, 3, steps), &lor);
    const Vector truth = traj.state(2000 + steps);
    return (r.state - truth).norm() / truth.norm();
  };
  CHECK(rel_error(5) < 0.05);
  // A single linear K cannot carry the flow across a full unit of time.
  MESSAGE("window 1.0 relative error " << rel_error(100));
}

TEST_CASE("takens dimension") {
  CHECK(takens_dimension(2.51) == 7);
  CHECK(takens_dimension(3.0) == 7);
  CHECK(takens_dimension(1.0) == 3);
  CHECK_THROWS_AS(takens_dimension(0.0), InvalidArgument);
}
