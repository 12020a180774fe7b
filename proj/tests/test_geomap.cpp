#include <cmath>
#include <random>

#include "conjlab/geomap.hpp"
#include "doctest.h"

using namespace conjlab;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector random_unit(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> normal;
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = normal(rng);
  return v / v.norm();
}

Matrix rot90() {
  Matrix r(2, 2);
  r << 0, -1, 1, 0;
  return r;
}

}  // namespace

TEST_CASE("align_to_axis on the last axis is the identity") {
  for (int n = 1; n <= 5; ++n) {
    Vector e = Vector::Zero(n);
    e(n - 1) = 1.0;
    const auto chain = align_to_axis(e);
    CHECK(chain.factors.size() == static_cast<std::size_t>(n - 1));
    for (const auto& g : chain.factors) {
      CHECK(g.c == 1.0);
      CHECK(g.s == 0.0);
    }
  }
}

TEST_CASE("align_to_axis hand cases") {
  const auto chain = align_to_axis(vec({1.0, 0.0}));
  REQUIRE(chain.factors.size() == 1);
  CHECK(chain.factors[0].c == doctest::Approx(0.0));
  CHECK(chain.factors[0].s == doctest::Approx(1.0));
  CHECK((chain.matrix() - rot90()).norm() < 1e-15);
  CHECK((chain.matrix() * vec({1.0, 0.0}) - vec({0.0, 1.0})).norm() < 1e-15);

  const auto c3 = align_to_axis(vec({1.0, 0.0, 0.0}));
  CHECK((c3.matrix() * vec({1.0, 0.0, 0.0}) - vec({0.0, 0.0, 1.0})).norm() < 1e-12);
  CHECK_THROWS_AS(align_to_axis(vec({1.0, 1.0})), InvalidArgument);
}

TEST_CASE("rotation chains are proper rotations") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 6;
    const Vector u = random_unit(rng, n);
    const auto chain = align_to_axis(u);
    const Matrix r = chain.matrix();
    for (const auto& g : chain.factors) CHECK(std::abs(g.c * g.c + g.s * g.s - 1.0) < 1e-12);
    CHECK((r.transpose() * r - Matrix::Identity(n, n)).norm() < 1e-10);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-8);
    Vector e = Vector::Zero(n);
    e(n - 1) = 1.0;
    CHECK((r * u - e).norm() < 1e-10);
    CHECK((chain.apply(u) - r * u).norm() < 1e-14);
  }
}

TEST_CASE("degenerate leading zeros give identity factors") {
  const auto chain = align_to_axis(vec({0.0, 0.0, 0.6, 0.8}));
  CHECK(chain.factors[0].c == 1.0);
  CHECK(chain.factors[0].s == 0.0);
  CHECK((chain.matrix() * vec({0.0, 0.0, 0.6, 0.8}) - vec({0.0, 0.0, 0.0, 1.0})).norm() < 1e-12);
}

TEST_CASE("rotation_between") {
  const Matrix p = rotation_between(vec({1.0, 0.0}), vec({0.0, 1.0}));
  CHECK((p - rot90()).norm() < 1e-15);

  const Vector u = vec({0.6, 0.0, 0.8});
  CHECK((rotation_between(u, u) * u - u).norm() < 1e-12);

  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector a = random_unit(rng, 5), b = random_unit(rng, 5);
    const Matrix pab = rotation_between(a, b);
    CHECK((pab * a - b).norm() < 1e-10);
    CHECK((pab.transpose() * pab - Matrix::Identity(5, 5)).norm() < 1e-10);
    CHECK((rotation_between(b, a) * (pab * a) - a).norm() < 1e-9);
  }
}

TEST_CASE("segment maps") {
  const auto m = build_segment_map(vec({0.0, 0.0}), vec({1.0, 0.0}), vec({1.0, 1.0}), vec({0.0, 2.0}));
  CHECK((m.M - 2.0 * rot90()).norm() < 1e-14);
  CHECK((m.b - vec({1.0, 1.0})).norm() < 1e-14);
  for (double s : {0.0, 0.5, 3.0}) CHECK((m(vec({s, 0.0})) - vec({1.0, 1.0 + 2.0 * s})).norm() < 1e-13);

  const Vector xs = vec({1.0, 2.0, 3.0}), xd = vec({0.1, -0.2, 0.05});
  const auto same = build_segment_map(xs, xd, xs, xd);
  CHECK((same.M * xd - xd).norm() < 1e-12);
  for (double s : {0.0, 0.3, 1.0}) CHECK((same(xs + s * xd) - (xs + s * xd)).norm() < 1e-12);

  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    Vector a(4), ad(4), b(4), bd(4);
    for (int i = 0; i < 4; ++i) a(i) = normal(rng), ad(i) = normal(rng), b(i) = normal(rng), bd(i) = normal(rng);
    const auto map = build_segment_map(a, ad, b, bd);
    CHECK((map(a) - b).norm() < 1e-10);
    CHECK((map(a + ad) - (b + bd)).norm() < 1e-10);
    // Pure scale-rotation: cond(M) is exactly 1 and the singular values equal the speed ratio.
    Eigen::JacobiSVD<Matrix> svd(map.M);
    CHECK(std::abs(svd.singularValues()(0) - bd.norm() / ad.norm()) < 1e-10);
    CHECK(condition_number(map.M) < 1.0 + 1e-6);
  }
  CHECK_THROWS_AS(build_segment_map(vec({0.0, 0.0}), vec({0.0, 0.0}), vec({1.0, 1.0}), vec({1.0, 0.0})), InvalidArgument);
}

TEST_CASE("invert") {
  const auto id = invert(AffineMap::identity(3));
  CHECK((id.M - Matrix::Identity(3, 3)).norm() == 0.0);
  CHECK(id.b.norm() == 0.0);

  const AffineMap m{2.0 * rot90(), vec({3.0, -1.0})};
  const auto inv = invert(m);
  CHECK((inv.M - 0.5 * rot90().transpose()).norm() < 1e-15);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    AffineMap r{Matrix::Identity(3, 3), Vector::Zero(3)};
    for (int i = 0; i < 3; ++i) {
      r.b(i) = normal(rng);
      for (int j = 0; j < 3; ++j) r.M(i, j) += 0.5 * normal(rng);
    }
    if (!r.invertible()) continue;
    const auto ri = invert(r);
    const Vector x = vec({normal(rng), normal(rng), normal(rng)});
    CHECK((ri(r(x)) - x).norm() < 1e-10 * (1.0 + condition_number(r.M)));
  }
  CHECK_THROWS_AS(invert(AffineMap{Matrix::Zero(2, 2), Vector::Zero(2)}), SingularMatrixError);
}

TEST_CASE("piecewise map intervals and apply") {
  std::vector<AffineMap> maps;
  for (int l = 0; l < 3; ++l) maps.push_back(AffineMap{Matrix::Identity(1, 1) * (l + 1.0), Vector::Zero(1)});
  const PiecewiseAffineMap p({0.0, 1.0, 2.0, 3.0}, maps);
  const Vector one = vec({1.0});
  CHECK(apply(p, 0.0, one)(0) == 1.0);
  CHECK(apply(p, 0.5, one)(0) == 1.0);
  CHECK(apply(p, 1.0, one)(0) == 1.0);  // interior breakpoint: left interval
  CHECK(apply(p, 1.5, one)(0) == 2.0);
  CHECK(apply(p, 3.0, one)(0) == 3.0);
  CHECK_THROWS_AS(apply(p, 3.5, one), InvalidArgument);
  CHECK_THROWS_AS(apply(p, -0.1, one), InvalidArgument);
  CHECK_THROWS_AS(PiecewiseAffineMap({0.0, 0.0}, {AffineMap::identity(1)}), InvalidArgument);

  const auto id = PiecewiseAffineMap::identity(2, 0.0, 1.0);
  CHECK(id.apply(0.3, vec({4.0, 5.0})) == vec({4.0, 5.0}));
}

TEST_CASE("polyline conjugacy on closed-form polylines") {
  // x' = 1, y' = 2 from 0, time-augmented.
  const auto fx = SystemSpec::linear_affine("x", Matrix::Zero(1, 1), Vector::Constant(1, 1.0));
  const auto fy = SystemSpec::linear_affine("y", Matrix::Zero(1, 1), Vector::Constant(1, 2.0));
  const auto px = augment_time(euler_polyline(fx, vec({0.0}), 1.0, 10));
  const auto py = augment_time(euler_polyline(fy, vec({0.0}), 1.0, 10));
  const auto k = build_polyline_conjugacy(px, py);
  CHECK(k.segments() == 10);
  CHECK(polyline_residual(k, px, py) < 1e-12);
  for (double t : {0.0, 0.05, 0.37, 1.0}) {
    CHECK((k.apply(t, vec({t, t})) - vec({2 * t, t})).norm() < 1e-12);
  }
}

TEST_CASE("polyline conjugacy of a polyline with itself fixes it") {
  const auto px = augment_time(euler_polyline(presets::lorenz1(), presets::lorenz_x0(), 2.0, 200));
  const auto k = build_polyline_conjugacy(px, px);
  CHECK(polyline_residual(k, px, px) < 1e-12);
}

TEST_CASE("polyline conjugacy rejects mismatched breakpoints") {
  const auto fx = SystemSpec::linear_affine("x", Matrix::Zero(1, 1), Vector::Constant(1, 1.0));
  const auto a = augment_time(euler_polyline(fx, vec({0.0}), 1.0, 10));
  const auto b = augment_time(euler_polyline(fx, vec({0.0}), 2.0, 10));
  CHECK_THROWS_AS(build_polyline_conjugacy(a, b), InvalidArgument);
  const auto c = euler_polyline(fx, vec({0.0}), 1.0, 10);
  const auto zero = SystemSpec::linear_affine("z", Matrix::Zero(1, 1), Vector::Zero(1));
  const auto d = euler_polyline(zero, vec({0.0}), 1.0, 10);
  CHECK_THROWS_AS(build_polyline_conjugacy(c, d), NumericalError);
}

TEST_CASE("piecewise map json round trip") {
  const auto px = augment_time(euler_polyline(presets::lorenz1(), presets::lorenz_x0(), 0.3, 30));
  const auto py = augment_time(euler_polyline(presets::chen(), presets::chen_z0(), 0.3, 30));
  const auto k = build_polyline_conjugacy(px, py);
  const auto text = to_json(k);
  const auto back = piecewise_affine_from_json(text);
  REQUIRE(back.segments() == k.segments());
  CHECK(back.breakpoints() == k.breakpoints());
  for (std::size_t l = 0; l < k.segments(); ++l) {
    CHECK(back.maps()[l].M == k.maps()[l].M);
    CHECK(back.maps()[l].b == k.maps()[l].b);
  }
  CHECK(to_json(back) == text);
  CHECK_THROWS_AS(piecewise_affine_from_json("{\"dim\": 2}"), InvalidArgument);
}
