#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fsilab/grid.hpp"

using namespace fsilab;

namespace {

VecField random_field(const Grid2 &g, std::mt19937_64 &rng, bool zero_boundary = false) {
  std::normal_distribution<double> n01;
  VecField u(g);
  for (double &x : u.u_data()) x = n01(rng);
  for (double &x : u.v_data()) x = n01(rng);
  if (zero_boundary) {
    for (int j = 0; j < g.ny(); ++j) u.u(0, j) = u.u(g.nx(), j) = 0.0;
    for (int i = 0; i < g.nx(); ++i) u.v(i, 0) = u.v(i, g.ny()) = 0.0;
  }
  return u;
}

double max_interior(const TensorField &T, int skip, double SymTensor::*m, double target = 0.0) {
  const Grid2 &g = T.grid();
  double e = 0.0;
  for (int j = skip; j < g.ny() - skip; ++j)
    for (int i = skip; i < g.nx() - skip; ++i) e = std::max(e, std::abs(T(i, j).*m - target));
  return e;
}

}  // namespace

TEST_CASE("grid rejects bad shapes") {
  CHECK_THROWS_AS(Grid2(4, 8, 1.0, 2.0), GridError);
  CHECK_THROWS_AS(Grid2(8, 8, 1.0, 2.0), GridError);
  CHECK_THROWS_AS(Grid2(8, 8, -1.0, -1.0), GridError);
  Grid2 g(16, 32, 1.0, 2.0, {-0.5, -1.0});
  CHECK(g.h() == doctest::Approx(1.0 / 16));
  CHECK(g.cell_center(0, 0).x == doctest::Approx(-0.5 + 0.5 / 16));
}

TEST_CASE("sym_gradient") {
  Grid2 g(32, 32, 1.0, 1.0);
  SUBCASE("constant gives zero") {
    auto u = VecField::sample(g, [](Vec2) { return Vec2{2.0, -3.0}; });
    const TensorField D = sym_gradient(u);
    for (const SymTensor &t : D.data()) CHECK(t.norm() == 0.0);
  }
  SUBCASE("shear (y, x)") {
    auto u = VecField::sample(g, [](Vec2 x) { return Vec2{x.y, x.x}; });
    const TensorField D = sym_gradient(u);
    CHECK(max_interior(D, 1, &SymTensor::xy, 1.0) < 1e-12);
    CHECK(max_interior(D, 1, &SymTensor::xx) < 1e-12);
    CHECK(max_interior(D, 1, &SymTensor::yy) < 1e-12);
  }
  SUBCASE("second order on sin(y)") {
    std::vector<double> err;
    for (int n : {32, 64, 128}) {
      Grid2 gn(n, n, 2 * std::numbers::pi, 2 * std::numbers::pi);
      auto u = VecField::sample(gn, [](Vec2 x) { return Vec2{std::sin(x.y), 0.0}; });
      const TensorField D = sym_gradient(u);
      double e = 0.0;
      for (int j = 1; j < n - 1; ++j)
        for (int i = 1; i < n - 1; ++i) e = std::max(e, std::abs(D(i, j).xy - 0.5 * std::cos(gn.cell_center(i, j).y)));
      err.push_back(e);
    }
    CHECK(err[0] / err[1] > 3.5);
    CHECK(err[1] / err[2] > 3.5);
    // measured constant: e / h²
    const double h = 2 * std::numbers::pi / 128;
    CHECK(err[2] / (h * h) < 0.2);
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(3);
    VecField a = random_field(g, rng), b = random_field(g, rng);
    const TensorField Da = sym_gradient(a), Db = sym_gradient(b), Dc = sym_gradient(2.0 * a + (-0.5) * b);
    for (std::size_t k = 0; k < Da.data().size(); ++k) {
      const SymTensor want = 2.0 * Da.data()[k] + (-0.5) * Db.data()[k];
      CHECK((Dc.data()[k] - want).norm() < 1e-11);
    }
  }
}

TEST_CASE("divergence") {
  Grid2 g(16, 16, 2.0, 2.0, {-1.0, -1.0});
  auto c = VecField::sample(g, [](Vec2) { return Vec2{1.0, 2.0}; });
  const ScalarField dc = divergence(c);
  for (double x : dc.data()) CHECK(std::abs(x) < 1e-12);
  auto hyp = VecField::sample(g, [](Vec2 x) { return Vec2{x.x, -x.y}; });
  const ScalarField dh = divergence(hyp);
  for (double x : dh.data()) CHECK(std::abs(x) < 1e-12);
  auto src = VecField::sample(g, [](Vec2 x) { return Vec2{x.x, x.y}; });
  const ScalarField ds = divergence(src);
  for (double x : ds.data()) CHECK(x == doctest::Approx(2.0));
}

TEST_CASE("divergence and pressure gradient are adjoint") {
  Grid2 g(24, 24, 1.0, 1.0);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 5; ++trial) {
    VecField u = random_field(g, rng, true);
    ScalarField q(g);
    for (double &x : q.data()) x = n01(rng);
    const ScalarField d = divergence(u);
    const VecField G = pressure_gradient(q);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t k = 0; k < d.data().size(); ++k) lhs += d.data()[k] * q.data()[k];
    for (std::size_t k = 0; k < u.u_data().size(); ++k) rhs += u.u_data()[k] * G.u_data()[k];
    for (std::size_t k = 0; k < u.v_data().size(); ++k) rhs += u.v_data()[k] * G.v_data()[k];
    CHECK(std::abs(lhs + rhs) < 1e-12 * (std::abs(lhs) + 1.0));
  }
}

TEST_CASE("lp_norm") {
  Grid2 g(16, 16, 1.0, 1.0);
  CHECK(lp_norm(ScalarField(g), 2.0) == 0.0);
  CHECK(lp_norm(ScalarField(g, 1.0), 2.0) == doctest::Approx(1.0));
  CHECK(lp_norm(ScalarField(g, -3.0), kInf) == 3.0);
  CHECK_THROWS_AS(lp_norm(ScalarField(g), 0.5), GridError);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 10; ++trial) {
    ScalarField f(g), h(g);
    for (double &x : f.data()) x = n01(rng);
    for (double &x : h.data()) x = n01(rng);
    const double l1 = lp_norm(f, 1.0), l2 = lp_norm(f, 2.0), li = lp_norm(f, kInf);
    CHECK(l2 * l2 <= l1 * li * (1 + 1e-12));
    ScalarField s(g), m(g);
    for (std::size_t k = 0; k < f.data().size(); ++k) {
      s.data()[k] = f.data()[k] + h.data()[k];
      m.data()[k] = -2.5 * f.data()[k];
    }
    for (double p : {1.0, 1.5, 3.0, kInf}) {
      CHECK(lp_norm(s, p) <= lp_norm(f, p) + lp_norm(h, p) + 1e-12);
      CHECK(lp_norm(m, p) == doctest::Approx(2.5 * lp_norm(f, p)));
    }
  }
}

TEST_CASE("ball_average") {
  Grid2 g(64, 64, 2.0, 2.0, {-1.0, -1.0});
  auto c = VecField::sample(g, [](Vec2) { return Vec2{0.3, -1.2}; });
  const Vec2 a = ball_average(c, {0.1, 0.2}, 0.3);
  CHECK(a.x == doctest::Approx(0.3));
  CHECK(a.y == doctest::Approx(-1.2));

  auto rot = VecField::sample(g, [](Vec2 x) { return Vec2{-x.y, x.x}; });
  const Vec2 z = ball_average(rot, {0.0, 0.0}, 0.4);
  CHECK(std::abs(z.x) < 1e-12);
  CHECK(std::abs(z.y) < 1e-12);

  CHECK_THROWS_WITH_AS(ball_average(c, {0.0, 0.0}, 1e-4), "empty ball", GridError);

  SUBCASE("x² against dense quadrature") {
    const double r = 0.5;
    Grid2 fine(256, 256, 2.0, 2.0, {-1.0, -1.0});
    auto sq = VecField::sample(fine, [](Vec2 x) { return Vec2{x.x * x.x, 0.0}; });
    const Vec2 got = ball_average(sq, {0.0, 0.0}, r);
    // midpoint quadrature over the disc at 10x the grid resolution
    const int M = 2560;
    const double dq = 2.0 / M;
    double s = 0.0, area = 0.0;
    for (int j = 0; j < M; ++j)
      for (int i = 0; i < M; ++i) {
        const double x = -1.0 + (i + 0.5) * dq, y = -1.0 + (j + 0.5) * dq;
        if (x * x + y * y < r * r) {
          s += x * x;
          area += 1.0;
        }
      }
    const double oracle = s / area;
    CHECK(oracle == doctest::Approx(r * r / 4).epsilon(1e-3));
    CHECK(std::abs(got.x - oracle) < 2.0 * fine.h());
    CHECK(std::abs(got.y) < 1e-14);
  }
}

TEST_CASE("snapshot round trip") {
  Grid2 g(8, 8, 1.0, 1.0, {0.25, -0.5});
  ScalarField f(g);
  for (std::size_t k = 0; k < f.data().size(); ++k) f.data()[k] = std::sin(double(k)) / 3.0;
  std::stringstream ss;
  write_snapshot(ss, f);
  const ScalarField back = read_scalar_snapshot(ss);
  CHECK(back.grid() == g);
  for (std::size_t k = 0; k < f.data().size(); ++k) CHECK(back.data()[k] == f.data()[k]);
}
