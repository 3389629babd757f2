#include <doctest.h>

#include <cmath>
#include <random>

#include "fsilab/restriction.hpp"

using namespace fsilab;

namespace {

const Grid2 kGrid(128, 128, 2.0, 2.0, {-1.0, -1.0});

double max_div(const VecField &u) {
  double m = 0.0;
  const ScalarField d = divergence(u);
  for (double x : d.data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs(const VecField &u) {
  double m = 0.0;
  for (double x : u.u_data()) m = std::max(m, std::abs(x));
  for (double x : u.v_data()) m = std::max(m, std::abs(x));
  return m;
}

double l2(const VecField &u) {
  double s = 0.0;
  for (double x : u.u_data()) s += x * x;
  for (double x : u.v_data()) s += x * x;
  return std::sqrt(s);
}

/// Largest |a - b| over faces whose centres satisfy `keep`.
template <class Keep>
double max_face_diff(const VecField &a, const VecField &b, Keep keep) {
  const Grid2 &g = a.grid();
  double m = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i)
      if (keep(g.u_face(i, j))) m = std::max(m, std::abs(a.u(i, j) - b.u(i, j)));
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (keep(g.v_face(i, j))) m = std::max(m, std::abs(a.v(i, j) - b.v(i, j)));
  return m;
}

/// Spread of the cell-centred velocity over cells with centres in B_r(c).
double spread_in_ball(const VecField &u, Vec2 c, double r) {
  const Grid2 &g = u.grid();
  double lo[2] = {1e300, 1e300}, hi[2] = {-1e300, -1e300};
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (norm(g.cell_center(i, j) - c) >= r) continue;
      const Vec2 v = u.at_cell(i, j);
      lo[0] = std::min(lo[0], v.x), hi[0] = std::max(hi[0], v.x);
      lo[1] = std::min(lo[1], v.y), hi[1] = std::max(hi[1], v.y);
    }
  return std::max(hi[0] - lo[0], hi[1] - lo[1]);
}

}  // namespace

TEST_CASE("cutoff properties") {
  for (auto kind : {Cutoff::Kind::polynomial, Cutoff::Kind::smooth_exp}) {
    const Cutoff H(kind);
    for (int k = 0; k <= 4000; ++k) {
      const double z = -0.5 + 2.0 * k / 4000;
      const double v = H.value(z);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      if (z <= 0.25) CHECK(v == 0.0);
      if (z >= 0.75) CHECK(v == 1.0);
      CHECK(std::abs(H.derivative(z) - H.derivative(1.0 - z)) < 1e-12);
      CHECK(std::abs(v + H.value(1.0 - z) - 1.0) < 1e-12);
      const double d = 1e-6;
      if (std::abs(z - 0.25) < 2 * d || std::abs(z - 0.75) < 2 * d) continue;
      const double fd = (H.value(z + d) - H.value(z - d)) / (2 * d);
      CHECK(std::abs(fd - H.derivative(z)) < 1e-6);
    }
  }
}

TEST_CASE("restriction config") {
  CHECK_THROWS_AS(RestrictionConfig({{0, 0}, {1, 1}}, {0.2, 0.1}), RestrictionError);
  CHECK_THROWS_AS(RestrictionConfig({{0, 0}}, {0.0}), RestrictionError);
  CHECK_THROWS_AS(RestrictionConfig({{0, 0}}, {0.1, 0.2}), RestrictionError);
  const RestrictionConfig cfg({{0, 0}, {0.1, 0}, {0.5, 0}}, {0.01, 0.02, 0.03});
  CHECK(cfg.stage_radius(0) == doctest::Approx(0.01));
  CHECK(cfg.stage_radius(2) == doctest::Approx(0.75));
  CHECK(cfg.has_nested_case());
  // level 0 against body 1: |0.1| + 0.02 vs 0.1
  CHECK(cfg.lemma_margin() == doctest::Approx(0.02));
}

TEST_CASE("apply_E") {
  const double r = 0.2;
  const Vec2 c{0.1, -0.05};
  const VecField k = VecField::sample(kGrid, [](Vec2) { return Vec2{0.4, -0.7}; });
  CHECK(max_face_diff(apply_E(k, r, c), k, [](Vec2) { return true; }) < 1e-14);

  SolenoidalSampler s(1);
  const VecField u = s.global(kGrid);
  const VecField e = apply_E(u, r, c);
  const Vec2 avg = ball_average(u, c, r);
  const VecField A = VecField::sample(kGrid, [avg](Vec2) { return avg; });
  CHECK(max_face_diff(e, A, [&](Vec2 x) { return norm(x - c) < r; }) == 0.0);
  CHECK(max_face_diff(e, u, [&](Vec2 x) { return norm(x - c) > 2 * r; }) == 0.0);
  CHECK_THROWS_AS(apply_E(u, 1e-4, c), GridError);
}

TEST_CASE("bogovskii_annulus") {
  const double r = 0.2;
  const Vec2 c{0.0, 0.1};
  const VecField z = bogovskii_annulus(ScalarField(kGrid), r, c);
  CHECK(max_abs(z) == 0.0);

  ScalarField one(kGrid);
  for (int j = 0; j < kGrid.ny(); ++j)
    for (int i = 0; i < kGrid.nx(); ++i) {
      const double t = norm(kGrid.cell_center(i, j) - c) / r;
      if (t > 1.2 && t < 1.8) one(i, j) = 1.0;
    }
  CHECK_THROWS_WITH_AS(bogovskii_annulus(one, r, c), "incompatible mean", RestrictionError);
  CHECK_THROWS_WITH_AS(bogovskii_annulus(one, 2.0 * kGrid.h(), c), "unresolved annulus", RestrictionError);

  // zero-mean source: split the band by the sign of x
  ScalarField f(kGrid);
  double pos = 0, neg = 0;
  for (int j = 0; j < kGrid.ny(); ++j)
    for (int i = 0; i < kGrid.nx(); ++i)
      if (one(i, j) > 0) (kGrid.cell_center(i, j).x > c.x ? pos : neg) += 1;
  for (int j = 0; j < kGrid.ny(); ++j)
    for (int i = 0; i < kGrid.nx(); ++i)
      if (one(i, j) > 0) f(i, j) = kGrid.cell_center(i, j).x > c.x ? 1.0 / pos : -1.0 / neg;
  const VecField v = bogovskii_annulus(f, r, c);
  const ScalarField d = divergence(v);
  double res = 0;
  for (std::size_t k = 0; k < d.data().size(); ++k) res = std::max(res, std::abs(d.data()[k] - f.data()[k]));
  CHECK(res < 1e-8);
  CHECK(max_face_diff(v, VecField(kGrid), [&](Vec2 x) {
          const double t = norm(x - c) / r;
          return t <= 1.0 || t >= 2.0;
        }) == 0.0);

  ScalarField stray(kGrid);
  stray(64, 64) = 1.0;
  stray(65, 64) = -1.0;
  CHECK_THROWS_WITH_AS(bogovskii_annulus(stray, 0.2, {-0.5, -0.5}), "source outside annulus", RestrictionError);
}

TEST_CASE("apply_R contracts") {
  const double r = 0.15;
  const Vec2 h{0.05, -0.1};
  const VecField k = VecField::sample(kGrid, [](Vec2) { return Vec2{1.5, 0.5}; });
  CHECK(max_face_diff(apply_R(k, h, r), k, [](Vec2) { return true; }) < 1e-12);

  const VecField rot = VecField::sample(kGrid, [](Vec2 x) { return perp(x); });
  const VecField Rr = apply_R(rot, {0.0, 0.0}, r);
  CHECK(max_face_diff(Rr, VecField(kGrid), [&](Vec2 x) { return norm(x) < r; }) < 1e-12);
  CHECK(max_face_diff(Rr, rot, [&](Vec2 x) { return norm(x) > 2 * r; }) == 0.0);

  SolenoidalSampler s(3);
  for (int trial = 0; trial < 10; ++trial) {
    const VecField u = trial % 2 ? s.global(kGrid) : s.localized(kGrid, h, 0.3);
    const VecField R = apply_R(u, h, r);
    CHECK(max_div(R) <= 1e-7);
    CHECK(max_face_diff(R, u, [&](Vec2 x) { return norm(x - h) >= 2 * r; }) == 0.0);
    CHECK(spread_in_ball(R, h, r) <= 1e-8 * (1 + max_abs(u)));
  }

  // fields that are constant on B_2r are left alone
  const VecField bump = s.localized(kGrid, {0.6, 0.6}, 0.3);
  CHECK(max_face_diff(apply_R(bump, {-0.4, -0.3}, 0.2), bump, [](Vec2) { return true; }) < 1e-12);

  CHECK_THROWS_WITH_AS(apply_R(k, {0.9, 0.0}, r), "ball exceeds grid", RestrictionError);
}

TEST_CASE("apply_RN composition") {
  SolenoidalSampler s(8);
  const VecField u = s.global(kGrid);

  const RestrictionConfig one({{0.1, 0.2}}, {0.12});
  CHECK(max_face_diff(apply_RN(u, one), apply_R(u, {0.1, 0.2}, 0.12), [](Vec2) { return true; }) == 0.0);

  SUBCASE("far apart bodies act independently") {
    const Vec2 a{-0.75, -0.75}, b{0.4, 0.4};
    const double ra = 0.045, rb = 0.05;
    const RestrictionConfig cfg({a, b}, {ra, rb});
    REQUIRE(norm(a - b) > 2 * 5 * rb + 2 * ra);
    const VecField both = apply_RN(u, cfg);
    const VecField sep = apply_R(apply_R(u, b, 5 * rb), a, ra);
    const VecField ind = apply_R(apply_R(u, a, ra), b, 5 * rb);
    CHECK(max_face_diff(both, sep, [](Vec2) { return true; }) < 1e-10);
    CHECK(max_face_diff(both, ind, [](Vec2) { return true; }) < 1e-10);
  }

  SUBCASE("nested bodies share the constant") {
    const Vec2 a{0.05, 0.0}, b{-0.05, 0.02};
    const RestrictionConfig cfg({a, b}, {0.045, 0.06});
    REQUIRE(norm(a - b) + 2 * 0.045 <= 5 * 0.06);
    const VecField R = apply_RN(u, cfg);
    CHECK(spread_in_ball(R, a, 0.045) < 1e-8);
    CHECK(spread_in_ball(R, b, 0.06) < 1e-8);
    const Vec2 ca = R.at_cell(64 + 3, 64), cb = R.at_cell(64 - 3, 65);
    CHECK(std::abs(ca.x - cb.x) < 1e-8);
    CHECK(std::abs(ca.y - cb.y) < 1e-8);
  }

  SUBCASE("linearity and support growth") {
    const RestrictionConfig cfg({{0.2, 0.1}, {-0.1, 0.0}}, {0.04, 0.08});
    const VecField v = s.localized(kGrid, {-0.2, 0.1}, 0.2);
    const VecField lhs = apply_RN(2.0 * u + (-3.0) * v, cfg);
    const VecField rhs = 2.0 * apply_RN(u, cfg) + (-3.0) * apply_RN(v, cfg);
    CHECK(max_face_diff(lhs, rhs, [](Vec2) { return true; }) < 1e-10);

    const VecField Rv = apply_RN(v, cfg);
    const double reach = 2 * cfg.stage_radius(1);
    CHECK(max_face_diff(Rv, VecField(kGrid), [&](Vec2 x) { return norm(x - Vec2{-0.2, 0.1}) > 0.2 + reach; }) == 0.0);
  }
}

TEST_CASE("h_derivative") {
  const double r = 0.45;  // about 29 cells
  const Vec2 h{0.02, -0.03};
  const VecField k = VecField::sample(kGrid, [](Vec2) { return Vec2{0.2, 0.1}; });
  const auto zero = h_derivative(k, h, r);
  CHECK(max_abs(zero[0]) < 1e-12);
  CHECK(max_abs(zero[1]) < 1e-12);

  SolenoidalSampler s(4);
  for (int trial = 0; trial < 3; ++trial) {
    const VecField u = s.localized(kGrid, h + Vec2{0.05 * trial, 0.0}, 1.3 * r);
    const auto D = h_derivative(u, h, r);
    const double d = kGrid.h() / 4;
    for (int a = 0; a < 2; ++a) {
      const Vec2 e = a == 0 ? Vec2{d, 0.0} : Vec2{0.0, d};
      const VecField fd = (1.0 / (2 * d)) * (apply_R(u, h + e, r) - apply_R(u, h - e, r));
      CHECK(l2(D[a] - fd) <= 0.05 * l2(fd));
      CHECK(max_face_diff(D[a], VecField(kGrid), [&](Vec2 x) { return norm(x - h) >= 2 * r; }) == 0.0);
    }
  }
}

TEST_CASE("sampler and norm report") {
  SolenoidalSampler s(2);
  CHECK(max_div(s.global(kGrid)) < 1e-10);
  CHECK(max_div(s.localized(kGrid, {0.1, 0.1}, 0.3)) < 1e-10);
  CHECK(max_abs(s.global(kGrid)) == doctest::Approx(1.0));

  const RestrictionConfig cfg({{0.0, 0.0}}, {0.1});
  const VecField k = VecField::sample(kGrid, [](Vec2) { return Vec2{1.0, 1.0}; });
  const NormReport rep = measure_operator_norms(cfg, 2.0, {k});
  CHECK(rep.ratio_L == doctest::Approx(1.0));
  CHECK(rep.ratio_W == 0.0);
  CHECK(rep.skipped >= 1);

  const NormReport rnd = measure_operator_norms(cfg, 2.0, 10, kGrid, 7);
  CHECK(rnd.trials == 10);
  CHECK(rnd.c_estimate >= 1.0);
  CHECK(rnd.A1 >= 25.0);
}
