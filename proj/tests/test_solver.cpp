#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fsilab/restriction.hpp"
#include "fsilab/solver.hpp"

using namespace fsilab;

namespace {

constexpr double pi = std::numbers::pi;

// u = ∂ψ/∂y, v = -∂ψ/∂x for ψ = sin²(πx) sin²(πy) on the unit box
VecField vortex(const Grid2 &g, double amp = 1.0) {
  VecField u(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      const Vec2 x = g.u_face(i, j);
      u.u(i, j) = amp * std::pow(std::sin(pi * x.x), 2) * pi * std::sin(2 * pi * x.y);
    }
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const Vec2 x = g.v_face(i, j);
      u.v(i, j) = -amp * std::pow(std::sin(pi * x.y), 2) * pi * std::sin(2 * pi * x.x);
    }
  return u;
}

BodyState disc(Vec2 h, double a, double rho) {
  BodyState b;
  b.shape = Shape::disc(a);
  b.h = h;
  b.rho = rho;
  return b;
}

double max_abs(const VecField &u) {
  double m = 0.0;
  for (double x : u.u_data()) m = std::max(m, std::abs(x));
  for (double x : u.v_data()) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("rest state stays at rest") {
  const Grid2 g(24, 24, 1.0, 1.0);
  SimState s = make_state(VecField(g), Potential::newtonian(0.01), 1.0, Cloud({disc({0.5, 0.5}, 0.15, 1.0)}));
  EnergyRecord rec;
  const SimState n = step(s, 0.01, {}, &rec);
  CHECK(max_abs(n.u) == 0.0);
  CHECK(rec.kinetic == 0.0);
  CHECK(rec.work == 0.0);
  CHECK(n.t == doctest::Approx(0.01));
  CHECK(n.cloud.bodies()[0].h.x == doctest::Approx(0.5));
}

TEST_CASE("projection") {
  const Grid2 g(32, 32, 1.0, 1.0);
  SolenoidalSampler smp(5);
  VecField u = smp.global(g, 4);
  // add a gradient part, which the projection must remove
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 1; i < g.nx(); ++i) u.u(i, j) += std::cos(3 * g.u_face(i, j).x);
  SimState s = make_state(u, Potential::newtonian(0.01), 1.0, Cloud({disc({0.4, 0.55}, 0.12, 2.0)}));
  CHECK(project_state(s) <= 1e-8);
  // faces inside the body carry the rigid motion
  const BodyState &b = s.cloud.bodies()[0];
  double worst = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 1; i < g.nx(); ++i)
      if (b.contains(g.u_face(i, j))) worst = std::max(worst, std::abs(s.u.u(i, j) - b.velocity_at(g.u_face(i, j)).x));
  CHECK(worst <= 1e-12);
  // idempotent
  const VecField once = s.u;
  project_state(s);
  CHECK(max_abs(s.u - once) <= 1e-9);
}

TEST_CASE("no-body flow loses energy and stays solenoidal") {
  const Grid2 g(32, 32, 1.0, 1.0);
  SimState s = make_state(vortex(g), Potential::newtonian(0.01), 1.0, Cloud{});
  project_state(s);
  RunOptions opt;
  const RunResult r = run(s, 0.2, 0.1 / 32, opt);
  REQUIRE(r.records.size() == 64);
  double prev = kinetic_energy(s);
  for (const EnergyRecord &e : r.records) {
    CHECK(e.kinetic <= prev * (1.0 + 1e-12));
    CHECK(e.divergence_max <= 1e-6);
    CHECK(e.work == 0.0);
    CHECK(std::abs(e.fenchel_gap_total) <= 1e-12);
    prev = e.kinetic;
  }
  CHECK(r.final.t == doctest::Approx(0.2));
}

TEST_CASE("discrete energy inequality") {
  const Grid2 g(32, 32, 1.0, 1.0);
  for (const Potential &P : {Potential::newtonian(0.01), Potential::powerlaw(0.01, 0.01, 3.0)}) {
    SimState s = make_state(vortex(g), P, 1.0, Cloud({disc({0.5, 0.6}, 0.12, 3.0)}), {0.0, -1.0});
    project_state(s);
    const RunResult r = run(s, 0.1, 0.5 * max_stable_dt(s));
    double lhs = 0.0, rhs = kinetic_energy(s), t = 0.0;
    for (const EnergyRecord &e : r.records) {
      const double dt = e.t - t;
      lhs += dt * (e.dissipation_F + e.dissipation_Fstar);
      rhs += dt * e.work;
      CHECK(e.kinetic + lhs <= rhs + 1e-10);
      CHECK(e.fenchel_gap_total >= -1e-10);
      t = e.t;
    }
  }
}

TEST_CASE("heavy disc sinks and keeps its mass") {
  const Grid2 g(48, 48, 1.0, 1.0);
  const double a = 0.1, rho_b = 5.0;
  SimState s = make_state(VecField(g), Potential::newtonian(0.01), 1.0, Cloud({disc({0.5, 0.65}, a, rho_b)}), {0.0, -1.0});
  const double tol = 2.0 * g.h() * 2.0 * pi * a;
  auto body_area = [&](const SimState &st) {
    double m = 0.0;
    for (double r : st.rho.data()) m += (r - 1.0) / (rho_b - 1.0) * g.cell_area();
    return m;
  };
  CHECK(std::abs(body_area(s) - pi * a * a) <= tol);
  RunOptions opt;
  int calls = 0;
  opt.snapshot_every = 10;
  opt.snapshot = [&](const SimState &st, int) {
    ++calls;
    CHECK(std::abs(body_area(st) - pi * a * a) <= tol);
  };
  const RunResult r = run(s, 0.3, 0.005, opt);
  CHECK(calls == 7);
  const BodyState &b = r.final.cloud.bodies()[0];
  CHECK(b.h.y < 0.65 - 0.01);
  CHECK(b.Y.y < 0.0);
  CHECK(std::abs(b.h.x - 0.5) <= 1e-6);
  CHECK(std::abs(body_area(r.final) - pi * a * a) <= tol);
}

TEST_CASE("zero duration run") {
  const Grid2 g(16, 16, 1.0, 1.0);
  SimState s = make_state(vortex(g), Potential::newtonian(0.01), 1.0, Cloud{});
  const RunResult r = run(s, 0.0, 0.01);
  CHECK(r.records.empty());
  CHECK(max_abs(r.final.u - s.u) == 0.0);
  CHECK_THROWS_AS(run(s, 0.1, 0.0), SolverError);
}

TEST_CASE("failure modes") {
  const Grid2 g(16, 16, 1.0, 1.0);
  SimState s = make_state(vortex(g), Potential::newtonian(0.01), 1.0, Cloud{});
  project_state(s);
  CHECK_THROWS_WITH_AS(step(s, 0.5, {}), doctest::Contains("CFL violated"), SolverError);
  CHECK(max_stable_dt(s) > 0.0);

  SimState pl = make_state(vortex(g), Potential::powerlaw(0.01, 0.05, 3.0), 1.0, Cloud{});
  project_state(pl);
  SolverOptions one;
  one.picard_max = 1;
  CHECK_THROWS_WITH_AS(step(pl, 0.2 * max_stable_dt(pl), one), doctest::Contains("viscous fixed point stalled"),
                       SolverError);
  CHECK_NOTHROW(step(pl, 0.2 * max_stable_dt(pl)));

  // a dense disc next to the floor falls through it
  SimState fall = make_state(VecField(g), Potential::newtonian(0.01), 1.0, Cloud({disc({0.5, 0.2}, 0.12, 50.0)}),
                             {0.0, -200.0});
  CHECK_THROWS_WITH_AS(run(fall, 1.0, 0.004), doctest::Contains("body exits domain"), BodyError);
}

TEST_CASE("weak form residual") {
  SolenoidalSampler smp(11);
  SUBCASE("rest state") {
    const Grid2 g(24, 24, 1.0, 1.0);
    SimState s = make_state(VecField(g), Potential::newtonian(0.01), 1.0, Cloud{});
    RunOptions opt;
    opt.keep_history = true;
    const RunResult r = run(s, 0.05, 0.01, opt);
    REQUIRE(r.history.size() == 6);
    CHECK(weak_form_residual(r.history, smp.localized(g, {0.5, 0.5}, 0.3)) == 0.0);
  }
  SUBCASE("shrinks under refinement") {
    double prev = 0.0;
    for (int n : {32, 64}) {
      const Grid2 g(n, n, 1.0, 1.0);
      SimState s = make_state(vortex(g), Potential::newtonian(0.01), 1.0, Cloud{});
      project_state(s);
      RunOptions opt;
      opt.keep_history = true;
      const RunResult r = run(s, 0.1, 0.1 / n, opt);
      // same smooth φ on both grids
      SolenoidalSampler same(3);
      const double res = std::abs(weak_form_residual(r.history, same.localized(g, {0.45, 0.55}, 0.3)));
      if (prev > 0.0) CHECK(res < 0.75 * prev);
      prev = res;
    }
  }
  SUBCASE("test function must be rigid on bodies") {
    const Grid2 g(32, 32, 1.0, 1.0);
    SimState s = make_state(VecField(g), Potential::newtonian(0.01), 1.0, Cloud({disc({0.5, 0.5}, 0.12, 1.0)}));
    RunOptions opt;
    opt.keep_history = true;
    const RunResult r = run(s, 0.02, 0.01, opt);
    CHECK_THROWS_WITH_AS(weak_form_residual(r.history, smp.localized(g, {0.5, 0.5}, 0.3)),
                         doctest::Contains("not rigid"), SolverError);
    // a field supported away from the body is fine
    CHECK_NOTHROW(weak_form_residual(r.history, smp.localized(g, {0.2, 0.2}, 0.15)));
    CHECK_THROWS_AS(weak_form_residual({}, smp.localized(g, {0.2, 0.2}, 0.15)), SolverError);
  }
}
