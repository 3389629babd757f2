#include "fsilab/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "fsilab/linalg.hpp"

namespace fsilab {

namespace {

constexpr double kDtSafety = 0.8;

double min_side(const StudyPlan &p) { return std::min(p.lx, p.ly); }
double cell(const StudyPlan &p) { return std::max(p.lx / p.nx, p.ly / p.ny); }
double length_unit(const StudyPlan &p) { return p.radius_scale * min_side(p); }

struct Lattice {
  int cols = 1, rows = 1;
};

Lattice lattice_for(int N) {
  Lattice l;
  l.cols = int(std::ceil(std::sqrt(double(N)) - 1e-12));
  l.rows = (N + l.cols - 1) / l.cols;
  return l;
}

/// Largest radius for which N bodies fit their lattice slots with a gap
/// of 2h to the walls and 4h between bodies.
double placement_clamp(const StudyPlan &p, int N) {
  const Lattice l = lattice_for(N);
  return 0.5 * std::min(p.lx / l.cols, p.ly / l.rows) - 2.0 * cell(p);
}

std::vector<Vec2> place(const StudyPlan &p, int N, double r) {
  const Lattice l = lattice_for(N);
  const double w = p.lx / l.cols, ht = p.ly / l.rows;
  std::vector<Vec2> c;
  if (p.placement == Placement::lattice) {
    for (int k = 0; k < N; ++k) c.push_back({(k % l.cols + 0.5) * w, (k / l.cols + 0.5) * ht});
    return c;
  }
  // random: rejection sampling over the box, seeded per N
  std::mt19937_64 rng(p.seed * 1000003ULL + std::uint64_t(N));
  const double gap = 2.0 * cell(p);
  std::uniform_real_distribution<double> ux(r + gap, p.lx - r - gap), uy(r + gap, p.ly - r - gap);
  for (int tries = 0; int(c.size()) < N; ++tries) {
    if (tries > 200000) throw ScenarioError("cannot place " + std::to_string(N) + " bodies");
    const Vec2 x{ux(rng), uy(rng)};
    bool ok = true;
    for (const Vec2 &y : c) ok = ok && norm(x - y) >= 2.0 * r + 2.0 * gap;
    if (ok) c.push_back(x);
  }
  return c;
}

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(6);
  s << x;
  return s.str();
}

}  // namespace

void StudyPlan::validate() const {
  auto bad = [](const std::string &m) { throw ScenarioError("invalid plan: " + m); };
  if (!(A > 1.0)) bad("A must exceed 1");
  for (std::size_t k = 0; k < N_list.size(); ++k) {
    if (N_list[k] < 0) bad("N must be non-negative");
    if (k > 0 && N_list[k] <= N_list[k - 1]) bad("N_list must be ascending");
  }
  if (!(p >= 1.0) || !(q >= 1.0)) bad("exponents must be >= 1");
  if (nx < 8 || ny < 8 || !(lx > 0.0) || !(ly > 0.0)) bad("grid too small");
  if (!(rho_f > 0.0)) bad("rho_f must be positive");
  if (!(T >= 0.0) || !(dt >= 0.0)) bad("T and dt must be non-negative");
  if (!(radius_scale > 0.0)) bad("radius_scale must be positive");
}

double scenario_radius(const StudyPlan &plan, int N) {
  if (N <= 0) return 0.0;
  const double r = length_unit(plan) * std::sqrt(std::pow(plan.A, -double(N)) / N);
  return std::min(r, placement_clamp(plan, N));
}

int max_feasible_N(const StudyPlan &plan) {
  const double rmin = plan.min_cells * cell(plan);
  int N = 0;
  while (N < 100000 && scenario_radius(plan, N + 1) >= rmin) ++N;
  return N;
}

void check_hypotheses(const StudyPlan &plan, int N, const std::vector<BodyState> &bodies) {
  if (int(bodies.size()) != N) throw ScenarioError("body count does not match N");
  for (std::size_t k = 0; k < bodies.size(); ++k) {
    if (!(bodies[k].radius() > 0.0) || (k > 0 && bodies[k].radius() < bodies[k - 1].radius()))
      throw ScenarioError("hypothesis (i1) violated: radii must be positive and ascending", "i1");
  }
  const double omega = plan.lx * plan.ly;
  double solid = 0.0, heavy = 0.0;
  for (const BodyState &b : bodies) {
    solid += b.area();
    heavy += std::pow(b.rho, plan.q) * b.area();
  }
  const double w9 = std::pow(plan.rho_f, plan.q) * (omega - solid) + heavy;
  const double w9_bound = plan.density_bound * std::pow(plan.rho_f, plan.q) * omega;
  if (!(w9 <= w9_bound))
    throw ScenarioError("hypothesis (w9) violated: density sum " + fmt(w9) + " exceeds " + fmt(w9_bound), "w9");
  if (std::abs(plan.p - 2.0) < 1e-12) {
    for (const BodyState &b : bodies) {
      const double r = b.radius();
      if (plan.lambda * r * r > b.area())
        throw ScenarioError("hypothesis (w10) violated: lambda r^2 = " + fmt(plan.lambda * r * r) + " > |S| = " +
                                fmt(b.area()),
                            "w10");
    }
  }
  double vol = 0.0;
  for (const BodyState &b : bodies) vol += std::pow(b.radius() / length_unit(plan), 2.0);
  const double w14 = std::pow(plan.A, double(N)) * vol;
  if (!(w14 <= plan.packing_bound))
    throw ScenarioError("hypothesis (w14) violated: A^N vol[N] = " + fmt(w14) + " exceeds " + fmt(plan.packing_bound),
                        "w14");
}

VecField study_initial_field(const StudyPlan &plan) {
  const Grid2 g(plan.nx, plan.ny, plan.lx, plan.ly);
  SolenoidalSampler s(plan.seed);
  return s.global(g, plan.u0_modes);
}

SimState build_scenario(const StudyPlan &plan, int N) {
  plan.validate();
  if (N < 0) throw ScenarioError("N must be non-negative");
  const Grid2 g(plan.nx, plan.ny, plan.lx, plan.ly);
  const VecField u0 = study_initial_field(plan);
  std::vector<BodyState> bodies;
  if (N > 0) {
    std::vector<double> radii = plan.radii;
    if (int(radii.size()) != N) radii.assign(std::size_t(N), scenario_radius(plan, N));
    const double rmin = *std::min_element(radii.begin(), radii.end());
    const double rmax = *std::max_element(radii.begin(), radii.end());
    if (rmin < plan.min_cells * cell(plan))
      throw ScenarioError("unresolvable radius: r = " + fmt(rmin) + " is below " + fmt(plan.min_cells) +
                          " cells; max feasible N = " + std::to_string(max_feasible_N(plan)));
    if (rmax > placement_clamp(plan, N) + 1e-12)
      throw ScenarioError("cannot place " + std::to_string(N) + " bodies of radius " + fmt(rmax));
    const std::vector<Vec2> centers = place(plan, N, rmax);
    const double rho_b = plan.rho_f * std::pow(double(N), plan.heavy_beta);
    for (int k = 0; k < N; ++k) {
      BodyState b;
      b.shape = Shape::disc(radii[std::size_t(k)]);
      b.h = centers[std::size_t(k)];
      b.rho = rho_b;
      const int i = std::clamp(int(b.h.x / g.h()), 0, g.nx() - 1), j = std::clamp(int(b.h.y / g.h()), 0, g.ny() - 1);
      b.Y = u0.at_cell(i, j);
      bodies.push_back(b);
    }
    check_hypotheses(plan, N, bodies);
  }
  SimState s = make_state(u0, plan.potential, plan.rho_f, Cloud(bodies), plan.g);
  project_state(s, plan.solver);
  return s;
}

double study_dt(const StudyPlan &plan) {
  if (plan.dt > 0.0) return plan.dt;
  // smallest stable step over every initial state of the plan; bodies
  // squeeze the projected field, so the reference alone is not enough
  double dt = max_stable_dt(build_scenario(plan, 0), plan.solver);
  for (int N : plan.N_list) {
    try {
      dt = std::min(dt, max_stable_dt(build_scenario(plan, N), plan.solver));
    } catch (const ScenarioError &) {
      // reported by the run itself
    }
  }
  dt *= kDtSafety;
  if (!std::isfinite(dt)) return plan.T > 0.0 ? plan.T : 1.0;
  if (plan.T <= 0.0) return dt;
  // land on T with equal steps
  return plan.T / std::ceil(plan.T / dt);
}

int study_workers() {
  if (const char *env = std::getenv("FSILAB_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 4;
}

namespace {

/// Reference velocities sampled on a fixed step stride.
struct ReferenceSamples {
  int stride = 1;
  std::vector<int> steps;
  std::vector<Vector> u, v;
};

double face_error2(const VecField &a, const Vector &ru, const Vector &rv) {
  double e = 0.0;
  for (std::size_t k = 0; k < ru.size(); ++k) e += std::pow(a.u_data()[k] - ru[k], 2);
  for (std::size_t k = 0; k < rv.size(); ++k) e += std::pow(a.v_data()[k] - rv[k], 2);
  return e * a.grid().cell_area();
}

double grad_error_p(const VecField &a, const Vector &ru, const Vector &rv, double p) {
  VecField b(a.grid());
  std::copy(ru.begin(), ru.end(), b.u_data().begin());
  std::copy(rv.begin(), rv.end(), b.v_data().begin());
  const TensorField da = sym_gradient(a), db = sym_gradient(b);
  double e = 0.0;
  for (std::size_t c = 0; c < da.data().size(); ++c) e += std::pow((da.data()[c] - db.data()[c]).norm(), p);
  return e * a.grid().cell_area();
}

void energy_summary(StudyRow &row, double K0, const std::vector<EnergyRecord> &recs, double t0) {
  double diss = 0.0, work = 0.0, t = t0;
  row.energy_drift = -std::numeric_limits<double>::infinity();
  row.max_gap = 0.0;
  for (const EnergyRecord &e : recs) {
    const double dt = e.t - t;
    diss += dt * (e.dissipation_F + e.dissipation_Fstar);
    work += dt * e.work;
    row.energy_drift = std::max(row.energy_drift, e.kinetic + diss - K0 - work);
    row.max_gap = std::max(row.max_gap, e.fenchel_gap_total);
    t = e.t;
  }
  if (recs.empty()) row.energy_drift = 0.0;
}

}  // namespace

StudyResult run_study(const StudyPlan &plan, int workers, int snapshot_every, const StudySnapshot &snapshot) {
  plan.validate();
  const auto start = std::chrono::steady_clock::now();
  StudyResult result;
  result.dt = study_dt(plan);
  const int steps = plan.T > 0.0 ? int(std::llround(plan.T / result.dt + 0.5 - 1e-9)) : 0;

  // reference run, sampling on a stride that keeps about 100 samples
  ReferenceSamples ref;
  ref.stride = std::max(1, (steps + 99) / 100);
  const SimState s_ref = build_scenario(plan, 0);
  {
    RunOptions opt;
    opt.solver = plan.solver;
    opt.snapshot_every = 1;
    opt.snapshot = [&](const SimState &s, int n) {
      if (n % ref.stride == 0 || n == steps) {
        ref.steps.push_back(n);
        ref.u.emplace_back(s.u.u_data().begin(), s.u.u_data().end());
        ref.v.emplace_back(s.u.v_data().begin(), s.u.v_data().end());
      }
      if (snapshot && snapshot_every > 0 && n % snapshot_every == 0) snapshot(0, s, n);
    };
    result.reference = run(s_ref, plan.T, result.dt, opt).records;
  }

  result.rows.resize(plan.N_list.size());
  auto job = [&](std::size_t idx) {
    StudyRow &row = result.rows[idx];
    row.N = plan.N_list[idx];
    try {
      const SimState s0 = build_scenario(plan, row.N);
      for (const BodyState &b : s0.cloud.bodies()) row.vol_N += b.radius() * b.radius();
      double e2 = 0.0, ep = 0.0;
      std::size_t next = 0;
      int prev_step = 0;
      RunOptions opt;
      opt.solver = plan.solver;
      opt.snapshot_every = 1;
      opt.snapshot = [&](const SimState &s, int n) {
        if (next < ref.steps.size() && ref.steps[next] == n) {
          // rectangle rule over the steps since the previous sample
          const double w = (n - prev_step) * result.dt;
          e2 += w * face_error2(s.u, ref.u[next], ref.v[next]);
          ep += w * grad_error_p(s.u, ref.u[next], ref.v[next], plan.p);
          prev_step = n;
          ++next;
        }
        if (snapshot && snapshot_every > 0 && n % snapshot_every == 0) snapshot(row.N, s, n);
      };
      row.records = run(s0, plan.T, result.dt, opt).records;
      row.err_L2 = std::sqrt(e2);
      row.err_grad_Lp = std::pow(ep, 1.0 / plan.p);
      energy_summary(row, kinetic_energy(s0), row.records, s0.t);
    } catch (const std::exception &e) {
      row.error = e.what();
    }
  };

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const int nthreads = std::max(1, std::min<int>(workers, int(plan.N_list.size())));
  for (int w = 0; w < nthreads; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < plan.N_list.size(); k = next++) job(k);
    });
  for (std::thread &t : pool) t.join();
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---------------------------------------------------------------------------
// Capacity
//
// Nodal P1 field on the grid nodes, each cell split along its (0,0)-(1,1)
// diagonal. Lower triangle: ∇v = (v10 - v00, v11 - v10)/h, upper triangle:
// ∇v = (v11 - v01, v01 - v00)/h, both of area h²/2.

namespace {

struct CapacityProblem {
  int nx, ny;  // cells
  double h;
  double p;
  std::vector<char> fixed;
  Vector v;

  std::size_t at(int i, int j) const { return std::size_t(j) * (nx + 1) + i; }

  template <class F>
  void for_triangles(const Vector &x, F &&f) const {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t n00 = at(i, j), n10 = n00 + 1, n01 = at(i, j + 1), n11 = n01 + 1;
        f(i, j, false, n00, n10, n11, (x[n10] - x[n00]) / h, (x[n11] - x[n10]) / h);
        f(i, j, true, n01, n00, n11, (x[n11] - x[n01]) / h, (x[n01] - x[n00]) / h);
      }
  }

  double energy(const Vector &x) const {
    double e = 0.0;
    for_triangles(x, [&](int, int, bool, std::size_t, std::size_t, std::size_t, double a, double b) {
      e += std::pow(a * a + b * b, 0.5 * p);
    });
    return 0.5 * h * h * e;
  }

  // Accumulate (∂/∂x) of Σ (h²/2) (a da + b db) style bilinear terms. For a
  // lower triangle (n00, n10, n11): a = (x10 - x00)/h, b = (x11 - x10)/h;
  // for an upper one (n01, n00, n11): a = (x11 - x01)/h, b = (x01 - x00)/h.
  static void scatter(Vector &out, bool upper, std::size_t n0, std::size_t n1, std::size_t n2, double ca, double cb) {
    if (!upper) {
      out[n1] += ca - cb;
      out[n0] -= ca;
      out[n2] += cb;
    } else {
      out[n2] += ca;
      out[n0] += cb - ca;
      out[n1] -= cb;
    }
  }

  Vector gradient(const Vector &x) const {
    Vector g(x.size(), 0.0);
    const double s = 0.5 * h * p;
    for_triangles(x, [&](int, int, bool up, std::size_t n0, std::size_t n1, std::size_t n2, double a, double b) {
      const double w = std::pow(a * a + b * b, 0.5 * (p - 2.0));
      scatter(g, up, n0, n1, n2, s * w * a, s * w * b);
    });
    for (std::size_t k = 0; k < g.size(); ++k)
      if (fixed[k]) g[k] = 0.0;
    return g;
  }
};

}  // namespace

double capacity_probe(double p, const RestrictionConfig &cfg, const Grid2 &g) {
  if (!(p >= 2.0)) throw std::invalid_argument("capacity exponent must be >= 2");
  if (cfg.size() == 0) return 0.0;
  CapacityProblem P{g.nx(), g.ny(), g.h(), p, {}, {}};
  const std::size_t n = std::size_t(g.nx() + 1) * (g.ny() + 1);
  P.fixed.assign(n, 0);
  P.v.assign(n, 0.0);
  auto node = [&](int i, int j) { return Vec2{g.origin().x + i * g.h(), g.origin().y + j * g.h()}; };
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      const std::size_t k = P.at(i, j);
      if (i == 0 || j == 0 || i == g.nx() || j == g.ny()) {
        P.fixed[k] = 1;
        continue;
      }
      for (std::size_t b = 0; b < cfg.size(); ++b)
        if (norm(node(i, j) - cfg.centers()[b]) <= cfg.radii()[b]) P.fixed[k] = 1, P.v[k] = 1.0;
    }
  // balls below a cell still pin their nearest node
  for (std::size_t b = 0; b < cfg.size(); ++b) {
    const int i = std::clamp(int(std::lround((cfg.centers()[b].x - g.origin().x) / g.h())), 1, g.nx() - 1);
    const int j = std::clamp(int(std::lround((cfg.centers()[b].y - g.origin().y) / g.h())), 1, g.ny() - 1);
    P.fixed[P.at(i, j)] = 1;
    P.v[P.at(i, j)] = 1.0;
  }

  // Hessian with per-triangle weights w_T = p |g|^{p-2} (regularised) and
  // the anisotropic part (p-2)(ĝ·δg)ĝ folded into (gx, gy).
  struct Tri {
    double w, gx, gy;
  };
  const int nx = g.nx(), ny = g.ny();
  const double h = g.h();
  std::vector<Tri> tri(std::size_t(2) * nx * ny);
  // The node grid is padded with inert cells to m 2^k per side so the
  // multigrid hierarchy reaches a small coarsest level.
  auto padded = [](int n) {
    int k = 0;
    while ((n >> k) > 16) ++k;
    const int m = (n + (1 << k) - 1) >> k;
    return m << k;
  };
  const int px = padded(nx + 1), py = padded(ny + 1);
  FivePoint pre(px, py);

  auto build = [&](const Vector &x) {
    double gmax2 = 0.0;
    P.for_triangles(x, [&](int, int, bool, std::size_t, std::size_t, std::size_t, double a, double b) {
      gmax2 = std::max(gmax2, a * a + b * b);
    });
    const double eps2 = 1e-12 * gmax2;
    std::size_t t = 0;
    P.for_triangles(x, [&](int, int, bool, std::size_t, std::size_t, std::size_t, double a, double b) {
      const double m2 = a * a + b * b + eps2;
      const double s = std::sqrt((P.p - 2.0) / m2);
      tri[t++] = {P.p * std::pow(m2, 0.5 * (P.p - 2.0)), a * s, b * s};
    });
    // five-point part (scalar weights only) as preconditioner
    pre = FivePoint(px, py);
    for (double &d : pre.diag) d = 1.0;
    auto tw = [&](int i, int j, bool upper) {
      if (i < 0 || j < 0 || i >= nx || j >= ny) return 0.0;
      return tri[(std::size_t(j) * nx + i) * 2 + (upper ? 1 : 0)].w;
    };
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        const std::size_t k = P.at(i, j), q = pre.at(i, j);
        if (P.fixed[k]) continue;
        pre.diag[q] = 0.0;
        // every edge of a free node adds to its diagonal; couplings only
        // between free nodes
        const double east = 0.5 * (tw(i, j, false) + tw(i, j - 1, true));
        const double west = 0.5 * (tw(i - 1, j, false) + tw(i - 1, j - 1, true));
        const double north = 0.5 * (tw(i, j, true) + tw(i - 1, j, false));
        const double south = 0.5 * (tw(i, j - 1, true) + tw(i - 1, j - 1, false));
        pre.diag[q] = east + west + north + south;
        if (i < nx && !P.fixed[k + 1]) pre.ax[q] = east;
        if (j < ny && !P.fixed[k + std::size_t(nx + 1)]) pre.ay[q] = north;
      }
  };
  auto hessian = [&](const Vector &d, Vector &out) {
    out.assign(d.size(), 0.0);
    std::size_t t = 0;
    const double s = 0.5 * h;
    P.for_triangles(d, [&](int, int, bool up, std::size_t n0, std::size_t n1, std::size_t n2, double a, double b) {
      const Tri &T = tri[t++];
      const double proj = T.gx * a + T.gy * b;
      CapacityProblem::scatter(out, up, n0, n1, n2, s * T.w * (a + proj * T.gx), s * T.w * (b + proj * T.gy));
    });
    for (std::size_t k = 0; k < d.size(); ++k)
      if (P.fixed[k]) out[k] = d[k];
  };

  CgOptions cg;
  cg.abs_tol = 0.0;
  cg.rel_tol = 1e-10;
  cg.max_iterations = 50000;

  // Damped Newton; the harmonic field (p = 2, one exact step) starts the
  // p > 2 iteration.
  auto newton = [&](double pe, int max_it) {
    P.p = pe;
    for (int it = 0; it < max_it; ++it) {
      build(P.v);
      const Vector grad = P.gradient(P.v);
      Vector rhs(grad.size());
      for (std::size_t k = 0; k < grad.size(); ++k) rhs[k] = -grad[k];
      Vector step(P.v.size(), 0.0);
      const MultigridPreconditioner mg(pre, 1);
      Vector rp(pre.diag.size(), 0.0), zp;
      auto precond = [&](const Vector &r, Vector &z) {
        for (int j = 0; j <= ny; ++j)
          for (int i = 0; i <= nx; ++i) rp[pre.at(i, j)] = r[P.at(i, j)];
        mg(rp, zp);
        z.resize(r.size());
        for (int j = 0; j <= ny; ++j)
          for (int i = 0; i <= nx; ++i) z[P.at(i, j)] = zp[pre.at(i, j)];
      };
      if (!pcg(hessian, precond, rhs, step, cg).converged) throw std::runtime_error("capacity solve did not converge");
      const double e0 = P.energy(P.v);
      const double decrement = -dot(grad, step);
      if (decrement <= 1e-12 * e0) return;
      double alpha = 1.0;
      Vector trial(P.v.size());
      for (int ls = 0; ls < 50; ++ls, alpha *= 0.5) {
        for (std::size_t k = 0; k < trial.size(); ++k) trial[k] = P.v[k] + alpha * step[k];
        if (P.energy(trial) <= e0 - 1e-4 * alpha * decrement) break;
      }
      P.v.swap(trial);
      if (std::abs(e0 - P.energy(P.v)) <= 1e-10 * e0) return;
    }
  };
  newton(2.0, 2);
  if (p > 2.0) newton(p, 100);
  P.p = p;
  return P.energy(P.v);
}

}  // namespace fsilab
