// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Quantities are recomputed here from raw fields where
// possible instead of trusting the library's own diagnostics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fsilab/constitutive.hpp"
#include "fsilab/harness.hpp"
#include "fsilab/restriction.hpp"
#include "fsilab/solver.hpp"

using namespace fsilab;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string printf_str(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- field oracles -------------------------------------------------------

double max_div(const VecField &u) {
  const Grid2 &g = u.grid();
  double m = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      m = std::max(m, std::abs(u.u(i + 1, j) - u.u(i, j) + u.v(i, j + 1) - u.v(i, j)) / g.h());
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

/// Largest |a - b| over faces whose centre satisfies keep.
double face_diff(const VecField &a, const VecField &b, const std::function<bool(Vec2)> &keep) {
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

/// Largest per-component standard deviation of the cell velocity over cells
/// centred in B_r(c).
double ball_stdev(const VecField &u, Vec2 c, double r) {
  const Grid2 &g = u.grid();
  std::vector<double> xs, ys;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (norm(g.cell_center(i, j) - c) < r) {
        xs.push_back(0.5 * (u.u(i, j) + u.u(i + 1, j)));
        ys.push_back(0.5 * (u.v(i, j) + u.v(i, j + 1)));
      }
  auto sd = [](const std::vector<double> &v) {
    double m = 0.0, s = 0.0;
    for (double x : v) m += x;
    m /= double(v.size());
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size()));
  };
  return xs.empty() ? 0.0 : std::max(sd(xs), sd(ys));
}

/// Discrete L² norm of all first differences of the face values.
double grad_l2(const VecField &u) {
  const Grid2 &g = u.grid();
  double s = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      if (i < g.nx()) s += std::pow(u.u(i + 1, j) - u.u(i, j), 2);
      if (j + 1 < g.ny()) s += std::pow(u.u(i, j + 1) - u.u(i, j), 2);
    }
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (i + 1 < g.nx()) s += std::pow(u.v(i + 1, j) - u.v(i, j), 2);
      if (j < g.ny()) s += std::pow(u.v(i, j + 1) - u.v(i, j), 2);
    }
  return std::sqrt(s);
}

// ---- criteria --------------------------------------------------------------

Outcome restriction_suite() {
  const auto t0 = Clock::now();
  const Grid2 g(128, 128, 2.0, 2.0, {-1.0, -1.0});
  SolenoidalSampler sampler(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::uniform_int_distribution<int> modes(2, 8);

  std::vector<VecField> fields;
  for (int k = 0; k < 100; ++k) {
    if (k % 2 == 0) {
      fields.push_back(sampler.global(g, modes(sampler.rng())));
    } else {
      const Vec2 c{1.6 * U(sampler.rng()) - 0.8, 1.6 * U(sampler.rng()) - 0.8};
      fields.push_back(sampler.localized(g, c, 0.1 + 0.5 * U(sampler.rng())));
    }
  }

  std::mt19937_64 rng(77);
  int nested = 0;
  double worst_div = 0.0, worst_out = 0.0, worst_sd = 0.0;
  for (int k = 0; k < 20; ++k) {
    const bool want_nested = k % 4 == 0;
    const RestrictionConfig cfg = random_config(rng, g, want_nested ? 2 : 1 + k % 2, want_nested);
    // nested per the composition lemma: B_{2 r_1}(h_1) inside B_{5 r_2}(h_2)
    if (cfg.size() == 2 &&
        norm(cfg.centers()[0] - cfg.centers()[1]) + 2 * cfg.radii()[0] <= 5 * cfg.radii()[1])
      ++nested;
    auto outside = [&](Vec2 x) {
      for (std::size_t n = 0; n < cfg.size(); ++n)
        if (norm(x - cfg.centers()[n]) < 2 * std::pow(5.0, double(n)) * cfg.radii()[n]) return false;
      return true;
    };
    for (const VecField &u : fields) {
      const VecField R = apply_RN(u, cfg);
      worst_div = std::max(worst_div, max_div(R));
      worst_out = std::max(worst_out, face_diff(R, u, outside));
      for (std::size_t n = 0; n < cfg.size(); ++n)
        worst_sd = std::max(worst_sd, ball_stdev(R, cfg.centers()[n], cfg.radii()[n]) / (1 + max_abs(u)));
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = nested >= 5 && worst_div <= 1e-7 && worst_out == 0.0 && worst_sd <= 1e-8 && secs <= 300;
  o.detail = printf_str("100 fields x 20 configs (%d nested) at 128^2: max div %.2e, max change outside %.1e, "
                        "max ball stdev/(1+|u|) %.2e, %.0f s",
                        nested, worst_div, worst_out, worst_sd, secs);
  return o;
}

Outcome r_uniformity() {
  const Grid2 g(256, 256, 1.0, 1.0, {-0.5, -0.5});
  const Vec2 h{0.013, -0.007};
  std::vector<double> ratios;
  double worst_c = 0.0, A1 = 0.0;
  for (double r : {0.02, 0.04, 0.08}) {
    SolenoidalSampler s(17);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst = 0.0;
    std::vector<VecField> fields;
    for (int t = 0; t < 40; ++t) {
      const Vec2 c = h + Vec2{U(s.rng()) - 0.5, U(s.rng()) - 0.5} * r;
      fields.push_back(s.localized(g, c, (1.0 + U(s.rng())) * r));
      const VecField &phi = fields.back();
      worst = std::max(worst, grad_l2(apply_R(phi, h, r)) / grad_l2(phi));
    }
    ratios.push_back(worst);
    const NormReport rep = measure_operator_norms(RestrictionConfig({h}, {r}), 2.0, fields);
    worst_c = std::max(worst_c, rep.c_estimate);
    A1 = std::max(A1, rep.A1);
  }
  const double lo = *std::min_element(ratios.begin(), ratios.end());
  const double hi = *std::max_element(ratios.begin(), ratios.end());
  Outcome o;
  o.pass = hi <= 1.2 * lo;
  o.detail = printf_str("grad ratio at r = 0.02, 0.04, 0.08: %.4f %.4f %.4f (spread %.1f%%); c(2) ~ %.3f, A1 ~ %.1f",
                        ratios[0], ratios[1], ratios[2], 100 * (hi / lo - 1), worst_c, A1);
  return o;
}

Outcome h_derivative_fd() {
  const Grid2 g(128, 128, 2.0, 2.0, {-1.0, -1.0});
  const double r = 0.45;  // about 29 cells
  const Vec2 h{0.02, -0.03};
  const double d = g.h() / 4;
  SolenoidalSampler s(31);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0, worst_outside = 0.0;
  for (int t = 0; t < 20; ++t) {
    const VecField u = t % 4 == 0 ? s.global(g, 4) : s.localized(g, h + Vec2{U(s.rng()), U(s.rng())} * (0.3 * r), 1.3 * r);
    const auto D = h_derivative(u, h, r);
    for (int a = 0; a < 2; ++a) {
      const Vec2 e = a == 0 ? Vec2{d, 0.0} : Vec2{0.0, d};
      const VecField fd = (1.0 / (2 * d)) * (apply_R(u, h + e, r) - apply_R(u, h - e, r));
      worst = std::max(worst, l2(D[a] - fd) / l2(fd));
      worst_outside = std::max(worst_outside, face_diff(D[a], VecField(g), [&](Vec2 x) { return norm(x - h) >= 2 * r; }));
    }
  }
  Outcome o;
  o.pass = worst <= 0.05 && worst_outside == 0.0;
  o.detail = printf_str("20 fields, r = 29 cells: worst relative L2 mismatch %.2f%%, max outside B_2r %.1e", 100 * worst,
                        worst_outside);
  return o;
}

/// sup_t (s t - f(t)) by sampling and ternary refinement.
double brute_conjugate(const Potential &P, double s) {
  double best = 0.0, best_t = 0.0, hi = 1.0;
  while (P.profile_slope(hi) < s) hi *= 2.0;
  const int M = 4000;
  for (int k = 0; k <= M; ++k) {
    const double t = hi * k / M;
    if (s * t - P.profile(t) > best) best = s * t - P.profile(t), best_t = t;
  }
  double lo = std::max(0.0, best_t - hi / M), up = best_t + hi / M;
  for (int it = 0; it < 200; ++it) {
    const double a = lo + (up - lo) / 3, b = up - (up - lo) / 3;
    if (s * a - P.profile(a) < s * b - P.profile(b))
      lo = a;
    else
      up = b;
  }
  const double t = 0.5 * (lo + up);
  return std::max(best, s * t - P.profile(t));
}

Outcome constitutive_duality() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> U(0.1, 2.0), scale(-3.0, 1.0);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> kind(0, 3);
  auto tensor = [&](double a) { return SymTensor{a * n01(rng), a * n01(rng), a * n01(rng)}; };
  double worst_sel = -1e300, worst_neg = 1e300, biggest = 0.0;
  for (int k = 0; k < 1000; ++k) {
    Potential P = Potential::newtonian(1.0);
    switch (kind(rng)) {
      case 0: P = Potential::newtonian(U(rng)); break;
      case 1: P = Potential::powerlaw(U(rng), U(rng), 2.0 + U(rng)); break;
      case 2: P = Potential::powerlaw(0.0, U(rng), 2.0 + U(rng)); break;
      default: P = Potential::bingham(U(rng), U(rng)); break;
    }
    const SymTensor D = tensor(std::pow(10.0, scale(rng)));
    const SymTensor S = tensor(std::pow(10.0, scale(rng)));
    worst_sel = std::max(worst_sel, fenchel_gap(P, D, stress_select(P, D)));
    biggest = std::max(biggest, contract(stress_select(P, D), D));
    worst_neg = std::min(worst_neg, fenchel_gap(P, D, S));
  }
  // Bingham: conjugate is zero inside the yield ball, checked against brute force
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_bingham = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double yield = 0.2 + 2 * unit(rng), mu = 0.1 + unit(rng);
    const Potential B = Potential::bingham(yield, mu);
    const double s = yield * unit(rng), a = 2 * std::numbers::pi * unit(rng);
    // |S| = s for S = s (cos a, -cos a, sin a) / sqrt(2)
    const SymTensor S{s * std::cos(a) / std::sqrt(2.0), -s * std::cos(a) / std::sqrt(2.0), s * std::sin(a) / std::sqrt(2.0)};
    worst_bingham = std::max({worst_bingham, std::abs(conjugate(B, S)), brute_conjugate(B, s)});
  }
  Outcome o;
  o.pass = worst_sel <= 1e-8 && worst_neg >= -1e-8 && worst_bingham <= 1e-12;
  o.detail = printf_str("1000 triples (S:D up to %.1e): max gap at selection %.2e, min gap %.2e; "
                        "Bingham F* inside yield ball max %.1e",
                        biggest, worst_sel, worst_neg, worst_bingham);
  return o;
}

VecField vortex(const Grid2 &g) {
  const double pi = std::numbers::pi;
  // stream function sin²(πx) sin²(πy)
  return VecField::sample(g, [&](Vec2 x) {
    return Vec2{std::pow(std::sin(pi * x.x), 2) * 2 * pi * std::sin(pi * x.y) * std::cos(pi * x.y),
                -std::pow(std::sin(pi * x.y), 2) * 2 * pi * std::sin(pi * x.x) * std::cos(pi * x.x)};
  });
}

VecField vortex_run(int n, double T) {
  const Grid2 g(n, n, 1.0, 1.0);
  SimState s = make_state(vortex(g), Potential::newtonian(0.005), 1.0, Cloud{});
  project_state(s);
  return run(s, T, 0.1 / n).final.u;
}

/// L² distance between a coarse field and face averages of a fine one.
double coarse_error(const VecField &c, const VecField &f) {
  const Grid2 &g = c.grid();
  const int k = f.grid().nx() / g.nx();
  double e = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i) {
      double a = 0.0;
      for (int q = 0; q < k; ++q) a += f.u(i * k, j * k + q);
      e += std::pow(c.u(i, j) - a / k, 2);
    }
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double a = 0.0;
      for (int q = 0; q < k; ++q) a += f.v(i * k + q, j * k);
      e += std::pow(c.v(i, j) - a / k, 2);
    }
  return std::sqrt(e * g.cell_area());
}

Outcome solver_sanity() {
  // g = 0 with bodies, Newtonian and power-law
  bool monotone = true;
  double worst_div = 0.0, worst_rise = 0.0;
  int steps = 0;
  for (int which = 0; which < 2; ++which) {
    StudyPlan plan;
    plan.nx = plan.ny = 128;
    plan.potential = which == 0 ? Potential::newtonian(0.0025) : Potential::powerlaw(0.002, 0.001, 3.0);
    plan.p = plan.potential.p();
    const SimState s0 = build_scenario(plan, 4);
    const double dt = 0.8 * max_stable_dt(s0);
    RunOptions opt;
    const RunResult res = run(s0, 150 * dt, dt, opt);
    double K = kinetic_energy(s0);
    for (const EnergyRecord &r : res.records) {
      worst_rise = std::max(worst_rise, (r.kinetic - K) / K);
      monotone = monotone && r.kinetic <= K * (1 + 1e-12);
      worst_div = std::max(worst_div, r.divergence_max);
      K = r.kinetic;
      ++steps;
    }
    worst_div = std::max(worst_div, max_div(res.final.u));
  }

  // no-body self-convergence: 32 and 64 against a run 4x finer than 64
  const double T = 0.2;
  const VecField fine = vortex_run(256, T);
  const double e32 = coarse_error(vortex_run(32, T), fine);
  const double e64 = coarse_error(vortex_run(64, T), fine);
  const double order = std::log2(e32 / e64);

  Outcome o;
  o.pass = monotone && worst_div <= 1e-6 && order >= 0.8;
  o.detail = printf_str("%d steps with 4 bodies, g = 0: kinetic energy %s (largest relative rise %.1e), max div %.1e; "
                        "self-convergence vs 256^2: e32 %.4f, e64 %.4f, order %.2f",
                        steps, monotone ? "non-increasing" : "INCREASES", worst_rise, worst_div, e32, e64, order);
  return o;
}

Outcome headline() {
  const int workers = study_workers();
  std::ostringstream detail;
  bool pass = true;

  StudyPlan plan;  // Newtonian, A = 2, 256², N = 1 2 4 6 8, T = 0.5
  const StudyResult newt = run_study(plan, workers);
  std::vector<double> err;
  for (const StudyRow &r : newt.rows) {
    if (!r.error.empty()) {
      pass = false;
      detail << "N=" << r.N << " failed: " << r.error << "; ";
    }
    err.push_back(r.err_L2);
  }
  bool nonincreasing = true;
  for (std::size_t k = 1; k < err.size(); ++k) nonincreasing = nonincreasing && err[k] <= 1.1 * err[k - 1];
  const bool halved = err.back() <= 0.5 * err.front();
  pass = pass && nonincreasing && halved && newt.seconds <= 1800;
  detail << "Newtonian err_L2 N=1..8:";
  for (double e : err) detail << printf_str(" %.4g", e);
  detail << printf_str(" (%s, err8/err1 %.3f, %.0f s)", nonincreasing ? "non-increasing" : "NOT monotone",
                       err.back() / err.front(), newt.seconds);

  StudyPlan pl = plan;
  pl.potential = Potential::powerlaw(0.002, 2e-6, 3.0);
  pl.p = 3.0;
  const StudyResult pow3 = run_study(pl, workers);
  std::vector<double> eg;
  for (const StudyRow &r : pow3.rows) {
    if (!r.error.empty()) {
      pass = false;
      detail << "; p=3 N=" << r.N << " failed: " << r.error;
    }
    eg.push_back(r.err_grad_Lp);
  }
  pass = pass && eg.back() <= 0.7 * eg.front() && pow3.seconds <= 1800;
  detail << "; p=3 err_grad_Lp N=1..8:";
  for (double e : eg) detail << printf_str(" %.4g", e);
  detail << printf_str(" (ratio %.3f, %.0f s); %d workers", eg.back() / eg.front(), pow3.seconds, workers);

  Outcome o;
  o.pass = pass;
  o.detail = detail.str();
  return o;
}

Outcome capacity_contrast() {
  const Grid2 g(1024, 1024, 1.0, 1.0);
  const std::vector<double> radii{0.04, 0.016, 0.0064, 0.00256};
  std::vector<double> c2, c3;
  for (double r : radii) {
    const RestrictionConfig ball({{0.5, 0.5}}, {r});
    c2.push_back(capacity_probe(2.0, ball, g));
    c3.push_back(capacity_probe(3.0, ball, g));
  }
  const double kept = c3.back() / c3.front(), drop = c2.front() / c2.back();
  Outcome o;
  o.pass = kept >= 0.5 && drop >= 2.0;
  o.detail = printf_str("r = 0.04 -> 0.00256 at 1024^2: p=3 cap %.3f -> %.3f (kept %.2f), p=2 cap %.3f -> %.3f "
                        "(dropped %.2fx)",
                        c3.front(), c3.back(), kept, c2.front(), c2.back(), drop);
  return o;
}

Outcome hypothesis_checks() {
  StudyPlan base;
  base.nx = base.ny = 64;
  auto rejected = [](const StudyPlan &p, int N) -> std::string {
    try {
      build_scenario(p, N);
    } catch (const ScenarioError &e) {
      const std::string what = e.what();
      return what.find("(" + e.hypothesis() + ")") != std::string::npos ? e.hypothesis() : "unnamed";
    }
    return "accepted";
  };
  StudyPlan i1 = base, w9 = base, w10 = base, w14 = base;
  i1.radii = {0.1, 0.08};
  w9.heavy_beta = 2.0;
  w10.lambda = 3.5;
  w14.radii = {0.1, 0.1, 0.1, 0.1};
  const std::string a = rejected(base, 4), b = rejected(i1, 2), c = rejected(w9, 4), d = rejected(w10, 4),
                    e = rejected(w14, 4);
  Outcome o;
  o.pass = a == "accepted" && b == "i1" && c == "w9" && d == "w10" && e == "w14";
  o.detail = "valid plan " + a + "; violations reported as " + b + ", " + c + ", " + d + ", " + e;
  return o;
}

}  // namespace

int main(int argc, char **argv) {
  // optional argument: run only criteria whose name contains it
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<const char *, Outcome (*)()>> criteria{
      {"restriction suite", restriction_suite},     {"uniformity in r", r_uniformity},
      {"h-derivative vs finite differences", h_derivative_fd},
      {"constitutive duality", constitutive_duality}, {"solver sanity", solver_sanity},
      {"N-body study", headline},                    {"capacity contrast", capacity_contrast},
      {"hypothesis checkers", hypothesis_checks},
  };
  int failed = 0;
  for (const auto &[name, fn] : criteria) {
    if (std::string(name).find(only) == std::string::npos) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception &e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
