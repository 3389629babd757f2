#include "fsilab/restriction.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "fsilab/linalg.hpp"

namespace fsilab {

// ---------------------------------------------------------------------------
// Cutoff

namespace {

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double exp_bump(double s) { return s > 0.0 ? std::exp(-1.0 / s) : 0.0; }

}  // namespace

double Cutoff::value(double z) const {
  const double t = 2.0 * (z - 0.25);
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  if (kind_ == Kind::polynomial) return smoothstep(t);
  const double a = exp_bump(t), b = exp_bump(1.0 - t);
  return a / (a + b);
}

double Cutoff::derivative(double z) const {
  const double t = 2.0 * (z - 0.25);
  if (t <= 0.0 || t >= 1.0) return 0.0;
  if (kind_ == Kind::polynomial) return 2.0 * 6.0 * t * (1.0 - t);
  const double a = exp_bump(t), b = exp_bump(1.0 - t);
  const double da = a / (t * t), db = -b / ((1.0 - t) * (1.0 - t));
  return 2.0 * (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
}

// ---------------------------------------------------------------------------
// Configuration

RestrictionConfig::RestrictionConfig(std::vector<Vec2> centers, std::vector<double> radii)
    : centers_(std::move(centers)), radii_(std::move(radii)) {
  if (centers_.size() != radii_.size()) throw RestrictionError("centers and radii differ in length");
  for (std::size_t n = 0; n < radii_.size(); ++n) {
    if (!(radii_[n] > 0.0)) throw RestrictionError("radii must be positive");
    if (n > 0 && radii_[n] < radii_[n - 1]) throw RestrictionError("radii must be ascending");
  }
}

double RestrictionConfig::stage_radius(std::size_t n) const { return std::pow(5.0, double(n)) * radii_.at(n); }

double RestrictionConfig::lemma_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  const std::size_t N = size();
  for (std::size_t k = 0; k + 1 < N; ++k)
    for (std::size_t i = k + 1; i < N; ++i) {
      const double lhs = norm(centers_[k] - centers_[i]) + 2.0 * stage_radius(k);
      const double rhs = std::pow(5.0, double(k + 1)) * radii_[i];
      margin = std::min(margin, std::abs(lhs - rhs));
    }
  return margin;
}

bool RestrictionConfig::has_nested_case() const {
  const std::size_t N = size();
  for (std::size_t k = 0; k + 1 < N; ++k)
    for (std::size_t i = k + 1; i < N; ++i)
      if (norm(centers_[k] - centers_[i]) + 2.0 * stage_radius(k) <= std::pow(5.0, double(k + 1)) * radii_[i])
        return true;
  return false;
}

// ---------------------------------------------------------------------------
// E_r

namespace {

struct CellBox {
  int i0, i1, j0, j1;  // inclusive cell ranges
  int nx() const { return i1 - i0 + 1; }
  int ny() const { return j1 - j0 + 1; }
};

CellBox box_around(const Grid2 &g, Vec2 c, double radius) {
  const double h = g.h();
  const Vec2 o = g.origin();
  return {std::max(0, int(std::floor((c.x - radius - o.x) / h)) - 1),
          std::min(g.nx() - 1, int(std::ceil((c.x + radius - o.x) / h)) + 1),
          std::max(0, int(std::floor((c.y - radius - o.y) / h)) - 1),
          std::min(g.ny() - 1, int(std::ceil((c.y + radius - o.y) / h)) + 1)};
}

void require_inside(const Grid2 &g, Vec2 c, double radius) {
  const Vec2 lo = g.origin();
  const double m = g.h();
  if (c.x - radius < lo.x + m || c.x + radius > lo.x + g.lx() - m || c.y - radius < lo.y + m ||
      c.y + radius > lo.y + g.ly() - m)
    throw RestrictionError("ball exceeds grid");
}

/// Outer edge (in units of r) of the correction band. A layer of width 2h
/// inside the outer sphere is kept free whenever that leaves the source
/// band t < 1.75 + h/2r covered; then centred differences taken outside
/// B_2r never see the correction.
double band_edge(double r, double h) {
  const double q = h / r;
  return 2.0 - std::max(0.0, std::min(2.0 * q, 0.2 - 0.5 * q));
}

/// Weight of the annular solve: positive on 1 < t < edge, zero at both rims.
double annulus_bump(double t, double edge) {
  if (t <= 1.0 || t >= edge) return 0.0;
  const double s = std::sin(std::numbers::pi * (t - 1.0) / (edge - 1.0));
  return s * s;
}

}  // namespace

VecField apply_E(const VecField &u, double r, Vec2 center, const RestrictionOptions &opt) {
  if (!(r > 0.0)) throw RestrictionError("radius must be positive");
  const Grid2 &g = u.grid();
  const Vec2 avg = ball_average(u, center, r);
  const Cutoff &H = opt.cutoff;
  VecField out = u;
  const CellBox box = box_around(g, center, 1.75 * r);
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1 + 1; ++i) {
      const double t = norm(g.u_face(i, j) - center) / r;
      if (t >= 1.75) continue;
      out.u(i, j) = avg.x * H.value(2.0 - t) + u.u(i, j) * H.value(t - 1.0);
    }
  for (int j = box.j0; j <= box.j1 + 1; ++j)
    for (int i = box.i0; i <= box.i1; ++i) {
      const double t = norm(g.v_face(i, j) - center) / r;
      if (t >= 1.75) continue;
      out.v(i, j) = avg.y * H.value(2.0 - t) + u.v(i, j) * H.value(t - 1.0);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Annular right inverse of the divergence

VecField bogovskii_annulus(const ScalarField &f, double r, Vec2 center, const RestrictionOptions &opt,
                           double mean_floor) {
  const Grid2 &g = f.grid();
  const double h = g.h();
  if (!(r >= 2.5 * h)) throw RestrictionError("unresolved annulus");
  require_inside(g, center, 2.0 * r);

  const CellBox box = box_around(g, center, 2.0 * r);
  const int bx = box.nx(), by = box.ny();
  const double edge = band_edge(r, h);
  std::vector<double> bump(std::size_t(bx) * by, 0.0);
  for (int j = 0; j < by; ++j)
    for (int i = 0; i < bx; ++i)
      bump[std::size_t(j) * bx + i] = annulus_bump(norm(g.cell_center(box.i0 + i, box.j0 + j) - center) / r, edge);

  // Weighted graph Laplacian on the annulus cells.
  FivePoint L(bx, by);
  const double inv_h2 = 1.0 / (h * h);
  for (int j = 0; j < by; ++j)
    for (int i = 0; i < bx; ++i) {
      const std::size_t c = L.at(i, j);
      if (i + 1 < bx) {
        const double w = bump[c] * bump[c + 1] * inv_h2;
        L.ax[c] = w;
        L.diag[c] += w;
        L.diag[c + 1] += w;
      }
      if (j + 1 < by) {
        const double w = bump[c] * bump[c + bx] * inv_h2;
        L.ay[c] = w;
        L.diag[c] += w;
        L.diag[c + bx] += w;
      }
    }

  // Source restricted to the active cells; anything outside is an error.
  double fmax = 0.0, fsum = 0.0, fabs_sum = 0.0;
  for (double x : f.data()) fmax = std::max(fmax, std::abs(x));
  Vector rhs(L.diag.size(), 0.0);
  std::size_t active = 0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double x = f(i, j);
      const bool in_box = i >= box.i0 && i <= box.i1 && j >= box.j0 && j <= box.j1;
      const std::size_t c = in_box ? L.at(i - box.i0, j - box.j0) : 0;
      if (!in_box || L.diag[c] == 0.0) {
        if (std::abs(x) > 1e-13 * std::max(1.0, fmax)) throw RestrictionError("source outside annulus");
        continue;
      }
      rhs[c] = -x;
      fsum += x;
      fabs_sum += std::abs(x);
    }
  for (double d : L.diag)
    if (d > 0.0) ++active;

  VecField v(g);
  if (fabs_sum == 0.0) return v;
  const double area = h * h;
  if (std::abs(fsum) * area > 1e-8 * fabs_sum * area + mean_floor) throw RestrictionError("incompatible mean");
  const double mean = fsum / double(active);
  for (std::size_t c = 0; c < rhs.size(); ++c)
    if (L.diag[c] > 0.0) rhs[c] += mean;

  MicPreconditioner M(L);
  Vector lambda(rhs.size(), 0.0);
  CgOptions cg;
  cg.abs_tol = opt.solver_tol * std::max(1.0, fmax);
  cg.rel_tol = 0.0;
  cg.max_iterations = 50000;
  const CgResult res = pcg([&](const Vector &x, Vector &y) { L.apply(x, y); }, M, rhs, lambda, cg);
  if (!res.converged) throw RestrictionError("annulus solve did not converge");

  for (int j = 0; j < by; ++j)
    for (int i = 0; i + 1 < bx; ++i) {
      const std::size_t c = L.at(i, j);
      if (L.ax[c] == 0.0) continue;
      v.u(box.i0 + i + 1, box.j0 + j) = L.ax[c] * h * (lambda[c + 1] - lambda[c]);
    }
  for (int j = 0; j + 1 < by; ++j)
    for (int i = 0; i < bx; ++i) {
      const std::size_t c = L.at(i, j);
      if (L.ay[c] == 0.0) continue;
      v.v(box.i0 + i, box.j0 + j + 1) = L.ay[c] * h * (lambda[c + bx] - lambda[c]);
    }
  return v;
}

// ---------------------------------------------------------------------------
// R_r(h) and compositions

VecField apply_R(const VecField &u, Vec2 h, double r, const RestrictionOptions &opt) {
  const Grid2 &g = u.grid();
  if (!(r >= 2.5 * g.h())) throw RestrictionError("unresolved annulus");
  require_inside(g, h, 2.0 * r);
  VecField e = apply_E(u, r, h, opt);

  // Divergence of E on the open annulus band; elsewhere div E = div u.
  ScalarField f(g);
  const CellBox box = box_around(g, h, 2.0 * r);
  const double inv_h = 1.0 / g.h();
  const double edge = band_edge(r, g.h());
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1; ++i) {
      if (annulus_bump(norm(g.cell_center(i, j) - h) / r, edge) == 0.0) continue;
      f(i, j) = (e.u(i + 1, j) - e.u(i, j) + e.v(i, j + 1) - e.v(i, j)) * inv_h;
    }
  // Rounding in div E is relative to the velocity scale times the outer
  // perimeter; constant inputs must not trip the compatibility test. The
  // annulus mean also carries whatever divergence u already had in the
  // ball (solver residue of an earlier stage), so that is allowed too.
  double scale = 0.0, inherited = 0.0;
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1; ++i) {
      scale = std::max(scale, norm(e.at_cell(i, j)));
      inherited += std::abs(u.u(i + 1, j) - u.u(i, j) + u.v(i, j + 1) - u.v(i, j)) * g.h();
    }
  e -= bogovskii_annulus(f, r, h, opt, 1e-10 * scale * 4.0 * std::numbers::pi * r + inherited);
  return e;
}

VecField apply_RN(const VecField &u, const RestrictionConfig &cfg, const RestrictionOptions &opt) {
  VecField out = u;
  for (std::size_t k = cfg.size(); k-- > 0;) out = apply_R(out, cfg.centers()[k], cfg.stage_radius(k), opt);
  return out;
}

VecField central_difference(const VecField &u, int axis) {
  const Grid2 &g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  const double s = 0.5 / g.h();
  VecField out(g);
  auto uu = [&](int i, int j) { return (i < 0 || i > nx || j < 0 || j >= ny) ? 0.0 : u.u(i, j); };
  auto vv = [&](int i, int j) { return (i < 0 || i >= nx || j < 0 || j > ny) ? 0.0 : u.v(i, j); };
  const int di = axis == 0 ? 1 : 0, dj = axis == 0 ? 0 : 1;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i <= nx; ++i) out.u(i, j) = s * (uu(i + di, j + dj) - uu(i - di, j - dj));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i) out.v(i, j) = s * (vv(i + di, j + dj) - vv(i - di, j - dj));
  return out;
}

std::array<VecField, 2> h_derivative(const VecField &u, Vec2 h, double r, const RestrictionOptions &opt) {
  const VecField Ru = apply_R(u, h, r, opt);
  std::array<VecField, 2> out{VecField(u.grid()), VecField(u.grid())};
  for (int axis = 0; axis < 2; ++axis) {
    out[axis] = apply_R(central_difference(u, axis), h, r, opt);
    out[axis] -= central_difference(Ru, axis);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Random solenoidal fields

namespace {

/// u = ∂ψ/∂y, v = -∂ψ/∂x from node values ψ(i, j), (nx+1) x (ny+1).
VecField from_stream(const Grid2 &g, const std::vector<double> &psi) {
  const int nx = g.nx(), ny = g.ny();
  const double inv_h = 1.0 / g.h();
  auto P = [&](int i, int j) { return psi[std::size_t(j) * (nx + 1) + i]; };
  VecField out(g);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i <= nx; ++i) out.u(i, j) = (P(i, j + 1) - P(i, j)) * inv_h;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i) out.v(i, j) = -(P(i + 1, j) - P(i, j)) * inv_h;
  return out;
}

void normalize_max(VecField &u) {
  double m = 0.0;
  for (double x : u.u_data()) m = std::max(m, std::abs(x));
  for (double x : u.v_data()) m = std::max(m, std::abs(x));
  if (m > 0.0) u *= 1.0 / m;
}

}  // namespace

VecField SolenoidalSampler::global(const Grid2 &g, int modes) {
  std::normal_distribution<double> N01;
  std::vector<double> a(std::size_t(modes) * modes);
  for (int m = 1; m <= modes; ++m)
    for (int n = 1; n <= modes; ++n) a[std::size_t(m - 1) * modes + n - 1] = N01(rng_) / double(m * m + n * n);
  const int nx = g.nx(), ny = g.ny();
  std::vector<double> psi(std::size_t(nx + 1) * (ny + 1), 0.0);
  std::vector<double> sx(std::size_t(modes) * (nx + 1)), sy(std::size_t(modes) * (ny + 1));
  for (int m = 1; m <= modes; ++m) {
    for (int i = 0; i <= nx; ++i) sx[std::size_t(m - 1) * (nx + 1) + i] = std::sin(m * std::numbers::pi * i / nx);
    for (int j = 0; j <= ny; ++j) sy[std::size_t(m - 1) * (ny + 1) + j] = std::sin(m * std::numbers::pi * j / ny);
  }
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      double s = 0.0;
      for (int m = 0; m < modes; ++m)
        for (int n = 0; n < modes; ++n)
          s += a[std::size_t(m) * modes + n] * sx[std::size_t(m) * (nx + 1) + i] * sy[std::size_t(n) * (ny + 1) + j];
      psi[std::size_t(j) * (nx + 1) + i] = s;
    }
  VecField u = from_stream(g, psi);
  normalize_max(u);
  return u;
}

VecField SolenoidalSampler::localized(const Grid2 &g, Vec2 center, double scale, int modes) {
  std::normal_distribution<double> N01;
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  struct Mode {
    double kx, ky, a, phi;
  };
  std::vector<Mode> ms;
  for (int m = -modes; m <= modes; ++m)
    for (int n = 0; n <= modes; ++n) {
      if (n == 0 && m < 0) continue;
      const double k2 = double(m * m + n * n);
      ms.push_back({std::numbers::pi * m / scale, std::numbers::pi * n / scale, N01(rng_) / (1.0 + k2), phase(rng_)});
    }
  const int nx = g.nx(), ny = g.ny();
  std::vector<double> psi(std::size_t(nx + 1) * (ny + 1), 0.0);
  const double hg = g.h();
  const Vec2 o = g.origin();
  const int i0 = std::max(0, int(std::floor((center.x - scale - o.x) / hg)));
  const int i1 = std::min(nx, int(std::ceil((center.x + scale - o.x) / hg)));
  const int j0 = std::max(0, int(std::floor((center.y - scale - o.y) / hg)));
  const int j1 = std::min(ny, int(std::ceil((center.y + scale - o.y) / hg)));
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const Vec2 d = g.node(i, j) - center;
      const double s2 = dot(d, d) / (scale * scale);
      if (s2 >= 1.0) continue;
      const double bump = std::exp(1.0 - 1.0 / (1.0 - s2));
      double s = 0.0;
      for (const Mode &m : ms) s += m.a * std::cos(m.kx * d.x + m.ky * d.y + m.phi);
      psi[std::size_t(j) * (nx + 1) + i] = bump * s;
    }
  VecField u = from_stream(g, psi);
  normalize_max(u);
  return u;
}

// ---------------------------------------------------------------------------
// Norm measurement

namespace {

using Mask = std::function<bool(Vec2)>;

double masked_lp(const VecField &u, double p, const Mask &in) {
  const Grid2 &g = u.grid();
  double acc = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (!in(g.cell_center(i, j))) continue;
      const double a = norm(u.at_cell(i, j));
      acc = std::isinf(p) ? std::max(acc, a) : acc + std::pow(a, p);
    }
  return std::isinf(p) ? acc : std::pow(acc * g.cell_area(), 1.0 / p);
}

double masked_lp(const GradientField &G, double p, const Mask &in) {
  const Grid2 &g = G.grid;
  double acc = 0.0;
  auto add = [&](double x) {
    const double a = std::abs(x);
    acc = std::isinf(p) ? std::max(acc, a) : acc + std::pow(a, p);
  };
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      if (!in(g.cell_center(i, j))) continue;
      const std::size_t k = std::size_t(j) * g.nx() + i;
      add(G.du_dx[k]);
      add(G.dv_dy[k]);
    }
  std::size_t k = 0;
  for (int j = 1; j < g.ny(); ++j)
    for (int i = 1; i < g.nx(); ++i, ++k) {
      if (!in(g.node(i, j))) continue;
      add(G.du_dy[k]);
      add(G.dv_dx[k]);
    }
  return std::isinf(p) ? acc : std::pow(acc * g.cell_area(), 1.0 / p);
}

GradientField difference(GradientField a, const GradientField &b) {
  for (std::size_t k = 0; k < a.du_dx.size(); ++k) {
    a.du_dx[k] -= b.du_dx[k];
    a.dv_dy[k] -= b.dv_dy[k];
  }
  for (std::size_t k = 0; k < a.du_dy.size(); ++k) {
    a.du_dy[k] -= b.du_dy[k];
    a.dv_dx[k] -= b.dv_dx[k];
  }
  return a;
}

}  // namespace

NormReport measure_operator_norms(const RestrictionConfig &cfg, double p, const std::vector<VecField> &fields,
                                  const RestrictionOptions &opt) {
  if (cfg.size() == 0) throw RestrictionError("empty restriction configuration");
  NormReport rep;
  rep.N = cfg.size();
  rep.p = p;
  rep.r_min = cfg.radii().front();
  rep.trials = int(fields.size());

  const Mask everywhere = [](Vec2) { return true; };
  const Mask near_bodies = [&cfg](Vec2 x) {
    for (std::size_t n = 0; n < cfg.size(); ++n)
      if (norm(x - cfg.centers()[n]) < 2.0 * cfg.stage_radius(n)) return true;
    return false;
  };
  // 0/0 is skipped; the numerator counts as zero below rounding level.
  double noise = 0.0;
  auto update = [&rep, &noise](double &slot, double num, double den) {
    if (den == 0.0) {
      if (num > noise) slot = std::numeric_limits<double>::infinity();
      ++rep.skipped;
      return;
    }
    slot = std::max(slot, num / den);
  };

  for (const VecField &phi : fields) {
    const VecField Rphi = apply_RN(phi, cfg, opt);
    noise = 1e-9 * (1.0 + lp_norm(phi, p) / phi.grid().h());
    const GradientField G = gradient(phi);
    const GradientField GR = gradient(Rphi);
    update(rep.ratio_L, lp_norm(Rphi, p), lp_norm(phi, p));
    update(rep.ratio_W, lp_norm(GR, p), lp_norm(G, p));
    update(rep.error_ratio_L, masked_lp(Rphi - phi, p, everywhere), masked_lp(phi, p, near_bodies));
    update(rep.error_ratio_W, masked_lp(difference(GR, G), p, everywhere), masked_lp(G, p, near_bodies));
  }
  const double worst = std::max({rep.ratio_L, rep.ratio_W, rep.error_ratio_L, rep.error_ratio_W});
  rep.c_estimate = std::pow(worst, 1.0 / double(rep.N));
  rep.A1 = std::max(std::pow(rep.c_estimate, p), 25.0);
  return rep;
}

NormReport measure_operator_norms(const RestrictionConfig &cfg, double p, int trials, const Grid2 &g,
                                  std::uint64_t seed, const RestrictionOptions &opt) {
  if (trials < 1) throw RestrictionError("trials must be >= 1");
  if (cfg.size() == 0) throw RestrictionError("empty restriction configuration");
  SolenoidalSampler sampler(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.size() - 1);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> widen(1.0, 2.0);
  std::vector<VecField> fields;
  fields.reserve(std::size_t(trials));
  for (int t = 0; t < trials; ++t) {
    const std::size_t n = pick(sampler.rng());
    const double R = cfg.stage_radius(n);
    const double scale = widen(sampler.rng()) * R;
    const Vec2 c = cfg.centers()[n] + Vec2{unit(sampler.rng()), unit(sampler.rng())} * (0.5 * R);
    fields.push_back(sampler.localized(g, c, scale));
  }
  return measure_operator_norms(cfg, p, fields, opt);
}

// ---------------------------------------------------------------------------
// property suite

RestrictionConfig random_config(std::mt19937_64 &rng, const Grid2 &g, int N, bool nested) {
  if (N < 1 || N > 2) throw RestrictionError("random_config supports 1 or 2 bodies");
  const double h = g.h();
  const Vec2 lo = g.origin(), hi = g.origin() + Vec2{g.lx(), g.ly()};
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uniform = [&](double a, double b) { return a + (b - a) * U(rng); };
  // centre with B_R inside the grid, one cell to spare
  auto centre = [&](double R) {
    return Vec2{uniform(lo.x + R + h, hi.x - R - h), uniform(lo.y + R + h, hi.y - R - h)};
  };
  auto fits = [&](Vec2 c, double R) {
    return c.x - R >= lo.x && c.x + R <= hi.x && c.y - R >= lo.y && c.y + R <= hi.y;
  };
  const double rmin = 3.0 * h;
  const double half = 0.5 * std::min(g.lx(), g.ly()) - h;
  if (N == 1) {
    if (2.0 * rmin > half) throw RestrictionError("grid too coarse for a random configuration");
    const double r = uniform(rmin, std::max(rmin, half / 4.0));
    return RestrictionConfig({centre(2.0 * r)}, {r});
  }
  const double r2max = half / 10.0;
  if (r2max < rmin) throw RestrictionError("grid too coarse for a random configuration");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double r1 = uniform(rmin, r2max);
    const double r2 = uniform(r1, r2max);
    const Vec2 h2 = centre(10.0 * r2);
    Vec2 h1;
    if (nested) {
      const double dmax = 5.0 * r2 - 2.0 * r1 - 3.0 * h;
      if (dmax < 0.0) continue;
      const double d = dmax * std::sqrt(U(rng)), a = uniform(0.0, 2.0 * std::numbers::pi);
      h1 = h2 + Vec2{d * std::cos(a), d * std::sin(a)};
      if (!fits(h1, 2.0 * r1)) continue;
    } else {
      h1 = centre(2.0 * r1);
      if (norm(h1 - h2) + 2.0 * r1 < 5.0 * r2 + 3.0 * h) continue;
    }
    return RestrictionConfig({h1, h2}, {r1, r2});
  }
  throw RestrictionError("no random configuration found");
}

namespace {

double max_abs_divergence(const VecField &u) {
  double m = 0.0;
  for (double x : divergence(u).data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_face(const VecField &u) {
  double m = 0.0;
  for (double x : u.u_data()) m = std::max(m, std::abs(x));
  for (double x : u.v_data()) m = std::max(m, std::abs(x));
  return m;
}

double ball_stdev(const VecField &u, Vec2 c, double r) {
  const Grid2 &g = u.grid();
  std::vector<Vec2> vals;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (norm(g.cell_center(i, j) - c) < r) vals.push_back(u.at_cell(i, j));
  if (vals.empty()) return 0.0;
  // two passes; the one-pass formula loses half the digits
  Vec2 m;
  for (const Vec2 &v : vals) m += v;
  m = (1.0 / double(vals.size())) * m;
  double sx = 0.0, sy = 0.0;
  for (const Vec2 &v : vals) {
    sx += (v.x - m.x) * (v.x - m.x);
    sy += (v.y - m.y) * (v.y - m.y);
  }
  return std::sqrt(std::max(sx, sy) / double(vals.size()));
}

double outside_change(const VecField &u, const VecField &Ru, const RestrictionConfig &cfg) {
  const Grid2 &g = u.grid();
  auto outside = [&](Vec2 x) {
    for (std::size_t n = 0; n < cfg.size(); ++n)
      if (norm(x - cfg.centers()[n]) < 2.0 * cfg.stage_radius(n)) return false;
    return true;
  };
  double m = 0.0;
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i <= g.nx(); ++i)
      if (outside(g.u_face(i, j))) m = std::max(m, std::abs(Ru.u(i, j) - u.u(i, j)));
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      if (outside(g.v_face(i, j))) m = std::max(m, std::abs(Ru.v(i, j) - u.v(i, j)));
  return m;
}

}  // namespace

PropertyReport check_properties(const Grid2 &g, int configs, int fields, std::uint64_t seed,
                                const RestrictionOptions &opt) {
  if (configs < 1 || fields < 1) throw RestrictionError("configs and fields must be >= 1");
  PropertyReport rep;
  SolenoidalSampler sampler(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < configs; ++k) {
    const bool nested = k % 4 == 0;
    const int N = nested ? 2 : 1 + k % 2;
    const RestrictionConfig cfg = random_config(sampler.rng(), g, N, nested);
    rep.nested += cfg.has_nested_case() ? 1 : 0;
    VecField prev(g), Rprev(g);
    for (int f = 0; f < fields; ++f) {
      VecField u(g);
      if (f % 2 == 0) {
        u = sampler.global(g);
      } else {
        const std::size_t n = std::size_t(f / 2) % cfg.size();
        u = sampler.localized(g, cfg.centers()[n], (1.0 + U(sampler.rng())) * cfg.stage_radius(n));
      }
      const VecField Ru = apply_RN(u, cfg, opt);
      rep.max_divergence = std::max(rep.max_divergence, max_abs_divergence(Ru));
      rep.max_outside_change = std::max(rep.max_outside_change, outside_change(u, Ru, cfg));
      const double scale = 1.0 + max_abs_face(u);
      for (std::size_t n = 0; n < cfg.size(); ++n)
        rep.max_ball_stdev = std::max(rep.max_ball_stdev, ball_stdev(Ru, cfg.centers()[n], cfg.radii()[n]) / scale);
      if (f > 0) {
        const VecField lhs = apply_RN(2.0 * u + (-0.5) * prev, cfg, opt);
        rep.max_linearity = std::max(rep.max_linearity, max_abs_face(lhs - (2.0 * Ru + (-0.5) * Rprev)));
      }
      prev = u;
      Rprev = Ru;
      ++rep.fields;
    }
    ++rep.configs;
  }
  return rep;
}

}  // namespace fsilab
