#include "fsilab/solver.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "fsilab/linalg.hpp"

namespace fsilab {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Vec3 = std::array<double, 3>;

Mat3 inverse3(const Mat3 &m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  double scale = 0.0;
  for (const auto &row : m)
    for (double x : row) scale = std::max(scale, std::abs(x));
  if (!(std::abs(det) > 1e-13 * scale * scale * scale)) throw BodyError("degenerate body");
  Mat3 r;
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

Vec3 mul(const Mat3 &m, const Vec3 &x) {
  Vec3 y{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) y[a] += m[a][b] * x[b];
  return y;
}

double max_abs_field(const VecField &u) {
  double m = 0.0;
  for (double x : u.u_data()) m = std::max(m, std::abs(x));
  for (double x : u.v_data()) m = std::max(m, std::abs(x));
  return m;
}

void zero_walls(VecField &u) {
  const Grid2 &g = u.grid();
  for (int j = 0; j < g.ny(); ++j) u.u(0, j) = u.u(g.nx(), j) = 0.0;
  for (int i = 0; i < g.nx(); ++i) u.v(i, 0) = u.v(i, g.ny()) = 0.0;
}

/// Face masses ρ_face h², zero on wall faces.
struct FaceMass {
  std::vector<double> mu, mv;
};

FaceMass face_mass(const ScalarField &rho) {
  const Grid2 &g = rho.grid();
  const int nx = g.nx(), ny = g.ny();
  const double a = g.cell_area();
  FaceMass m{std::vector<double>(std::size_t(nx + 1) * ny, 0.0), std::vector<double>(std::size_t(nx) * (ny + 1), 0.0)};
  for (int j = 0; j < ny; ++j)
    for (int i = 1; i < nx; ++i) m.mu[std::size_t(j) * (nx + 1) + i] = 0.5 * (rho(i - 1, j) + rho(i, j)) * a;
  for (int j = 1; j < ny; ++j)
    for (int i = 0; i < nx; ++i) m.mv[std::size_t(j) * nx + i] = 0.5 * (rho(i, j - 1) + rho(i, j)) * a;
  return m;
}

// ---------------------------------------------------------------------------
// Strain and viscous operator
//
// Normal strains live at cells, the shear strain at nodes (walls by
// no-slip reflection). The discrete dissipation is
//   Φ(u) = Σ_c h² 2μ_c (D11² + D22²) + Σ_n a_n 4 μ_n D12²,
// with a_n the node control area and a_n μ_n = h²/4 Σ_{adjacent c} μ_c, so
// that Φ = Σ_c h² 2 μ_c s_c with s_c = D11² + D22² + 2 avg_corners D12².

struct Strain {
  std::vector<double> d11, d22;  // cells
  std::vector<double> d12;       // nodes (nx+1) x (ny+1)
};

Strain strain(const VecField &u) {
  const Grid2 &g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  const double ih = 1.0 / g.h();
  Strain s{std::vector<double>(g.cells()), std::vector<double>(g.cells()),
           std::vector<double>(std::size_t(nx + 1) * (ny + 1), 0.0)};
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = std::size_t(j) * nx + i;
      s.d11[c] = (u.u(i + 1, j) - u.u(i, j)) * ih;
      s.d22[c] = (u.v(i, j + 1) - u.v(i, j)) * ih;
    }
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      double dudy = 0.0, dvdx = 0.0;
      if (i > 0 && i < nx) {
        if (j == 0)
          dudy = 2.0 * u.u(i, 0) * ih;
        else if (j == ny)
          dudy = -2.0 * u.u(i, ny - 1) * ih;
        else
          dudy = (u.u(i, j) - u.u(i, j - 1)) * ih;
      }
      if (j > 0 && j < ny) {
        if (i == 0)
          dvdx = 2.0 * u.v(0, j) * ih;
        else if (i == nx)
          dvdx = -2.0 * u.v(nx - 1, j) * ih;
        else
          dvdx = (u.v(i, j) - u.v(i - 1, j)) * ih;
      }
      s.d12[std::size_t(j) * (nx + 1) + i] = 0.5 * (dudy + dvdx);
    }
  return s;
}

/// s_c = D11² + D22² + 2 avg_corners D12².
std::vector<double> cell_strain2(const Strain &s, const Grid2 &g) {
  const int nx = g.nx(), ny = g.ny();
  std::vector<double> out(g.cells());
  auto n2 = [&](int i, int j) {
    const double x = s.d12[std::size_t(j) * (nx + 1) + i];
    return x * x;
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = std::size_t(j) * nx + i;
      const double corners = 0.25 * (n2(i, j) + n2(i + 1, j) + n2(i, j + 1) + n2(i + 1, j + 1));
      out[c] = s.d11[c] * s.d11[c] + s.d22[c] * s.d22[c] + 2.0 * corners;
    }
  return out;
}

class ViscousOperator {
 public:
  ViscousOperator(const Grid2 &g, const std::vector<double> &mu_cell) : g_(g), mu_c_(mu_cell) {
    const int nx = g.nx(), ny = g.ny();
    const double a = 0.25 * g.cell_area();
    an_mu_.assign(std::size_t(nx + 1) * (ny + 1), 0.0);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double m = a * mu_c_[std::size_t(j) * nx + i];
        an_mu_[std::size_t(j) * (nx + 1) + i] += m;
        an_mu_[std::size_t(j) * (nx + 1) + i + 1] += m;
        an_mu_[std::size_t(j + 1) * (nx + 1) + i] += m;
        an_mu_[std::size_t(j + 1) * (nx + 1) + i + 1] += m;
      }
  }

  /// out = K u, the gradient of ½Φ; wall faces are left at zero.
  void apply(const VecField &u, VecField &out) const {
    const int nx = g_.nx(), ny = g_.ny();
    const double h = g_.h(), ih = 1.0 / h;
    std::fill(out.u_data().begin(), out.u_data().end(), 0.0);
    std::fill(out.v_data().begin(), out.v_data().end(), 0.0);
    const Strain s = strain(u);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t c = std::size_t(j) * nx + i;
        const double w = 2.0 * mu_c_[c] * h;  // h² · 2μ · (1/h)
        out.u(i + 1, j) += w * s.d11[c];
        out.u(i, j) -= w * s.d11[c];
        out.v(i, j + 1) += w * s.d22[c];
        out.v(i, j) -= w * s.d22[c];
      }
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        const std::size_t n = std::size_t(j) * (nx + 1) + i;
        // ∂(½Φ)/∂D12 = 4 a_n μ_n D12, and ∂D12/∂(dudy) = ½
        const double t = 2.0 * an_mu_[n] * s.d12[n] * ih;
        if (i > 0 && i < nx) {
          if (j == 0)
            out.u(i, 0) += 2.0 * t;
          else if (j == ny)
            out.u(i, ny - 1) -= 2.0 * t;
          else {
            out.u(i, j) += t;
            out.u(i, j - 1) -= t;
          }
        }
        if (j > 0 && j < ny) {
          if (i == 0)
            out.v(0, j) += 2.0 * t;
          else if (i == nx)
            out.v(nx - 1, j) -= 2.0 * t;
          else {
            out.v(i, j) += t;
            out.v(i - 1, j) -= t;
          }
        }
      }
    zero_walls(out);
  }

  VecField diagonal() const {
    const int nx = g_.nx(), ny = g_.ny();
    const double ih2 = 1.0 / g_.cell_area();
    VecField d(g_);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const double w = 2.0 * mu_c_[std::size_t(j) * nx + i];
        d.u(i + 1, j) += w;
        d.u(i, j) += w;
        d.v(i, j + 1) += w;
        d.v(i, j) += w;
      }
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        const double w = an_mu_[std::size_t(j) * (nx + 1) + i] * ih2;  // 4 a μ (½)² / h²
        if (i > 0 && i < nx) {
          if (j == 0)
            d.u(i, 0) += 4.0 * w;
          else if (j == ny)
            d.u(i, ny - 1) += 4.0 * w;
          else {
            d.u(i, j) += w;
            d.u(i, j - 1) += w;
          }
        }
        if (j > 0 && j < ny) {
          if (i == 0)
            d.v(0, j) += 4.0 * w;
          else if (i == nx)
            d.v(nx - 1, j) += 4.0 * w;
          else {
            d.v(i, j) += w;
            d.v(i - 1, j) += w;
          }
        }
      }
    return d;
  }

 private:
  Grid2 g_;
  std::vector<double> mu_c_;
  std::vector<double> an_mu_;
};

std::vector<double> effective_viscosity_field(const Potential &P, const std::vector<double> &s2, double eps) {
  std::vector<double> mu(s2.size());
  for (std::size_t c = 0; c < s2.size(); ++c) mu[c] = P.effective_viscosity(std::sqrt(s2[c]), eps);
  return mu;
}

/// Pack / unpack the face unknowns of a VecField into one vector.
Vector pack(const VecField &u) {
  Vector x(u.u_data());
  x.insert(x.end(), u.v_data().begin(), u.v_data().end());
  return x;
}

void unpack(const Vector &x, VecField &u) {
  const std::size_t nu = u.u_data().size();
  std::copy(x.begin(), x.begin() + std::ptrdiff_t(nu), u.u_data().begin());
  std::copy(x.begin() + std::ptrdiff_t(nu), x.end(), u.v_data().begin());
}

struct ViscousResult {
  VecField u;
  std::vector<double> mu;  // lagged viscosity of the last solve
  int iterations = 0;
};

/// (M/dt + K(μ)) u = M u_star / dt with Picard iterations on μ.
ViscousResult viscous_solve(const VecField &u_star, const FaceMass &m, const Potential &P, double dt,
                            const SolverOptions &opt) {
  const Grid2 &g = u_star.grid();
  const std::size_t nu = u_star.u_data().size();
  Vector mass(m.mu);
  mass.insert(mass.end(), m.mv.begin(), m.mv.end());
  Vector rhs = pack(u_star);
  for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] *= mass[k] / dt;

  ViscousResult res{u_star, {}, 0};
  const bool linear = P.kind() == PotentialKind::newtonian;
  double change = 0.0;
  for (int it = 1; it <= opt.picard_max; ++it) {
    res.mu = effective_viscosity_field(P, cell_strain2(strain(res.u), g), opt.bingham_eps);
    const ViscousOperator K(g, res.mu);
    Vector diag = pack(K.diagonal());
    for (std::size_t k = 0; k < diag.size(); ++k) diag[k] = mass[k] > 0.0 ? diag[k] + mass[k] / dt : 1.0;
    VecField tmp_in(g), tmp_out(g);
    auto apply = [&](const Vector &x, Vector &y) {
      unpack(x, tmp_in);
      K.apply(tmp_in, tmp_out);
      y = pack(tmp_out);
      for (std::size_t k = 0; k < y.size(); ++k) y[k] = mass[k] > 0.0 ? y[k] + mass[k] / dt * x[k] : x[k];
    };
    auto jacobi = [&](const Vector &r, Vector &z) {
      z.resize(r.size());
      for (std::size_t k = 0; k < r.size(); ++k) z[k] = r[k] / diag[k];
    };
    Vector x = pack(res.u);
    for (std::size_t k = 0; k < x.size(); ++k)
      if (mass[k] == 0.0) x[k] = 0.0;
    CgOptions cg;
    cg.abs_tol = 0.0;
    cg.rel_tol = opt.viscous_tol;
    cg.max_iterations = 5000;
    const CgResult r = pcg(apply, jacobi, rhs, x, cg);
    if (!r.converged) throw SolverError("viscous solve did not converge");
    VecField next(g);
    unpack(x, next);
    zero_walls(next);
    VecField diff = next - res.u;
    change = max_abs_field(diff) / std::max(max_abs_field(next), 1e-300);
    res.u = std::move(next);
    res.iterations = it;
    if (linear || change <= opt.picard_tol) return res;
  }
  (void)nu;
  std::ostringstream msg;
  msg << "viscous fixed point stalled (residual " << change << ")";
  throw SolverError(msg.str());
}

// ---------------------------------------------------------------------------
// Advection: first-order upwind in flux form on the staggered control
// volumes. Column sums of the update are exactly one, and the update is a
// convex combination under dt <= h / (2 max|u|).

VecField advect(const VecField &u, double dt) {
  const Grid2 &g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  const double c = dt / g.h();
  VecField out = u;
  auto flux = [&](double F, double self, double nb) { return std::max(F, 0.0) * self + std::min(F, 0.0) * nb; };
  for (int j = 0; j < ny; ++j)
    for (int i = 1; i < nx; ++i) {
      const double self = u.u(i, j);
      const double Fe = 0.5 * (u.u(i, j) + u.u(i + 1, j));
      const double Fw = -0.5 * (u.u(i - 1, j) + u.u(i, j));
      double acc = flux(Fe, self, u.u(i + 1, j)) + flux(Fw, self, u.u(i - 1, j));
      if (j + 1 < ny) acc += flux(0.5 * (u.v(i - 1, j + 1) + u.v(i, j + 1)), self, u.u(i, j + 1));
      if (j > 0) acc += flux(-0.5 * (u.v(i - 1, j) + u.v(i, j)), self, u.u(i, j - 1));
      out.u(i, j) = self - c * acc;
    }
  for (int j = 1; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const double self = u.v(i, j);
      const double Fn = 0.5 * (u.v(i, j) + u.v(i, j + 1));
      const double Fs = -0.5 * (u.v(i, j - 1) + u.v(i, j));
      double acc = flux(Fn, self, u.v(i, j + 1)) + flux(Fs, self, u.v(i, j - 1));
      if (i + 1 < nx) acc += flux(0.5 * (u.u(i + 1, j - 1) + u.u(i + 1, j)), self, u.v(i + 1, j));
      if (i > 0) acc += flux(-0.5 * (u.u(i, j - 1) + u.u(i, j)), self, u.v(i - 1, j));
      out.v(i, j) = self - c * acc;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Coupled projection
//
// Minimise ½ Σ m_f (u_f - u*_f)² subject to D u = 0, u_f = φ_f·q_b on the
// faces owned by body b. With P the parametrisation and N = PᵀMP the
// multiplier solves S λ = D ũ*, S = (DP) N⁻¹ (DP)ᵀ, ũ* the field with the
// rigid projection of u* on body faces.

struct BodyFace {
  bool is_u;
  std::size_t idx;
  Vec3 phi;
};

struct BodyBlock {
  std::vector<BodyFace> faces;
  Mat3 inv{};
  bool active = false;
};

struct ProjectionResult {
  VecField u;
  ScalarField lambda;
  std::vector<Vec3> q;  // rigid velocities (Yx, Yy, ω) per body
  std::vector<bool> owns_all;
  int iterations = 0;
};

ProjectionResult coupled_projection(const VecField &u_star, const ScalarField &rho, const Cloud &cloud,
                                    const ScalarField *lambda0, const SolverOptions &opt) {
  const Grid2 &g = u_star.grid();
  const int nx = g.nx(), ny = g.ny();
  const double h = g.h(), ih = 1.0 / h;
  const FaceMass m = face_mass(rho);
  const std::size_t nb = cloud.size();

  // Face ownership: ascending radius, later bodies overwrite.
  std::vector<int> own_u(m.mu.size(), -1), own_v(m.mv.size(), -1);
  std::vector<int> cells_in(nb, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    const BodyState &B = cloud.bodies()[b];
    const double r = B.radius();
    const int i0 = std::max(0, int(std::floor((B.h.x - r - g.origin().x) * ih)) - 1);
    const int i1 = std::min(nx - 1, int(std::ceil((B.h.x + r - g.origin().x) * ih)) + 1);
    const int j0 = std::max(0, int(std::floor((B.h.y - r - g.origin().y) * ih)) - 1);
    const int j1 = std::min(ny - 1, int(std::ceil((B.h.y + r - g.origin().y) * ih)) + 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) {
        if (B.contains(g.cell_center(i, j))) ++cells_in[b];
        if (i > 0 && B.contains(g.u_face(i, j))) own_u[u_star.uidx(i, j)] = int(b);
        if (j > 0 && B.contains(g.v_face(i, j))) own_v[u_star.vidx(i, j)] = int(b);
      }
    if (cells_in[b] < 4) throw BodyError("degenerate body");
  }

  std::vector<BodyBlock> blocks(nb);
  std::vector<Vec3> q_star(nb, Vec3{});
  std::vector<bool> owns_all(nb, true);
  for (int j = 0; j < ny; ++j)
    for (int i = 1; i < nx; ++i) {
      const std::size_t f = u_star.uidx(i, j);
      if (own_u[f] < 0) continue;
      const BodyState &B = cloud.bodies()[std::size_t(own_u[f])];
      blocks[std::size_t(own_u[f])].faces.push_back({true, f, {1.0, 0.0, -(g.u_face(i, j).y - B.h.y)}});
    }
  for (int j = 1; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t f = u_star.vidx(i, j);
      if (own_v[f] < 0) continue;
      const BodyState &B = cloud.bodies()[std::size_t(own_v[f])];
      blocks[std::size_t(own_v[f])].faces.push_back({false, f, {0.0, 1.0, g.v_face(i, j).x - B.h.x}});
    }
  for (std::size_t b = 0; b < nb; ++b) {
    BodyBlock &blk = blocks[b];
    for (std::size_t c = b + 1; c < nb && owns_all[b]; ++c) {
      const BodyState &A = cloud.bodies()[b], &C = cloud.bodies()[c];
      if (norm(A.h - C.h) < A.radius() + C.radius()) owns_all[b] = false;
    }
    if (blk.faces.empty()) continue;
    Mat3 M{};
    Vec3 rhs{};
    for (const BodyFace &f : blk.faces) {
      const double w = f.is_u ? m.mu[f.idx] : m.mv[f.idx];
      const double val = f.is_u ? u_star.u_data()[f.idx] : u_star.v_data()[f.idx];
      for (int a = 0; a < 3; ++a) {
        rhs[a] += w * f.phi[a] * val;
        for (int c = 0; c < 3; ++c) M[a][c] += w * f.phi[a] * f.phi[c];
      }
    }
    blk.inv = inverse3(M);
    blk.active = true;
    q_star[b] = mul(blk.inv, rhs);
  }

  auto rigid_value = [](const BodyFace &f, const Vec3 &q) { return f.phi[0] * q[0] + f.phi[1] * q[1] + f.phi[2] * q[2]; };

  VecField ut = u_star;
  zero_walls(ut);
  for (std::size_t b = 0; b < nb; ++b)
    for (const BodyFace &f : blocks[b].faces) (f.is_u ? ut.u_data()[f.idx] : ut.v_data()[f.idx]) = rigid_value(f, q_star[b]);

  // y = P N⁻¹ Pᵀ Dᵀ x, returned as a face field; body corrections in dq.
  VecField gt(g), y(g);
  std::vector<Vec3> dq(nb);
  auto correction = [&](const std::vector<double> &x) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 1; i < nx; ++i) {
        const std::size_t f = y.uidx(i, j);
        const std::size_t L = std::size_t(j) * nx + i - 1;
        gt.u_data()[f] = (x[L] - x[L + 1]) * ih;
        y.u_data()[f] = own_u[f] < 0 ? gt.u_data()[f] / m.mu[f] : 0.0;
      }
    }
    for (int j = 1; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const std::size_t f = y.vidx(i, j);
        const std::size_t B = std::size_t(j - 1) * nx + i;
        gt.v_data()[f] = (x[B] - x[B + std::size_t(nx)]) * ih;
        y.v_data()[f] = own_v[f] < 0 ? gt.v_data()[f] / m.mv[f] : 0.0;
      }
    for (std::size_t b = 0; b < nb; ++b) {
      if (!blocks[b].active) continue;
      Vec3 w{};
      for (const BodyFace &f : blocks[b].faces) {
        const double gv = f.is_u ? gt.u_data()[f.idx] : gt.v_data()[f.idx];
        for (int a = 0; a < 3; ++a) w[a] += f.phi[a] * gv;
      }
      dq[b] = mul(blocks[b].inv, w);
      for (const BodyFace &f : blocks[b].faces) (f.is_u ? y.u_data()[f.idx] : y.v_data()[f.idx]) = rigid_value(f, dq[b]);
    }
  };
  auto div_of = [&](const VecField &v, std::vector<double> &out) {
    out.resize(g.cells());
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        out[std::size_t(j) * nx + i] = (v.u(i + 1, j) - v.u(i, j) + v.v(i, j + 1) - v.v(i, j)) * ih;
  };

  Vector b;
  div_of(ut, b);

  FivePoint P(nx, ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = P.at(i, j);
      if (i + 1 < nx) {
        const double w = 1.0 / (m.mu[y.uidx(i + 1, j)] * h * h);
        P.ax[c] = w;
        P.diag[c] += w;
        P.diag[c + 1] += w;
      }
      if (j + 1 < ny) {
        const double w = 1.0 / (m.mv[y.vidx(i, j + 1)] * h * h);
        P.ay[c] = w;
        P.diag[c] += w;
        P.diag[c + std::size_t(nx)] += w;
      }
    }
  const MultigridPreconditioner mic(P, 1);

  Vector lambda = lambda0 ? lambda0->data() : Vector(g.cells(), 0.0);
  CgOptions cg;
  cg.abs_tol = opt.projection_tol * std::max(1.0, max_abs_field(u_star)) * ih;
  cg.rel_tol = 0.0;
  cg.max_iterations = 20000;
  const CgResult res = pcg(
      [&](const Vector &x, Vector &out) {
        correction(x);
        div_of(y, out);
      },
      mic, b, lambda, cg);
  if (!res.converged) throw SolverError("projection did not converge");

  correction(lambda);
  ProjectionResult out{ut - y, ScalarField(g), std::vector<Vec3>(nb), owns_all, res.iterations};
  out.lambda.data() = lambda;
  for (std::size_t k = 0; k < nb; ++k)
    for (int a = 0; a < 3; ++a) out.q[k][a] = q_star[k][a] - dq[k][a];
  for (std::size_t k = 0; k < nb; ++k)
    if (!blocks[k].active) out.owns_all[k] = false;
  return out;
}

double max_divergence(const VecField &u) {
  const ScalarField d = divergence(u);
  double m = 0.0;
  for (double x : d.data()) m = std::max(m, std::abs(x));
  return m;
}

/// Applies the projection to s (velocity, pressure multiplier, body
/// velocities). Returns the projection result for diagnostics.
ProjectionResult project_into(SimState &s, const VecField &u_star, double dt, const SolverOptions &opt) {
  ScalarField guess = s.pressure;
  for (double &x : guess.data()) x *= dt;
  ProjectionResult pr = coupled_projection(u_star, s.rho, s.cloud, &guess, opt);
  s.u = pr.u;
  s.pressure = pr.lambda;
  for (double &x : s.pressure.data()) x /= dt;
  for (std::size_t b = 0; b < s.cloud.size(); ++b) {
    BodyState &B = s.cloud.bodies()[b];
    if (pr.owns_all[b]) {
      B.Y = {pr.q[b][0], pr.q[b][1]};
      B.omega = pr.q[b][2];
    } else {
      const RigidMotion rm = project_to_rigid(s.u, B, s.rho);
      B.Y = rm.Y;
      B.omega = rm.omega;
    }
  }
  return pr;
}

}  // namespace

// ---------------------------------------------------------------------------

ScalarField rasterize_density(const Grid2 &g, double rho_f, const Cloud &cloud) {
  ScalarField rho(g, rho_f);
  for (const BodyState &b : cloud.bodies()) {
    const ScalarField ind = body_indicator(b, g);
    for (std::size_t k = 0; k < ind.data().size(); ++k)
      if (ind.data()[k] > 0.0) rho.data()[k] = b.rho;
  }
  return rho;
}

SimState make_state(VecField u0, const Potential &P, double rho_f, Cloud cloud, Vec2 g) {
  if (!(rho_f > 0.0)) throw SolverError("fluid density must be positive");
  const Grid2 grid = u0.grid();
  SimState s{0.0, std::move(u0), ScalarField(grid), rasterize_density(grid, rho_f, cloud), std::move(cloud), P, g, rho_f};
  zero_walls(s.u);
  return s;
}

double project_state(SimState &s, const SolverOptions &opt) {
  const VecField u_star = s.u;
  project_into(s, u_star, 1.0, opt);
  return max_divergence(s.u);
}

double kinetic_energy(const SimState &s) {
  const FaceMass m = face_mass(s.rho);
  double k = 0.0;
  for (std::size_t f = 0; f < m.mu.size(); ++f) k += m.mu[f] * s.u.u_data()[f] * s.u.u_data()[f];
  for (std::size_t f = 0; f < m.mv.size(); ++f) k += m.mv[f] * s.u.v_data()[f] * s.u.v_data()[f];
  return 0.5 * k;
}

double max_stable_dt(const SimState &s, const SolverOptions &opt) {
  const Grid2 &g = s.u.grid();
  const double umax = max_abs_field(s.u);
  double rho_min = s.rho_f;
  for (double r : s.rho.data()) rho_min = std::min(rho_min, r);
  const std::vector<double> mu = effective_viscosity_field(s.potential, cell_strain2(strain(s.u), g), opt.bingham_eps);
  const double mu_max = *std::max_element(mu.begin(), mu.end());
  double dt = std::numeric_limits<double>::infinity();
  if (umax > 0.0) dt = 0.5 * g.h() / umax;
  if (mu_max > 0.0) dt = std::min(dt, 0.25 * g.cell_area() * rho_min / mu_max);
  return dt;
}

SimState step(const SimState &s, double dt, const SolverOptions &opt, EnergyRecord *record, TensorField *stress) {
  if (!(dt > 0.0)) throw SolverError("dt must be positive");
  if (dt > max_stable_dt(s, opt) * (1.0 + 1e-12)) throw SolverError("CFL violated");
  const Grid2 &g = s.u.grid();
  const FaceMass m = face_mass(s.rho);

  // (1) advection, (2) viscous solve
  const VecField u_adv = advect(s.u, dt);
  ViscousResult vr = viscous_solve(u_adv, m, s.potential, dt, opt);

  EnergyRecord rec;
  {
    const Strain st = strain(vr.u);
    const std::vector<double> s2 = cell_strain2(st, g);
    const double a = g.cell_area();
    const int nx = g.nx();
    if (stress) *stress = TensorField(g);
    for (std::size_t c = 0; c < s2.size(); ++c) {
      const double t = std::sqrt(s2[c]);
      const double smag = 2.0 * vr.mu[c] * t;
      const double F = s.potential.profile(t);
      const double Fs = conjugate(s.potential, SymTensor{smag, 0.0, 0.0});
      rec.dissipation_F += a * F;
      rec.dissipation_Fstar += a * Fs;
      rec.fenchel_gap_total += a * (F + Fs - smag * t);
      if (stress) {
        const int i = int(c % std::size_t(nx)), j = int(c / std::size_t(nx));
        auto n12 = [&](int ii, int jj) { return st.d12[std::size_t(jj) * (nx + 1) + ii]; };
        const double d12 = 0.25 * (n12(i, j) + n12(i + 1, j) + n12(i, j + 1) + n12(i + 1, j + 1));
        (*stress)(i, j) = (2.0 * vr.mu[c]) * SymTensor{st.d11[c], st.d22[c], d12};
      }
    }
  }

  // (3) gravity; the work uses the midpoint so that it balances ½|u|² exactly
  VecField u_g = vr.u;
  if (s.g.x != 0.0 || s.g.y != 0.0) {
    for (std::size_t f = 0; f < m.mu.size(); ++f) {
      if (m.mu[f] == 0.0) continue;
      rec.work += m.mu[f] * s.g.x * (u_g.u_data()[f] + 0.5 * dt * s.g.x);
      u_g.u_data()[f] += dt * s.g.x;
    }
    for (std::size_t f = 0; f < m.mv.size(); ++f) {
      if (m.mv[f] == 0.0) continue;
      rec.work += m.mv[f] * s.g.y * (u_g.v_data()[f] + 0.5 * dt * s.g.y);
      u_g.v_data()[f] += dt * s.g.y;
    }
  }

  // (4)+(5) coupled projection, then move the bodies and the density
  SimState out = s;
  const ProjectionResult pr = project_into(out, u_g, dt, opt);
  for (BodyState &b : out.cloud.bodies()) b = advance_body(b, b.Y, b.omega, dt, g);
  out.cloud = Cloud(out.cloud.bodies());
  out.rho = rasterize_density(g, out.rho_f, out.cloud);
  out.t = s.t + dt;

  rec.t = out.t;
  rec.kinetic = kinetic_energy(out);
  rec.divergence_max = max_divergence(out.u);
  rec.picard_iterations = vr.iterations;
  rec.projection_iterations = pr.iterations;
  if (record) *record = rec;
  return out;
}

RunResult run(const SimState &s0, double T, double dt, const RunOptions &opt) {
  if (!(T >= 0.0)) throw SolverError("T must be non-negative");
  if (!(dt > 0.0)) throw SolverError("dt must be positive");
  RunResult res{s0, {}, {}};
  const double t_end = s0.t + T;
  auto keep = [&](const SimState &s, double step_dt, const TensorField &S) {
    if (opt.keep_history) res.history.push_back({s.t, step_dt, s.u, s.rho, S, s.cloud});
  };
  keep(s0, 0.0, TensorField(s0.u.grid()));
  if (opt.snapshot && opt.snapshot_every > 0) opt.snapshot(s0, 0);
  int n = 0;
  while (t_end - res.final.t > 1e-12 * std::max(1.0, t_end)) {
    const double h = std::min(dt, t_end - res.final.t);
    EnergyRecord rec;
    TensorField S(s0.u.grid());
    res.final = step(res.final, h, opt.solver, &rec, opt.keep_history ? &S : nullptr);
    ++n;
    res.records.push_back(rec);
    keep(res.final, h, S);
    if (opt.snapshot && opt.snapshot_every > 0 && n % opt.snapshot_every == 0) opt.snapshot(res.final, n);
  }
  return res;
}

double weak_form_residual(const std::vector<HistoryEntry> &history, const VecField &phi, Vec2 gvec) {
  if (history.empty()) throw SolverError("empty history");
  const Grid2 &g = phi.grid();
  const double a = g.cell_area();
  if (max_divergence(phi) > 1e-8 * std::max(1.0, max_abs_field(phi)) / g.h())
    throw SolverError("test function is not solenoidal");
  const TensorField Dphi = sym_gradient(phi);
  double dmax = 0.0;
  for (const SymTensor &t : Dphi.data()) dmax = std::max(dmax, t.norm());

  auto momentum = [&](const HistoryEntry &e) {
    double s = 0.0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) s += a * e.rho(i, j) * dot(e.u.at_cell(i, j), phi.at_cell(i, j));
    return s;
  };

  double integral = 0.0;
  for (std::size_t k = 0; k < history.size(); ++k) {
    const HistoryEntry &e = history[k];
    for (const BodyState &b : e.cloud.bodies()) {
      const ScalarField ind = body_indicator(b, g);
      for (std::size_t c = 0; c < ind.data().size(); ++c)
        if (ind.data()[c] > 0.0 && Dphi.data()[c].norm() > 1e-8 * dmax + 1e-12)
          throw SolverError("test function is not rigid on a body");
    }
    if (k == 0) continue;
    double s = 0.0;
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        const Vec2 u = e.u.at_cell(i, j);
        const SymTensor &D = Dphi(i, j);
        const double rho = e.rho(i, j);
        const SymTensor uu{u.x * u.x, u.y * u.y, u.x * u.y};
        s += a * (rho * contract(uu, D) - contract(e.stress(i, j), D) + rho * dot(gvec, phi.at_cell(i, j)));
      }
    integral += e.dt * s;
  }
  return momentum(history.back()) - momentum(history.front()) - integral;
}

}  // namespace fsilab
