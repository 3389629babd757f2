#include "fsilab/grid.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

namespace fsilab {

Grid2::Grid2(int nx, int ny, double lx, double ly, Vec2 origin)
    : nx_(nx), ny_(ny), lx_(lx), ly_(ly), origin_(origin), h_(lx / nx) {
  if (nx < 8 || ny < 8) throw GridError("grid needs at least 8 cells per direction");
  if (!(lx > 0.0) || !(ly > 0.0)) throw GridError("grid side lengths must be positive");
  if (std::abs(lx / nx - ly / ny) > 1e-12 * h_) throw GridError("grid cells must be square");
}

VecField &VecField::operator+=(const VecField &o) { return axpy(1.0, o); }
VecField &VecField::operator-=(const VecField &o) { return axpy(-1.0, o); }

VecField &VecField::operator*=(double s) {
  for (double &x : u_) x *= s;
  for (double &x : v_) x *= s;
  return *this;
}

VecField &VecField::axpy(double s, const VecField &o) {
  if (!(grid_ == o.grid_)) throw GridError("field grids differ");
  for (std::size_t k = 0; k < u_.size(); ++k) u_[k] += s * o.u_[k];
  for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += s * o.v_[k];
  return *this;
}

VecField operator+(VecField a, const VecField &b) { return a += b; }
VecField operator-(VecField a, const VecField &b) { return a -= b; }
VecField operator*(double s, VecField a) { return a *= s; }

TensorField sym_gradient(const VecField &u) {
  const Grid2 &g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  const double h = g.h();
  TensorField out(g);

  auto uc = [&](int i, int j) { return 0.5 * (u.u(i, j) + u.u(i + 1, j)); };
  auto vc = [&](int i, int j) { return 0.5 * (u.v(i, j) + u.v(i, j + 1)); };

  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      SymTensor &d = out(i, j);
      d.xx = (u.u(i + 1, j) - u.u(i, j)) / h;
      d.yy = (u.v(i, j + 1) - u.v(i, j)) / h;
      double du_dy;
      if (j == 0)
        du_dy = (uc(i, 1) - uc(i, 0)) / h;
      else if (j == ny - 1)
        du_dy = (uc(i, j) - uc(i, j - 1)) / h;
      else
        du_dy = (uc(i, j + 1) - uc(i, j - 1)) / (2.0 * h);
      double dv_dx;
      if (i == 0)
        dv_dx = (vc(1, j) - vc(0, j)) / h;
      else if (i == nx - 1)
        dv_dx = (vc(i, j) - vc(i - 1, j)) / h;
      else
        dv_dx = (vc(i + 1, j) - vc(i - 1, j)) / (2.0 * h);
      d.xy = 0.5 * (du_dy + dv_dx);
    }
  }
  return out;
}

ScalarField divergence(const VecField &u) {
  const Grid2 &g = u.grid();
  const double inv_h = 1.0 / g.h();
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      out(i, j) = (u.u(i + 1, j) - u.u(i, j) + u.v(i, j + 1) - u.v(i, j)) * inv_h;
  return out;
}

VecField pressure_gradient(const ScalarField &q) {
  const Grid2 &g = q.grid();
  const double inv_h = 1.0 / g.h();
  VecField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 1; i < g.nx(); ++i) out.u(i, j) = (q(i, j) - q(i - 1, j)) * inv_h;
  for (int j = 1; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) out.v(i, j) = (q(i, j) - q(i, j - 1)) * inv_h;
  return out;
}

GradientField gradient(const VecField &u) {
  const Grid2 &g = u.grid();
  const int nx = g.nx(), ny = g.ny();
  const double inv_h = 1.0 / g.h();
  GradientField out{g, {}, {}, {}, {}};
  out.du_dx.resize(g.cells());
  out.dv_dy.resize(g.cells());
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t k = static_cast<std::size_t>(j) * nx + i;
      out.du_dx[k] = (u.u(i + 1, j) - u.u(i, j)) * inv_h;
      out.dv_dy[k] = (u.v(i, j + 1) - u.v(i, j)) * inv_h;
    }
  out.du_dy.reserve(static_cast<std::size_t>(nx - 1) * (ny - 1));
  out.dv_dx.reserve(static_cast<std::size_t>(nx - 1) * (ny - 1));
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i) {
      out.du_dy.push_back((u.u(i, j) - u.u(i, j - 1)) * inv_h);
      out.dv_dx.push_back((u.v(i, j) - u.v(i - 1, j)) * inv_h);
    }
  return out;
}

namespace {

void check_p(double p) {
  if (!(p >= 1.0)) throw GridError("lp_norm requires p >= 1");
}

/// Accumulates Σ|x|^p h² (or the max for p = ∞) over a stream of magnitudes.
class NormAccumulator {
 public:
  NormAccumulator(double p, double area) : p_(p), area_(area) { check_p(p); }
  void add(double magnitude) {
    const double a = std::abs(magnitude);
    if (std::isinf(p_))
      acc_ = std::max(acc_, a);
    else if (p_ == 2.0)
      acc_ += a * a;
    else if (p_ == 1.0)
      acc_ += a;
    else
      acc_ += std::pow(a, p_);
  }
  double result() const {
    if (std::isinf(p_)) return acc_;
    return std::pow(acc_ * area_, 1.0 / p_);
  }

 private:
  double p_;
  double area_;
  double acc_ = 0.0;
};

}  // namespace

double lp_norm(const ScalarField &f, double p) {
  NormAccumulator acc(p, f.grid().cell_area());
  for (double x : f.data()) acc.add(x);
  return acc.result();
}

double lp_norm(const VecField &f, double p) {
  const Grid2 &g = f.grid();
  NormAccumulator acc(p, g.cell_area());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) acc.add(norm(f.at_cell(i, j)));
  return acc.result();
}

double lp_norm(const TensorField &f, double p) {
  NormAccumulator acc(p, f.grid().cell_area());
  for (const SymTensor &d : f.data()) acc.add(d.norm());
  return acc.result();
}

double lp_norm(const GradientField &f, double p) {
  NormAccumulator acc(p, f.grid.cell_area());
  for (double x : f.du_dx) acc.add(x);
  for (double x : f.dv_dy) acc.add(x);
  for (double x : f.du_dy) acc.add(x);
  for (double x : f.dv_dx) acc.add(x);
  return acc.result();
}

constexpr double kRamp = 2.0;

double ball_cell_weight(double d, double r, double h) {
  const double t = std::clamp((r - d) / (kRamp * h) + 0.5, 0.0, 1.0);
  return t * t * t * (10.0 + t * (6.0 * t - 15.0));
}

Vec2 ball_average(const VecField &u, Vec2 center, double radius) {
  const Grid2 &g = u.grid();
  const double h = g.h();
  const int i0 = std::max(0, static_cast<int>(std::floor((center.x - radius - g.origin().x) / h)) - 3);
  const int i1 = std::min(g.nx() - 1, static_cast<int>(std::ceil((center.x + radius - g.origin().x) / h)) + 3);
  const int j0 = std::max(0, static_cast<int>(std::floor((center.y - radius - g.origin().y) / h)) - 3);
  const int j1 = std::min(g.ny() - 1, static_cast<int>(std::ceil((center.y + radius - g.origin().y) / h)) + 3);

  Vec2 sum;
  double weight = 0.0;
  bool any_center = false;
  for (int j = j0; j <= j1; ++j)
    for (int i = i0; i <= i1; ++i) {
      const double d = norm(g.cell_center(i, j) - center);
      if (d < radius) any_center = true;
      const double w = ball_cell_weight(d, radius, h);
      if (w == 0.0) continue;
      sum += w * u.at_cell(i, j);
      weight += w;
    }
  if (!any_center) throw GridError("empty ball");
  return (1.0 / weight) * sum;
}

namespace {

void write_header(std::ostream &os, const Grid2 &g) {
  os.precision(17);
  os << g.nx() << ' ' << g.ny() << ' ' << g.lx() << ' ' << g.ly() << ' ' << g.origin().x << ' '
     << g.origin().y << '\n';
}

}  // namespace

void write_snapshot(std::ostream &os, const ScalarField &f) {
  const Grid2 &g = f.grid();
  write_header(os, g);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) os << (i ? " " : "") << f(i, j);
    os << '\n';
  }
}

void write_snapshot(std::ostream &os, const VecField &f) {
  const Grid2 &g = f.grid();
  write_header(os, g);
  for (int j = 0; j < g.ny(); ++j) {
    for (int i = 0; i < g.nx(); ++i) {
      const Vec2 c = f.at_cell(i, j);
      os << (i ? " " : "") << c.x << ' ' << c.y;
    }
    os << '\n';
  }
}

ScalarField read_scalar_snapshot(std::istream &is) {
  int nx = 0, ny = 0;
  double lx = 0, ly = 0, ox = 0, oy = 0;
  if (!(is >> nx >> ny >> lx >> ly >> ox >> oy)) throw GridError("snapshot: bad header");
  ScalarField f(Grid2(nx, ny, lx, ly, {ox, oy}));
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (!(is >> f(i, j))) throw GridError("snapshot: truncated data");
  return f;
}

}  // namespace fsilab
