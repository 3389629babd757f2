#include "fsilab/rigid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace fsilab {

Shape Shape::disc(double radius) {
  if (!(radius > 0.0)) throw BodyError("disc radius must be positive");
  Shape s;
  s.radius_ = radius;
  s.area_ = std::numbers::pi * radius * radius;
  s.second_moment_ = 0.5 * std::numbers::pi * std::pow(radius, 4);
  s.bounding_radius_ = radius;
  return s;
}

Shape Shape::polygon(std::vector<Vec2> vertices) {
  if (vertices.size() < 3) throw BodyError("polygon needs at least 3 vertices");
  const std::size_t n = vertices.size();
  double a2 = 0.0;
  Vec2 c;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 &p = vertices[k];
    const Vec2 &q = vertices[(k + 1) % n];
    const double w = cross(p, q);
    a2 += w;
    c += w * (p + q);
  }
  if (std::abs(a2) < 1e-300) throw BodyError("polygon has zero area");
  c *= 1.0 / (3.0 * a2);
  if (a2 < 0.0) {
    std::reverse(vertices.begin(), vertices.end());
    a2 = -a2;
  }
  Shape s;
  s.offset_ = c;
  for (Vec2 &v : vertices) v -= c;
  double j = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 &p = vertices[k];
    const Vec2 &q = vertices[(k + 1) % n];
    j += cross(p, q) * (dot(p, p) + dot(p, q) + dot(q, q));
    s.bounding_radius_ = std::max(s.bounding_radius_, norm(p));
  }
  s.area_ = 0.5 * a2;
  s.second_moment_ = j / 12.0;
  s.vertices_ = std::move(vertices);
  return s;
}

bool Shape::contains(Vec2 y) const {
  if (is_disc()) return dot(y, y) < radius_ * radius_;
  bool inside = false;
  const std::size_t n = vertices_.size();
  for (std::size_t k = 0, l = n - 1; k < n; l = k++) {
    const Vec2 &a = vertices_[k];
    const Vec2 &b = vertices_[l];
    if ((a.y > y.y) != (b.y > y.y) && y.x < (b.x - a.x) * (y.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

Vec2 BodyState::to_body(Vec2 x) const {
  const Vec2 d = x - h;
  const double c = std::cos(theta), s = std::sin(theta);
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

Cloud::Cloud(std::vector<BodyState> bodies) : bodies_(std::move(bodies)) {
  std::stable_sort(bodies_.begin(), bodies_.end(),
                   [](const BodyState &a, const BodyState &b) { return a.radius() < b.radius(); });
}

double Cloud::packing_volume() const {
  double v = 0.0;
  for (const BodyState &b : bodies_) v += b.radius() * b.radius();
  return v;
}

double Cloud::total_area() const {
  double a = 0.0;
  for (const BodyState &b : bodies_) a += b.area();
  return a;
}

namespace {

struct IndexBox {
  int i0, i1, j0, j1;
};

/// Cell index range covering the bounding ball of the body (clamped).
IndexBox cell_box(const BodyState &b, const Grid2 &g, int pad = 1) {
  const double r = b.radius();
  const double h = g.h();
  const Vec2 o = g.origin();
  return {std::max(0, int(std::floor((b.h.x - r - o.x) / h)) - pad),
          std::min(g.nx() - 1, int(std::ceil((b.h.x + r - o.x) / h)) + pad),
          std::max(0, int(std::floor((b.h.y - r - o.y) / h)) - pad),
          std::min(g.ny() - 1, int(std::ceil((b.h.y + r - o.y) / h)) + pad)};
}

}  // namespace

ScalarField body_indicator(const BodyState &b, const Grid2 &g) {
  ScalarField out(g);
  const IndexBox box = cell_box(b, g);
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1; ++i)
      if (b.contains(g.cell_center(i, j))) out(i, j) = 1.0;
  return out;
}

VecField rigid_velocity(const BodyState &b, const Grid2 &g) {
  VecField out(g);
  const IndexBox box = cell_box(b, g);
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1 + 1; ++i) {
      const Vec2 x = g.u_face(i, j);
      if (b.contains(x)) out.u(i, j) = b.velocity_at(x).x;
    }
  for (int j = box.j0; j <= box.j1 + 1; ++j)
    for (int i = box.i0; i <= box.i1; ++i) {
      const Vec2 x = g.v_face(i, j);
      if (b.contains(x)) out.v(i, j) = b.velocity_at(x).y;
    }
  return out;
}

namespace {

std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> r) {
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int k = c + 1; k < 3; ++k)
      if (std::abs(m[k][c]) > std::abs(m[piv][c])) piv = k;
    std::swap(m[c], m[piv]);
    std::swap(r[c], r[piv]);
    if (m[c][c] == 0.0) throw BodyError("degenerate body");
    for (int k = c + 1; k < 3; ++k) {
      const double f = m[k][c] / m[c][c];
      for (int l = c; l < 3; ++l) m[k][l] -= f * m[c][l];
      r[k] -= f * r[c];
    }
  }
  std::array<double, 3> x{};
  for (int c = 2; c >= 0; --c) {
    double s = r[c];
    for (int l = c + 1; l < 3; ++l) s -= m[c][l] * x[l];
    x[c] = s / m[c][c];
  }
  return x;
}

}  // namespace

RigidMotion project_to_rigid(const VecField &u, const BodyState &b, const ScalarField &rho) {
  const Grid2 &g = u.grid();
  const IndexBox box = cell_box(b, g);
  int cells = 0;
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1; ++i)
      if (b.contains(g.cell_center(i, j))) ++cells;
  if (cells < 4) throw BodyError("degenerate body");

  // Normal equations of min Σ ρ_f (u_f - φ_f·(Yx, Yy, ω))² over body faces,
  // with φ = (1, 0, -(y - h_y)) on x-faces and (0, 1, x - h_x) on y-faces.
  std::array<std::array<double, 3>, 3> m{};
  std::array<double, 3> rhs{};
  auto add = [&](const std::array<double, 3> &phi, double w, double value) {
    for (int a = 0; a < 3; ++a) {
      rhs[a] += w * phi[a] * value;
      for (int c = 0; c < 3; ++c) m[a][c] += w * phi[a] * phi[c];
    }
  };
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = std::max(1, box.i0); i <= std::min(g.nx() - 1, box.i1 + 1); ++i) {
      const Vec2 x = g.u_face(i, j);
      if (!b.contains(x)) continue;
      const double w = 0.5 * (rho(i - 1, j) + rho(i, j));
      add({1.0, 0.0, -(x.y - b.h.y)}, w, u.u(i, j));
    }
  for (int j = std::max(1, box.j0); j <= std::min(g.ny() - 1, box.j1 + 1); ++j)
    for (int i = box.i0; i <= box.i1; ++i) {
      const Vec2 x = g.v_face(i, j);
      if (!b.contains(x)) continue;
      const double w = 0.5 * (rho(i, j - 1) + rho(i, j));
      add({0.0, 1.0, x.x - b.h.x}, w, u.v(i, j));
    }
  const auto sol = solve3(m, rhs);
  return {{sol[0], sol[1]}, sol[2]};
}

BodyState advance_body(const BodyState &b, Vec2 Y, double omega, double dt, const Grid2 &g) {
  if (!(dt > 0.0)) throw BodyError("advance_body requires dt > 0");
  BodyState out = b;
  out.h = b.h + dt * Y;
  out.theta = b.theta + dt * omega;
  out.Y = Y;
  out.omega = omega;

  const Vec2 lo = g.origin();
  const Vec2 hi = lo + Vec2{g.lx(), g.ly()};
  auto inside = [&](Vec2 p) { return p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y; };
  bool ok;
  if (out.shape.is_disc()) {
    const double r = out.shape.radius();
    ok = out.h.x - r > lo.x && out.h.x + r < hi.x && out.h.y - r > lo.y && out.h.y + r < hi.y;
  } else {
    ok = true;
    const double c = std::cos(out.theta), s = std::sin(out.theta);
    for (const Vec2 &v : out.shape.vertices())
      ok = ok && inside(out.h + Vec2{c * v.x - s * v.y, s * v.x + c * v.y});
  }
  if (!ok) throw BodyError("body exits domain");
  return out;
}

int containment_violations(const BodyState &b, const Grid2 &g) {
  int bad = 0;
  const IndexBox box = cell_box(b, g);
  for (int j = box.j0; j <= box.j1; ++j)
    for (int i = box.i0; i <= box.i1; ++i) {
      const Vec2 x = g.cell_center(i, j);
      if (b.contains(x) && norm(x - b.h) > b.radius()) ++bad;
    }
  return bad;
}

}  // namespace fsilab
