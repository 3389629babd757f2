#pragma once

#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsilab {

/// Two-component vector used for points, velocities and forces.
struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 &operator+=(const Vec2 &o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2 &operator-=(const Vec2 &o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  Vec2 &operator*=(double s) {
    x *= s;
    y *= s;
    return *this;
  }
};

inline Vec2 operator+(Vec2 a, const Vec2 &b) { return a += b; }
inline Vec2 operator-(Vec2 a, const Vec2 &b) { return a -= b; }
inline Vec2 operator*(double s, Vec2 a) { return a *= s; }
inline Vec2 operator*(Vec2 a, double s) { return a *= s; }
inline double dot(const Vec2 &a, const Vec2 &b) { return a.x * b.x + a.y * b.y; }
inline double norm(const Vec2 &a) { return std::hypot(a.x, a.y); }
/// 2D wedge with a scalar: w ∧ b = w (-b.y, b.x).
inline Vec2 perp(const Vec2 &b) { return {-b.y, b.x}; }
/// Scalar cross product a ∧ b = a.x b.y - a.y b.x.
inline double cross(const Vec2 &a, const Vec2 &b) { return a.x * b.y - a.y * b.x; }

/// Error raised by field and operator routines on invalid input.
class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform grid of square cells on [origin, origin + (lx, ly)].
class Grid2 {
 public:
  Grid2(int nx, int ny, double lx, double ly, Vec2 origin = {});

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double lx() const { return lx_; }
  double ly() const { return ly_; }
  Vec2 origin() const { return origin_; }
  double h() const { return h_; }
  double cell_area() const { return h_ * h_; }
  std::size_t cells() const { return static_cast<std::size_t>(nx_) * ny_; }

  Vec2 cell_center(int i, int j) const {
    return {origin_.x + (i + 0.5) * h_, origin_.y + (j + 0.5) * h_};
  }
  /// Centre of the x-face between cells (i-1, j) and (i, j), i in [0, nx].
  Vec2 u_face(int i, int j) const { return {origin_.x + i * h_, origin_.y + (j + 0.5) * h_}; }
  /// Centre of the y-face between cells (i, j-1) and (i, j), j in [0, ny].
  Vec2 v_face(int i, int j) const { return {origin_.x + (i + 0.5) * h_, origin_.y + j * h_}; }
  Vec2 node(int i, int j) const { return {origin_.x + i * h_, origin_.y + j * h_}; }

  bool contains(Vec2 p) const {
    return p.x >= origin_.x && p.x <= origin_.x + lx_ && p.y >= origin_.y && p.y <= origin_.y + ly_;
  }

  friend bool operator==(const Grid2 &a, const Grid2 &b) {
    return a.nx_ == b.nx_ && a.ny_ == b.ny_ && a.lx_ == b.lx_ && a.ly_ == b.ly_ &&
           a.origin_.x == b.origin_.x && a.origin_.y == b.origin_.y;
  }

 private:
  int nx_;
  int ny_;
  double lx_;
  double ly_;
  Vec2 origin_;
  double h_;
};

/// One value per cell, row-major with i fastest.
class ScalarField {
 public:
  explicit ScalarField(const Grid2 &g, double value = 0.0)
      : grid_(g), data_(g.cells(), value) {}

  const Grid2 &grid() const { return grid_; }
  double &operator()(int i, int j) { return data_[idx(i, j)]; }
  double operator()(int i, int j) const { return data_[idx(i, j)]; }
  std::vector<double> &data() { return data_; }
  const std::vector<double> &data() const { return data_; }

 private:
  std::size_t idx(int i, int j) const { return static_cast<std::size_t>(j) * grid_.nx() + i; }
  Grid2 grid_;
  std::vector<double> data_;
};

/// Staggered (MAC) velocity: x-components on x-faces, y-components on y-faces.
///
/// u has (nx+1) x ny entries, v has nx x (ny+1). Faces with i = 0, nx (for u)
/// or j = 0, ny (for v) lie on the domain boundary.
class VecField {
 public:
  explicit VecField(const Grid2 &g)
      : grid_(g),
        u_(static_cast<std::size_t>(g.nx() + 1) * g.ny(), 0.0),
        v_(static_cast<std::size_t>(g.nx()) * (g.ny() + 1), 0.0) {}

  const Grid2 &grid() const { return grid_; }

  double &u(int i, int j) { return u_[uidx(i, j)]; }
  double u(int i, int j) const { return u_[uidx(i, j)]; }
  double &v(int i, int j) { return v_[vidx(i, j)]; }
  double v(int i, int j) const { return v_[vidx(i, j)]; }

  std::vector<double> &u_data() { return u_; }
  const std::vector<double> &u_data() const { return u_; }
  std::vector<double> &v_data() { return v_; }
  const std::vector<double> &v_data() const { return v_; }

  std::size_t uidx(int i, int j) const { return static_cast<std::size_t>(j) * (grid_.nx() + 1) + i; }
  std::size_t vidx(int i, int j) const { return static_cast<std::size_t>(j) * grid_.nx() + i; }

  /// Velocity at a cell centre (average of the two faces per component).
  Vec2 at_cell(int i, int j) const {
    return {0.5 * (u(i, j) + u(i + 1, j)), 0.5 * (v(i, j) + v(i, j + 1))};
  }

  /// Fill by sampling a point function at the face centres.
  template <class F>
  static VecField sample(const Grid2 &g, F &&f) {
    VecField out(g);
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i <= g.nx(); ++i) out.u(i, j) = f(g.u_face(i, j)).x;
    for (int j = 0; j <= g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) out.v(i, j) = f(g.v_face(i, j)).y;
    return out;
  }

  VecField &operator+=(const VecField &o);
  VecField &operator-=(const VecField &o);
  VecField &operator*=(double s);
  /// this += s * o
  VecField &axpy(double s, const VecField &o);

 private:
  Grid2 grid_;
  std::vector<double> u_;
  std::vector<double> v_;
};

VecField operator+(VecField a, const VecField &b);
VecField operator-(VecField a, const VecField &b);
VecField operator*(double s, VecField a);

/// Symmetric 2x2 tensor.
struct SymTensor {
  double xx = 0.0;
  double yy = 0.0;
  double xy = 0.0;

  double norm2() const { return xx * xx + yy * yy + 2.0 * xy * xy; }
  double norm() const { return std::sqrt(norm2()); }
  SymTensor &operator+=(const SymTensor &o) {
    xx += o.xx;
    yy += o.yy;
    xy += o.xy;
    return *this;
  }
  SymTensor &operator*=(double s) {
    xx *= s;
    yy *= s;
    xy *= s;
    return *this;
  }
};

inline SymTensor operator+(SymTensor a, const SymTensor &b) { return a += b; }
inline SymTensor operator-(SymTensor a, const SymTensor &b) {
  return {a.xx - b.xx, a.yy - b.yy, a.xy - b.xy};
}
inline SymTensor operator*(double s, SymTensor a) { return a *= s; }
/// Frobenius contraction S:D.
inline double contract(const SymTensor &a, const SymTensor &b) {
  return a.xx * b.xx + a.yy * b.yy + 2.0 * a.xy * b.xy;
}

/// Three stored entries (xx, yy, xy) per cell.
class TensorField {
 public:
  explicit TensorField(const Grid2 &g) : grid_(g), data_(g.cells()) {}
  const Grid2 &grid() const { return grid_; }
  SymTensor &operator()(int i, int j) { return data_[static_cast<std::size_t>(j) * grid_.nx() + i]; }
  const SymTensor &operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(j) * grid_.nx() + i];
  }
  const std::vector<SymTensor> &data() const { return data_; }

 private:
  Grid2 grid_;
  std::vector<SymTensor> data_;
};

/// Cell-centred symmetric gradient ½(∇u + ∇uᵀ). Normal strains are exact
/// face differences; the shear entry uses centred differences of the
/// face values (one-sided in the boundary row/column).
TensorField sym_gradient(const VecField &u);

/// Discrete divergence at cell centres.
ScalarField divergence(const VecField &u);

/// Face gradient of a cell field; the negative adjoint of divergence on
/// fields with zero normal component on the boundary. Boundary faces are 0.
VecField pressure_gradient(const ScalarField &q);

/// Full discrete gradient of a MAC field: normal derivatives at cell
/// centres, cross derivatives at interior nodes. Used for W^{1,p} norms.
struct GradientField {
  Grid2 grid;
  std::vector<double> du_dx;  // cells
  std::vector<double> dv_dy;  // cells
  std::vector<double> du_dy;  // interior nodes (nx-1) x (ny-1)
  std::vector<double> dv_dx;  // interior nodes
};
GradientField gradient(const VecField &u);

/// Discrete L^p norms: (Σ |value|^p h²)^{1/p}, p = ∞ gives the maximum.
/// Vector fields use the Euclidean magnitude of the cell-centred velocity;
/// tensors use the Frobenius norm.
double lp_norm(const ScalarField &f, double p);
double lp_norm(const VecField &f, double p);
double lp_norm(const TensorField &f, double p);
/// Entrywise norm of the full gradient.
double lp_norm(const GradientField &f, double p);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Weight of a cell of spacing h whose centre lies at distance d from the
/// centre of a ball of radius r: a C² ramp from 1 (inside) to 0 (outside)
/// over two cell widths centred on the sphere. The ramp keeps the average
/// smooth in the ball centre.
double ball_cell_weight(double d, double r, double h);

/// Weighted mean of the cell-centred velocity over B_radius(center).
/// Throws GridError("empty ball") if no cell centre lies in the ball.
Vec2 ball_average(const VecField &u, Vec2 center, double radius);

/// Text snapshot: header "nx ny lx ly origin_x origin_y" followed by one
/// line per grid row (j ascending) of values, i ascending.
void write_snapshot(std::ostream &os, const ScalarField &f);
/// Same header; each row lists "ux uy" pairs of the cell-centred velocity.
void write_snapshot(std::ostream &os, const VecField &f);
ScalarField read_scalar_snapshot(std::istream &is);

}  // namespace fsilab
