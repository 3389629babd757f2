#pragma once

#include <stdexcept>
#include <vector>

#include "fsilab/grid.hpp"

namespace fsilab {

class BodyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Body geometry in its own frame, barycentre at the origin.
class Shape {
 public:
  static Shape disc(double radius);
  /// Vertices in counter-clockwise or clockwise order, any reference
  /// point; `offset()` reports the centroid shift that was removed.
  static Shape polygon(std::vector<Vec2> vertices);

  bool is_disc() const { return vertices_.empty(); }
  double radius() const { return radius_; }
  const std::vector<Vec2> &vertices() const { return vertices_; }
  Vec2 offset() const { return offset_; }

  double area() const { return area_; }
  /// ∫_S |y|² dy about the barycentre.
  double second_moment() const { return second_moment_; }
  /// Largest distance from the barycentre to a point of the body.
  double bounding_radius() const { return bounding_radius_; }
  /// Containment in body coordinates.
  bool contains(Vec2 y) const;

 private:
  double radius_ = 0.0;
  std::vector<Vec2> vertices_;
  Vec2 offset_;
  double area_ = 0.0;
  double second_moment_ = 0.0;
  double bounding_radius_ = 0.0;
};

/// One rigid body: geometry, barycentre h, orientation, velocities, density.
struct BodyState {
  Shape shape;
  Vec2 h;
  double theta = 0.0;
  Vec2 Y;
  double omega = 0.0;
  double rho = 1.0;

  double area() const { return shape.area(); }
  double mass() const { return rho * shape.area(); }
  /// Scalar moment of inertia ρ ∫_S |x - h|².
  double inertia() const { return rho * shape.second_moment(); }
  /// Radius r of the ball B_r(h) containing the body.
  double radius() const { return shape.bounding_radius(); }

  Vec2 to_body(Vec2 x) const;
  bool contains(Vec2 x) const { return shape.contains(to_body(x)); }
  Vec2 velocity_at(Vec2 x) const { return Y + omega * perp(x - h); }
};

/// Bodies kept in ascending order of radius.
class Cloud {
 public:
  Cloud() = default;
  explicit Cloud(std::vector<BodyState> bodies);

  const std::vector<BodyState> &bodies() const { return bodies_; }
  std::vector<BodyState> &bodies() { return bodies_; }
  std::size_t size() const { return bodies_.size(); }
  bool empty() const { return bodies_.empty(); }
  /// Packing volume Σ r_n^d with d = 2.
  double packing_volume() const;
  double total_area() const;

 private:
  std::vector<BodyState> bodies_;
};

/// 1 on cells whose centres lie in the body, 0 elsewhere.
ScalarField body_indicator(const BodyState &b, const Grid2 &g);

/// Rigid field Y + ω (x - h)^⊥ on faces whose centres lie in the body.
VecField rigid_velocity(const BodyState &b, const Grid2 &g);

struct RigidMotion {
  Vec2 Y;
  double omega = 0.0;
};

/// ρ-weighted orthogonal projection of u onto the rigid motions of the body,
/// taken over the face samples inside the body. ρ is a cell field; face
/// densities are averages of the adjacent cells.
/// Throws BodyError("degenerate body") if fewer than 4 cell centres lie in
/// the body.
RigidMotion project_to_rigid(const VecField &u, const BodyState &b, const ScalarField &rho);

/// Moves the body with (Y, ω) for dt. Throws BodyError("body exits domain")
/// if the moved body reaches the boundary of g.
BodyState advance_body(const BodyState &b, Vec2 Y, double omega, double dt, const Grid2 &g);

/// Cells whose centre lies in the body but farther than radius() from h.
/// Empty for every valid body (Jensen containment).
int containment_violations(const BodyState &b, const Grid2 &g);

}  // namespace fsilab
