#pragma once

#include <string>

#include "fsilab/grid.hpp"

namespace fsilab {

enum class PotentialKind { newtonian, powerlaw, bingham };

/// Convex viscous potential F(D) depending on D only through |D|:
///   newtonian  F = μ|D|²
///   powerlaw   F = α|D|² + β|D|^p   (p ≥ 2)
///   bingham    F = S̄|D| + μ|D|²
/// The power-law keeps the un-normalised β, so its stress carries pβ.
class Potential {
 public:
  static Potential newtonian(double mu);
  static Potential powerlaw(double alpha, double beta, double p);
  static Potential bingham(double yield_stress, double mu);

  PotentialKind kind() const { return kind_; }
  double mu() const { return mu_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double yield_stress() const { return yield_; }
  /// Growth exponent: 2 for newtonian and bingham.
  double p() const { return p_; }
  std::string name() const;

  /// Radial profile f(t) with F(D) = f(|D|), and its derivative.
  double profile(double t) const;
  double profile_slope(double t) const;

  /// Viscosity μ_eff with S = 2 μ_eff D at strain magnitude t. For bingham
  /// the yield term uses sqrt(t² + eps²) so it stays finite at t = 0.
  double effective_viscosity(double t, double eps = 1e-6) const;

 private:
  PotentialKind kind_ = PotentialKind::newtonian;
  double mu_ = 0.0;
  double alpha_ = 0.0;
  double beta_ = 0.0;
  double yield_ = 0.0;
  double p_ = 2.0;
};

double eval_potential(const Potential &P, const SymTensor &D);

/// Selection of ∂F(D); for bingham at D = 0 the zero tensor.
SymTensor stress_select(const Potential &P, const SymTensor &D);

/// F*(S) = sup_D { S:D - F(D) }, closed form for newtonian and bingham and
/// for the pure power law; otherwise a bracketed Newton solve of the radial
/// stationarity condition f'(t) = |S|.
double conjugate(const Potential &P, const SymTensor &S);

/// F(D) + F*(S) - S:D.
double fenchel_gap(const Potential &P, const SymTensor &D, const SymTensor &S);

/// Constants of the two-sided growth bound
///   lower |D|^p - c <= F(D) <= upper |D|^p + c.
/// newtonian: (μ, μ, 0); powerlaw: (β, α+β, α); bingham: (μ, μ + S̄/2, S̄/2).
struct GrowthBounds {
  double p;
  double lower;
  double upper;
  double c;
};
GrowthBounds growth_bounds(const Potential &P);

/// Fenchel–Young triple for one point.
struct DualPair {
  SymTensor D;
  SymTensor S;
  double gap;
};
DualPair dual_pair(const Potential &P, const SymTensor &D);

}  // namespace fsilab
