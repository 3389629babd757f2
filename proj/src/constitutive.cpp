#include "fsilab/constitutive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsilab {

namespace {

void require_positive(double x, const char *what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be positive");
}

}  // namespace

Potential Potential::newtonian(double mu) {
  require_positive(mu, "mu");
  Potential P;
  P.kind_ = PotentialKind::newtonian;
  P.mu_ = mu;
  return P;
}

Potential Potential::powerlaw(double alpha, double beta, double p) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
  require_positive(beta, "beta");
  if (!(p >= 2.0)) throw std::invalid_argument("power-law exponent must be >= 2");
  Potential P;
  P.kind_ = PotentialKind::powerlaw;
  P.alpha_ = alpha;
  P.beta_ = beta;
  P.p_ = p;
  return P;
}

Potential Potential::bingham(double yield_stress, double mu) {
  require_positive(yield_stress, "yield_stress");
  require_positive(mu, "mu");
  Potential P;
  P.kind_ = PotentialKind::bingham;
  P.yield_ = yield_stress;
  P.mu_ = mu;
  return P;
}

std::string Potential::name() const {
  switch (kind_) {
    case PotentialKind::newtonian: return "newtonian";
    case PotentialKind::powerlaw: return "powerlaw";
    case PotentialKind::bingham: return "bingham";
  }
  return "unknown";
}

double Potential::profile(double t) const {
  switch (kind_) {
    case PotentialKind::newtonian: return mu_ * t * t;
    case PotentialKind::powerlaw: return alpha_ * t * t + beta_ * std::pow(t, p_);
    case PotentialKind::bingham: return yield_ * t + mu_ * t * t;
  }
  return 0.0;
}

double Potential::profile_slope(double t) const {
  switch (kind_) {
    case PotentialKind::newtonian: return 2.0 * mu_ * t;
    case PotentialKind::powerlaw: return 2.0 * alpha_ * t + p_ * beta_ * std::pow(t, p_ - 1.0);
    case PotentialKind::bingham: return yield_ + 2.0 * mu_ * t;
  }
  return 0.0;
}

double Potential::effective_viscosity(double t, double eps) const {
  switch (kind_) {
    case PotentialKind::newtonian: return mu_;
    case PotentialKind::powerlaw: return alpha_ + 0.5 * p_ * beta_ * std::pow(t, p_ - 2.0);
    case PotentialKind::bingham: return mu_ + 0.5 * yield_ / std::sqrt(t * t + eps * eps);
  }
  return 0.0;
}

double eval_potential(const Potential &P, const SymTensor &D) { return P.profile(D.norm()); }

SymTensor stress_select(const Potential &P, const SymTensor &D) {
  switch (P.kind()) {
    case PotentialKind::newtonian: return (2.0 * P.mu()) * D;
    case PotentialKind::powerlaw: {
      const double t = D.norm();
      return (2.0 * P.alpha() + P.p() * P.beta() * std::pow(t, P.p() - 2.0)) * D;
    }
    case PotentialKind::bingham: {
      const double t = D.norm();
      if (t == 0.0) return {};
      return (P.yield_stress() / t + 2.0 * P.mu()) * D;
    }
  }
  return {};
}

namespace {

/// Solves f'(t) = s for t >= 0 on the strictly increasing slope f'.
double invert_slope(const Potential &P, double s) {
  double lo = 0.0, hi = 1.0;
  while (P.profile_slope(hi) < s) {
    lo = hi;
    hi *= 2.0;
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double g = P.profile_slope(t) - s;
    if (g > 0.0)
      hi = t;
    else
      lo = t;
    // f''(t) for the power law
    const double curv = 2.0 * P.alpha() + P.p() * (P.p() - 1.0) * P.beta() * std::pow(t, P.p() - 2.0);
    double next = curv > 0.0 ? t - g / curv : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-15 * std::max(1.0, t) || hi - lo <= 1e-15 * std::max(1.0, hi)) return next;
    t = next;
  }
  return t;
}

}  // namespace

double conjugate(const Potential &P, const SymTensor &S) {
  const double s = S.norm();
  if (s == 0.0) return 0.0;
  switch (P.kind()) {
    case PotentialKind::newtonian: return s * s / (4.0 * P.mu());
    case PotentialKind::bingham: {
      const double excess = std::max(s - P.yield_stress(), 0.0);
      return excess * excess / (4.0 * P.mu());
    }
    case PotentialKind::powerlaw: {
      if (P.alpha() == 0.0) {
        const double t = std::pow(s / (P.p() * P.beta()), 1.0 / (P.p() - 1.0));
        return (P.p() - 1.0) * P.beta() * std::pow(t, P.p());
      }
      const double t = invert_slope(P, s);
      return std::max(0.0, s * t - P.profile(t));
    }
  }
  return 0.0;
}

double fenchel_gap(const Potential &P, const SymTensor &D, const SymTensor &S) {
  return eval_potential(P, D) + conjugate(P, S) - contract(S, D);
}

GrowthBounds growth_bounds(const Potential &P) {
  switch (P.kind()) {
    case PotentialKind::newtonian: return {2.0, P.mu(), P.mu(), 0.0};
    case PotentialKind::powerlaw: return {P.p(), P.beta(), P.alpha() + P.beta(), P.alpha()};
    case PotentialKind::bingham:
      return {2.0, P.mu(), P.mu() + 0.5 * P.yield_stress(), 0.5 * P.yield_stress()};
  }
  return {2.0, 0.0, 0.0, 0.0};
}

DualPair dual_pair(const Potential &P, const SymTensor &D) {
  const SymTensor S = stress_select(P, D);
  return {D, S, fenchel_gap(P, D, S)};
}

}  // namespace fsilab
