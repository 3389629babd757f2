#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace fsilab {

using Vector = std::vector<double>;

inline double dot(const Vector &a, const Vector &b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double max_abs(const Vector &a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

struct CgOptions {
  /// Stop once max|r| <= abs_tol ...
  double abs_tol = 1e-12;
  /// ... or ||r||_2 <= rel_tol ||b||_2.
  double rel_tol = 1e-14;
  int max_iterations = 10000;
};

struct CgResult {
  int iterations = 0;
  double residual_max = 0.0;
  bool converged = false;
};

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi-)definite operator. `apply(x, y)` sets y = A x, `precond(r, z)`
/// sets z = M^{-1} r. Semi-definite systems must have a consistent right
/// hand side.
template <class Apply, class Precond>
CgResult pcg(Apply &&apply, Precond &&precond, const Vector &b, Vector &x, const CgOptions &opt) {
  const std::size_t n = b.size();
  x.resize(n, 0.0);
  Vector r(n), z(n), p(n), q(n);
  apply(x, q);
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - q[k];
  const double bnorm = std::sqrt(dot(b, b));

  CgResult res;
  res.residual_max = max_abs(r);
  auto done = [&] {
    return res.residual_max <= opt.abs_tol || std::sqrt(dot(r, r)) <= opt.rel_tol * bnorm;
  };
  if (done()) {
    res.converged = true;
    return res;
  }
  precond(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    apply(p, q);
    const double pq = dot(p, q);
    if (!(pq > 0.0)) break;
    const double alpha = rz / pq;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * q[k];
    }
    res.iterations = it;
    res.residual_max = max_abs(r);
    if (done()) {
      res.converged = true;
      return res;
    }
    precond(r, z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
  }
  return res;
}

/// Symmetric five-point operator on an nx x ny cell grid:
///   (A x)_c = diag_c x_c - Σ_nb coupling * x_nb
/// with east couplings ax(i,j) between (i,j),(i+1,j) and north couplings
/// ay(i,j) between (i,j),(i,j+1). Cells with diag == 0 are inactive.
struct FivePoint {
  int nx = 0;
  int ny = 0;
  Vector diag;
  Vector ax;
  Vector ay;

  FivePoint() = default;
  FivePoint(int nx_, int ny_)
      : nx(nx_), ny(ny_), diag(std::size_t(nx_) * ny_, 0.0), ax(diag.size(), 0.0), ay(diag.size(), 0.0) {}

  std::size_t at(int i, int j) const { return std::size_t(j) * nx + i; }

  void apply(const Vector &x, Vector &y) const;
};

/// Modified incomplete Cholesky (MIC(0)) preconditioner for a FivePoint.
class MicPreconditioner {
 public:
  explicit MicPreconditioner(const FivePoint &a, double tau = 0.97, double sigma = 0.25);
  void operator()(const Vector &r, Vector &z) const;

 private:
  const FivePoint *a_;
  Vector inv_;
};

/// One symmetric V-cycle of cell-centred multigrid for a FivePoint:
/// piecewise-constant transfers, Galerkin coarse operators, symmetric
/// Gauss-Seidel smoothing. Coarsens while both sides are even and > 8.
/// Copies the operator.
class MultigridPreconditioner {
 public:
  explicit MultigridPreconditioner(const FivePoint &a, int smooth = 2);
  void operator()(const Vector &r, Vector &z) const;
  int levels() const { return int(levels_.size()); }

 private:
  struct Level {
    FivePoint a;
    mutable Vector x, b, res;
  };
  void cycle(std::size_t l) const;
  void sweep(const Level &lv, bool forward) const;
  std::vector<Level> levels_;
  int smooth_;
};

}  // namespace fsilab
