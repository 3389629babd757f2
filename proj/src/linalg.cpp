#include "fsilab/linalg.hpp"

namespace fsilab {

void FivePoint::apply(const Vector &x, Vector &y) const {
  y.assign(x.size(), 0.0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = at(i, j);
      if (diag[c] == 0.0) continue;
      double s = diag[c] * x[c];
      if (i + 1 < nx) s -= ax[c] * x[c + 1];
      if (i > 0) s -= ax[c - 1] * x[c - 1];
      if (j + 1 < ny) s -= ay[c] * x[c + nx];
      if (j > 0) s -= ay[c - nx] * x[c - nx];
      y[c] = s;
    }
}

MicPreconditioner::MicPreconditioner(const FivePoint &a, double tau, double sigma)
    : a_(&a), inv_(a.diag.size(), 0.0) {
  const int nx = a.nx, ny = a.ny;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = a.at(i, j);
      const double d = a.diag[c];
      if (d == 0.0) continue;
      double e = d;
      if (i > 0) {
        const std::size_t w = c - 1;
        const double t = a.ax[w] * inv_[w];
        e -= t * t + tau * a.ax[w] * a.ay[w] * inv_[w] * inv_[w];
      }
      if (j > 0) {
        const std::size_t s = c - nx;
        const double t = a.ay[s] * inv_[s];
        e -= t * t + tau * a.ay[s] * a.ax[s] * inv_[s] * inv_[s];
      }
      if (e < sigma * d) e = d;
      inv_[c] = 1.0 / std::sqrt(e);
    }
}

void MicPreconditioner::operator()(const Vector &r, Vector &z) const {
  const FivePoint &a = *a_;
  const int nx = a.nx, ny = a.ny;
  z.assign(r.size(), 0.0);
  // Forward solve L q = r.
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = a.at(i, j);
      if (inv_[c] == 0.0) continue;
      double t = r[c];
      if (i > 0) t += a.ax[c - 1] * inv_[c - 1] * z[c - 1];
      if (j > 0) t += a.ay[c - nx] * inv_[c - nx] * z[c - nx];
      z[c] = t * inv_[c];
    }
  // Backward solve Lᵀ z = q.
  for (int j = ny - 1; j >= 0; --j)
    for (int i = nx - 1; i >= 0; --i) {
      const std::size_t c = a.at(i, j);
      if (inv_[c] == 0.0) continue;
      double t = z[c];
      if (i + 1 < nx) t += a.ax[c] * inv_[c] * z[c + 1];
      if (j + 1 < ny) t += a.ay[c] * inv_[c] * z[c + nx];
      z[c] = t * inv_[c];
    }
}

// Constant transfers make the Galerkin coarse operator too stiff; an
// over-weighted correction recovers most of the lost convergence.
constexpr double kCoarseWeight = 1.5;

MultigridPreconditioner::MultigridPreconditioner(const FivePoint &a, int smooth) : smooth_(smooth) {
  levels_.push_back({a, {}, {}, {}});
  while (true) {
    const FivePoint &f = levels_.back().a;
    if (f.nx % 2 || f.ny % 2 || f.nx <= 8 || f.ny <= 8) break;
    FivePoint c(f.nx / 2, f.ny / 2);
    for (int J = 0; J < c.ny; ++J)
      for (int I = 0; I < c.nx; ++I) {
        const std::size_t C = c.at(I, J);
        const std::size_t f00 = f.at(2 * I, 2 * J), f10 = f00 + 1, f01 = f00 + std::size_t(f.nx), f11 = f01 + 1;
        c.diag[C] = f.diag[f00] + f.diag[f10] + f.diag[f01] + f.diag[f11] -
                    2.0 * (f.ax[f00] + f.ax[f01] + f.ay[f00] + f.ay[f10]);
        if (I + 1 < c.nx) c.ax[C] = f.ax[f10] + f.ax[f11];
        if (J + 1 < c.ny) c.ay[C] = f.ay[f01] + f.ay[f11];
      }
    levels_.push_back({std::move(c), {}, {}, {}});
  }
  for (Level &lv : levels_) {
    lv.x.assign(lv.a.diag.size(), 0.0);
    lv.b.assign(lv.a.diag.size(), 0.0);
    lv.res.assign(lv.a.diag.size(), 0.0);
  }
}

void MultigridPreconditioner::sweep(const Level &lv, bool forward) const {
  const FivePoint &a = lv.a;
  const int nx = a.nx, ny = a.ny;
  auto relax = [&](int i, int j) {
    const std::size_t c = a.at(i, j);
    if (a.diag[c] == 0.0) return;
    double t = lv.b[c];
    if (i > 0) t += a.ax[c - 1] * lv.x[c - 1];
    if (i + 1 < nx) t += a.ax[c] * lv.x[c + 1];
    if (j > 0) t += a.ay[c - nx] * lv.x[c - nx];
    if (j + 1 < ny) t += a.ay[c] * lv.x[c + nx];
    lv.x[c] = t / a.diag[c];
  };
  if (forward) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) relax(i, j);
  } else {
    for (int j = ny - 1; j >= 0; --j)
      for (int i = nx - 1; i >= 0; --i) relax(i, j);
  }
}

void MultigridPreconditioner::cycle(std::size_t l) const {
  const Level &lv = levels_[l];
  std::fill(lv.x.begin(), lv.x.end(), 0.0);
  if (l + 1 == levels_.size()) {
    for (int k = 0; k < 20; ++k) {
      sweep(lv, true);
      sweep(lv, false);
    }
    return;
  }
  for (int k = 0; k < smooth_; ++k) sweep(lv, true);
  lv.a.apply(lv.x, lv.res);
  for (std::size_t c = 0; c < lv.res.size(); ++c) lv.res[c] = lv.b[c] - lv.res[c];
  const Level &co = levels_[l + 1];
  const int nx = lv.a.nx;
  for (int J = 0; J < co.a.ny; ++J)
    for (int I = 0; I < co.a.nx; ++I) {
      const std::size_t f = lv.a.at(2 * I, 2 * J);
      co.b[co.a.at(I, J)] = lv.res[f] + lv.res[f + 1] + lv.res[f + std::size_t(nx)] + lv.res[f + std::size_t(nx) + 1];
    }
  cycle(l + 1);
  for (int j = 0; j < lv.a.ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = lv.a.at(i, j);
      if (lv.a.diag[c] != 0.0) lv.x[c] += kCoarseWeight * co.x[co.a.at(i / 2, j / 2)];
    }
  for (int k = 0; k < smooth_; ++k) sweep(lv, false);
}

void MultigridPreconditioner::operator()(const Vector &r, Vector &z) const {
  const Level &top = levels_.front();
  std::copy(r.begin(), r.end(), top.b.begin());
  cycle(0);
  z = top.x;
}

}  // namespace fsilab
