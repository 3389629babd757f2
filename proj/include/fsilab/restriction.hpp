#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "fsilab/grid.hpp"

namespace fsilab {

class RestrictionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Smooth switch H with 0 <= H <= 1, H = 0 on (-∞, ¼], H = 1 on [¾, ∞) and
/// H'(Z) = H'(1 - Z). Hence H(Z) + H(1 - Z) = 1.
class Cutoff {
 public:
  enum class Kind { polynomial, smooth_exp };

  explicit Cutoff(Kind kind = Kind::polynomial) : kind_(kind) {}

  Kind kind() const { return kind_; }
  double value(double z) const;
  double derivative(double z) const;

 private:
  Kind kind_;
};

/// Centres h_n and radii r_n of the bodies, radii ascending. Stage n
/// (0-based) of the composed operator acts with radius 5^n r_n.
class RestrictionConfig {
 public:
  RestrictionConfig() = default;
  RestrictionConfig(std::vector<Vec2> centers, std::vector<double> radii);

  std::size_t size() const { return centers_.size(); }
  const std::vector<Vec2> &centers() const { return centers_; }
  const std::vector<double> &radii() const { return radii_; }
  double stage_radius(std::size_t n) const;

  /// Smallest distance to the nearest branch switch of the induction in the
  /// composition lemma: at level k, body k is compared with bodies i > k
  /// through |h_k - h_i| + 2·5^k r_k versus 5^{k+1} r_i. Configurations
  /// whose margin is below a few cells sit on a discrete tie.
  double lemma_margin() const;
  /// True if some level falls in the nested branch (a ball inside the
  /// constancy region of a larger one).
  bool has_nested_case() const;

 private:
  std::vector<Vec2> centers_;
  std::vector<double> radii_;
};

struct RestrictionOptions {
  Cutoff cutoff{};
  /// Residual bound (max norm, relative to max(1, max|f|)) for the
  /// divergence solve.
  double solver_tol = 1e-12;
};

/// E_r[u] about `center`: ball average · H(2 - |x|/r) + u · H(|x|/r - 1),
/// evaluated at face centres. Faces with |x - center| >= 1.75 r are copied.
VecField apply_E(const VecField &u, double r, Vec2 center = {}, const RestrictionOptions &opt = {});

/// Right inverse of the divergence on the annulus r < |x - center| < 2r:
/// returns v with div v = f on the annulus cells and v = 0 on every face
/// not shared by two annulus cells. Minimises Σ v²/w over faces with a
/// smooth weight w vanishing at both rims.
/// Errors: "unresolved annulus" (r < 2.5 h), "incompatible mean" (|∫f| above
/// 1e-8 ‖f‖₁ + mean_floor), "source outside annulus".
VecField bogovskii_annulus(const ScalarField &f, double r, Vec2 center, const RestrictionOptions &opt = {},
                           double mean_floor = 0.0);

/// R_r(h)[u]: E_r about h minus the annular correction of its divergence.
/// Requires B_{2r}(h) inside the grid ("ball exceeds grid").
VecField apply_R(const VecField &u, Vec2 h, double r, const RestrictionOptions &opt = {});

/// R_{r_1}(h_1) ∘ R_{5 r_2}(h_2) ∘ … ∘ R_{5^{N-1} r_N}(h_N), largest index
/// applied first.
VecField apply_RN(const VecField &u, const RestrictionConfig &cfg, const RestrictionOptions &opt = {});

/// Derivative of R_r(h)[u] with respect to h_j, j = 0, 1:
///   R_r(h)[∂_j u] - ∂_j (R_r(h)[u]),
/// with ∂_j the centred whole-cell difference (zero outside the grid).
std::array<VecField, 2> h_derivative(const VecField &u, Vec2 h, double r, const RestrictionOptions &opt = {});

/// Centred whole-cell difference along axis (0 = x, 1 = y) of a MAC field.
VecField central_difference(const VecField &u, int axis);

/// Random divergence-free fields from random stream functions.
class SolenoidalSampler {
 public:
  explicit SolenoidalSampler(std::uint64_t seed) : rng_(seed) {}

  /// Sum of sine modes up to `modes` per direction vanishing on the
  /// boundary; O(1) amplitude.
  VecField global(const Grid2 &g, int modes = 6);
  /// Field supported in B_scale(center): random Fourier stream function
  /// times a smooth bump.
  VecField localized(const Grid2 &g, Vec2 center, double scale, int modes = 4);

  std::mt19937_64 &rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

/// Maximal norm ratios observed over a set of test fields.
struct NormReport {
  std::size_t N = 0;
  double p = 2.0;
  double r_min = 0.0;
  int trials = 0;
  /// ||R_N φ||_p / ||φ||_p
  double ratio_L = 0.0;
  /// ||∇R_N φ||_p / ||∇φ||_p
  double ratio_W = 0.0;
  /// ||R_N φ - φ||_p / ||φ||_{L^p(∪ B_{2 R_n})}
  double error_ratio_L = 0.0;
  /// same for gradients
  double error_ratio_W = 0.0;
  /// max of the four ratios, to the power 1/N
  double c_estimate = 0.0;
  /// max{c^p, 5^d}
  double A1 = 0.0;
  /// ratios skipped because the denominator vanished
  int skipped = 0;
};

NormReport measure_operator_norms(const RestrictionConfig &cfg, double p, const std::vector<VecField> &fields,
                                  const RestrictionOptions &opt = {});
/// Random test fields localised near a random body at a random multiple in
/// [1, 2] of its stage radius. The family is scale covariant, so for a
/// single body the ratios do not depend on r beyond discretisation.
NormReport measure_operator_norms(const RestrictionConfig &cfg, double p, int trials, const Grid2 &g,
                                  std::uint64_t seed, const RestrictionOptions &opt = {});

/// Random configuration of N bodies (1 or 2) whose stage balls B_{2R}
/// fit inside g, with radii at least 2.5 cells. For N = 2, `nested` picks
/// the branch of the composition lemma; the lemma margin is kept above
/// three cells. Throws RestrictionError if no such configuration fits.
RestrictionConfig random_config(std::mt19937_64 &rng, const Grid2 &g, int N, bool nested);

/// Worst values of the operator contracts over a batch of inputs.
struct PropertyReport {
  int configs = 0;
  int fields = 0;
  int nested = 0;
  /// max |div R_N u|
  double max_divergence = 0.0;
  /// max |R_N u - u| on faces outside every B_{2R_n}(h_n)
  double max_outside_change = 0.0;
  /// max over bodies of the cellwise stdev of R_N u on B_{r_n}(h_n),
  /// divided by 1 + max|u|
  double max_ball_stdev = 0.0;
  /// max |R_N(a u + b v) - a R_N u - b R_N v|
  double max_linearity = 0.0;
};

/// Runs R_N on `fields` random solenoidal fields for each of `configs`
/// random configurations (every fourth one nested).
PropertyReport check_properties(const Grid2 &g, int configs, int fields, std::uint64_t seed,
                                const RestrictionOptions &opt = {});

}  // namespace fsilab
