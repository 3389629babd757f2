#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsilab/restriction.hpp"
#include "fsilab/solver.hpp"

namespace fsilab {

/// Scenario construction failures. `hypothesis` names the violated
/// condition ("i1", "w9", "w10", "w14") or is empty for resolution errors.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string &what, std::string hypothesis = {})
      : std::runtime_error(what), hypothesis_(std::move(hypothesis)) {}
  const std::string &hypothesis() const { return hypothesis_; }

 private:
  std::string hypothesis_;
};

enum class Placement { lattice, random };

struct StudyPlan {
  double A = 2.0;
  std::vector<int> N_list{1, 2, 4, 6, 8};
  Potential potential = Potential::newtonian(0.0025);
  /// Exponents of the gradient error and the density bound.
  double p = 2.0;
  double q = 2.0;

  int nx = 256, ny = 256;
  double lx = 1.0, ly = 1.0;
  double rho_f = 1.0;
  Vec2 g{};
  double T = 0.5;
  /// 0 picks 0.8 of the smallest stable step over the initial states.
  double dt = 0.0;

  Placement placement = Placement::lattice;
  std::uint64_t seed = 1;
  /// Body densities ρ_f N^heavy_beta (0: neutrally buoyant).
  double heavy_beta = 0.0;

  /// Radii are radius_scale · min(lx, ly) · (A^-N / N)^(1/2), then clamped
  /// so the bodies fit the placement.
  double radius_scale = 0.75;
  /// Explicit radii in cloud order; used instead of the equal-radius rule
  /// when its length equals N.
  std::vector<double> radii;
  /// λ in λ r² <= |S|, checked when p = 2.
  double lambda = 3.0;
  /// Bound on ρ_f^q |Ω_f| + Σ ρ_n^q |S_n|, in units of ρ_f^q |Ω|.
  double density_bound = 4.0;
  /// Bound on A^N Σ (r_n / L)², L = radius_scale · min(lx, ly).
  double packing_bound = 1.0 + 1e-9;
  /// Modes per direction of the common initial field.
  int u0_modes = 3;
  /// Bodies must be at least this many cells in radius.
  double min_cells = 4.0;

  SolverOptions solver;
  void validate() const;
};

/// Body radius of the N-body scenario (before the resolution check).
double scenario_radius(const StudyPlan &plan, int N);

/// Largest N such that scenarios 1..N all resolve their bodies; 0 if none.
int max_feasible_N(const StudyPlan &plan);

/// Checks (i1) ordering, (w9) density sum, (w10) for p = 2 and (w14)
/// packing volume on a candidate body list. Throws ScenarioError naming
/// the first violated hypothesis.
void check_hypotheses(const StudyPlan &plan, int N, const std::vector<BodyState> &bodies);

/// Common solenoidal initial field of the study (same for every N).
VecField study_initial_field(const StudyPlan &plan);

/// N discs placed by the plan with the common initial field, projected.
/// N = 0 gives the body-free reference. Errors: ScenarioError
/// ("unresolvable radius ... max feasible N = k", or a hypothesis).
SimState build_scenario(const StudyPlan &plan, int N);

/// Time step used by every run of the plan.
double study_dt(const StudyPlan &plan);

struct StudyRow {
  int N = 0;
  double vol_N = 0.0;
  double err_L2 = 0.0;
  double err_grad_Lp = 0.0;
  /// max_n [K_n + Σ dt (F + F*) - K_0 - Σ dt W]; negative when the
  /// energy inequality holds with room to spare.
  double energy_drift = 0.0;
  double max_gap = 0.0;
  std::string error;
  std::vector<EnergyRecord> records;
};

struct StudyResult {
  std::vector<StudyRow> rows;  // in N_list order
  std::vector<EnergyRecord> reference;
  double dt = 0.0;
  double seconds = 0.0;
};

/// Worker count from FSILAB_WORKERS (default 4, at least 1).
int study_workers();

/// Snapshot sink shared by all runs: (N, state, step). Called from worker
/// threads; N = 0 is the reference.
using StudySnapshot = std::function<void(int, const SimState &, int)>;

/// Runs the reference and every N of the plan, workers in parallel.
/// Errors of individual runs are stored in the row.
StudyResult run_study(const StudyPlan &plan, int workers = study_workers(), int snapshot_every = 0,
                      const StudySnapshot &snapshot = {});

/// Discrete p-capacity of the union of the balls of cfg: min over nodal
/// fields v = 1 on the balls and 0 on the boundary of Σ_T |T| |∇v|^p
/// (P1 triangles). Empty cloud gives 0.
double capacity_probe(double p, const RestrictionConfig &cfg, const Grid2 &g);

}  // namespace fsilab
