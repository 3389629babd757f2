#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "fsilab/constitutive.hpp"
#include "fsilab/grid.hpp"
#include "fsilab/rigid.hpp"

namespace fsilab {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverOptions {
  int picard_max = 20;
  /// max |u^{k+1} - u^k| relative to max |u^{k+1}|
  double picard_tol = 1e-6;
  double bingham_eps = 1e-6;
  /// Residual bound of the projection solve, in units of max|u*|/h.
  double projection_tol = 1e-12;
  double viscous_tol = 1e-12;
};

/// Fluid, bodies and forcing at one instant. Wall faces of u are zero.
struct SimState {
  double t = 0.0;
  VecField u;
  ScalarField pressure;
  ScalarField rho;
  Cloud cloud;
  Potential potential;
  Vec2 g;
  double rho_f = 1.0;
};

/// ρ_f on fluid cells, body density on body cells (later bodies win).
ScalarField rasterize_density(const Grid2 &g, double rho_f, const Cloud &cloud);

/// State with rasterised density and zero pressure. The velocity is taken
/// as given; call project_state to enforce the constraints.
SimState make_state(VecField u0, const Potential &P, double rho_f, Cloud cloud, Vec2 g = {});

/// ρ-weighted orthogonal projection of s.u onto fields that are discretely
/// divergence-free and rigid on every body; body velocities are updated.
/// Returns the final max |div u|.
double project_state(SimState &s, const SolverOptions &opt = {});

/// ½ Σ_f m_f u_f² with face masses from the cell density.
double kinetic_energy(const SimState &s);

struct EnergyRecord {
  double t = 0.0;
  double kinetic = 0.0;
  /// ∫ F(D u) over the step's viscous solution
  double dissipation_F = 0.0;
  /// ∫ F*(S)
  double dissipation_Fstar = 0.0;
  /// ∫ ρ g·u
  double work = 0.0;
  /// ∫ (F + F* - S:D)
  double fenchel_gap_total = 0.0;
  double divergence_max = 0.0;
  int picard_iterations = 0;
  int projection_iterations = 0;
};

/// Largest admissible dt: min(0.5 h / max|u|, 0.25 h² ρ_min / max μ_eff).
double max_stable_dt(const SimState &s, const SolverOptions &opt = {});

/// One split step: upwind advection, implicit viscous solve with Picard
/// iterations on μ_eff, explicit gravity, coupled projection, rigid body
/// update, density re-rasterisation.
/// Errors: "CFL violated", "viscous fixed point stalled", "body exits
/// domain" (BodyError), "projection did not converge".
SimState step(const SimState &s, double dt, const SolverOptions &opt = {}, EnergyRecord *record = nullptr,
              TensorField *stress = nullptr);

/// One stored instant of a run.
struct HistoryEntry {
  double t = 0.0;
  double dt = 0.0;  // length of the step that ended here, 0 for the start
  VecField u;
  ScalarField rho;
  TensorField stress;
  Cloud cloud;
};

struct RunOptions {
  SolverOptions solver;
  /// Call `snapshot` every this many steps (0 = never); step 0 included.
  int snapshot_every = 0;
  std::function<void(const SimState &, int)> snapshot;
  /// Keep every state in the result (memory heavy; for diagnostics).
  bool keep_history = false;
};

struct RunResult {
  SimState final;
  std::vector<EnergyRecord> records;
  std::vector<HistoryEntry> history;
};

/// Steps from s0.t to s0.t + T with steps of dt (the last one shortened to
/// land on T). T = 0 returns s0 and no records.
RunResult run(const SimState &s0, double T, double dt, const RunOptions &opt = {});

/// Discrete weak momentum balance for a time-independent solenoidal φ:
///   ∫ρu·φ |_T - ∫ρu·φ |_0 - Σ dt ∫ (ρ u⊗u : Dφ - S : Dφ + ρ g·φ).
/// Throws SolverError if Dφ does not vanish on the bodies at some stored
/// instant or if the history is empty.
double weak_form_residual(const std::vector<HistoryEntry> &history, const VecField &phi, Vec2 g = {});

}  // namespace fsilab
