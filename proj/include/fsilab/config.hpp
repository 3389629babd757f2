#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsilab/harness.hpp"

namespace fsilab {

/// Configuration errors; the CLI maps them to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BodySpec {
  std::string shape = "disc";
  Vec2 center;
  double radius = 0.0;
  std::vector<Vec2> vertices;
  double density = 1.0;
  Vec2 initial_velocity;
  double initial_omega = 0.0;
};

struct StudySpec {
  double A = 2.0;
  std::vector<int> N_list{1, 2, 4, 6, 8};
  Placement placement = Placement::lattice;
  std::uint64_t seed = 1;
  double heavy_beta = 0.0;
  double q = 2.0;
  double radius_scale = 0.75;
};

struct ScenarioConfig {
  int nx = 64, ny = 64;
  double lx = 1.0, ly = 1.0;

  double rho_f = 1.0;
  Potential potential = Potential::newtonian(0.01);
  Vec2 g;

  std::vector<BodySpec> bodies;
  std::optional<StudySpec> study;

  double T = 1.0;
  /// 0 = pick from the stability bound
  double dt = 0.0;
  int snapshot_every = 0;

  /// Initial velocity: "zero" or "random" (solenoidal, seeded).
  std::string initial = "zero";
  std::uint64_t initial_seed = 1;
  int initial_modes = 3;
};

/// Parses and validates a JSON document. Errors: "parse error at <path>",
/// "unknown key <path>", "invalid value <path>: <why>".
ScenarioConfig parse_config(const std::string &text);
ScenarioConfig load_config(const std::string &path);

/// Initial state of an explicit-bodies config, projected.
SimState initial_state(const ScenarioConfig &cfg);

/// dt from the config or 0.5 of the stable step of the initial state.
double resolve_dt(const ScenarioConfig &cfg, const SimState &s0);

/// Study plan of a config with a study section.
StudyPlan study_plan(const ScenarioConfig &cfg);

}  // namespace fsilab
