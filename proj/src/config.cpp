#include "fsilab/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fsilab {

namespace {

using json = nlohmann::json;

[[noreturn]] void invalid(const std::string &path, const std::string &why) {
  throw ConfigError("invalid value " + path + ": " + why);
}

/// Object view that records which keys were read, so leftovers can be
/// reported as unknown.
class Section {
 public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("parse error at " + where() + ": expected an object");
  }

  bool has(const std::string &k) const { return j_.contains(k); }
  std::string key(const std::string &k) const { return path_.empty() ? k : path_ + "." + k; }

  const json &raw(const std::string &k) {
    seen_.insert(k);
    return j_.at(k);
  }

  double number(const std::string &k, double def) {
    if (!has(k)) return def;
    const json &v = raw(k);
    if (!v.is_number()) throw ConfigError("parse error at " + key(k) + ": expected a number");
    return v.get<double>();
  }

  int integer(const std::string &k, int def) {
    if (!has(k)) return def;
    const json &v = raw(k);
    if (!v.is_number_integer()) throw ConfigError("parse error at " + key(k) + ": expected an integer");
    return v.get<int>();
  }

  std::string string(const std::string &k, const std::string &def) {
    if (!has(k)) return def;
    const json &v = raw(k);
    if (!v.is_string()) throw ConfigError("parse error at " + key(k) + ": expected a string");
    return v.get<std::string>();
  }

  Vec2 vec2(const std::string &k, Vec2 def) {
    if (!has(k)) return def;
    return as_vec2(raw(k), key(k));
  }

  Section sub(const std::string &k) {
    seen_.insert(k);
    return Section(j_.at(k), key(k));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + key(it.key()));
  }

  static Vec2 as_vec2(const json &v, const std::string &path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
      throw ConfigError("parse error at " + path + ": expected [x, y]");
    return {v[0].get<double>(), v[1].get<double>()};
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

double positive(double x, const std::string &path) {
  if (!(x > 0.0)) invalid(path, "must be positive");
  return x;
}

double non_negative(double x, const std::string &path) {
  if (!(x >= 0.0)) invalid(path, "must be non-negative");
  return x;
}

Potential parse_potential(Section s) {
  const std::string kind = s.string("kind", "newtonian");
  Potential P;
  if (kind == "newtonian") {
    P = Potential::newtonian(positive(s.number("mu", 0.01), s.key("mu")));
  } else if (kind == "powerlaw") {
    const double alpha = non_negative(s.number("alpha", 0.0), s.key("alpha"));
    const double beta = positive(s.number("beta", 1.0), s.key("beta"));
    const double p = s.number("p", 3.0);
    if (!(p >= 2.0)) invalid(s.key("p"), "power-law exponent must be >= 2");
    P = Potential::powerlaw(alpha, beta, p);
  } else if (kind == "bingham") {
    const double ys = positive(s.number("yield_stress", 1.0), s.key("yield_stress"));
    P = Potential::bingham(ys, positive(s.number("mu", 0.01), s.key("mu")));
  } else {
    invalid(s.key("kind"), "unknown potential '" + kind + "'");
  }
  s.finish();
  return P;
}

BodySpec parse_body(Section s) {
  BodySpec b;
  b.shape = s.string("shape", "disc");
  if (!s.has("center")) invalid(s.key("center"), "required");
  b.center = s.vec2("center", {});
  if (b.shape == "disc") {
    b.radius = positive(s.number("radius", 0.0), s.key("radius"));
  } else if (b.shape == "polygon") {
    if (!s.has("vertices")) invalid(s.key("vertices"), "required for polygons");
    const json &v = s.raw("vertices");
    if (!v.is_array()) throw ConfigError("parse error at " + s.key("vertices") + ": expected a list");
    for (std::size_t k = 0; k < v.size(); ++k)
      b.vertices.push_back(Section::as_vec2(v[k], s.key("vertices") + "[" + std::to_string(k) + "]"));
    if (b.vertices.size() < 3) invalid(s.key("vertices"), "need at least 3 vertices");
  } else {
    invalid(s.key("shape"), "expected disc or polygon");
  }
  b.density = positive(s.number("density", 1.0), s.key("density"));
  b.initial_velocity = s.vec2("initial_velocity", {});
  b.initial_omega = s.number("initial_omega", 0.0);
  s.finish();
  return b;
}

StudySpec parse_study(Section s) {
  StudySpec st;
  st.A = s.number("A", st.A);
  if (!(st.A > 1.0)) invalid(s.key("A"), "must exceed 1");
  if (s.has("N_list")) {
    const json &v = s.raw("N_list");
    if (!v.is_array()) throw ConfigError("parse error at " + s.key("N_list") + ": expected a list");
    st.N_list.clear();
    for (const json &x : v) {
      if (!x.is_number_integer()) throw ConfigError("parse error at " + s.key("N_list") + ": expected integers");
      st.N_list.push_back(x.get<int>());
    }
    for (std::size_t k = 0; k < st.N_list.size(); ++k)
      if (st.N_list[k] < 0 || (k > 0 && st.N_list[k] <= st.N_list[k - 1]))
        invalid(s.key("N_list"), "must be ascending non-negative integers");
    if (st.N_list.empty()) invalid(s.key("N_list"), "empty");
  }
  const std::string pl = s.string("placement", "lattice");
  if (pl == "lattice")
    st.placement = Placement::lattice;
  else if (pl == "random")
    st.placement = Placement::random;
  else
    invalid(s.key("placement"), "expected lattice or random");
  const int seed = s.integer("seed", 1);
  if (seed < 0) invalid(s.key("seed"), "must be non-negative");
  st.seed = std::uint64_t(seed);
  st.heavy_beta = non_negative(s.number("heavy_beta", 0.0), s.key("heavy_beta"));
  st.q = s.number("q", 2.0);
  if (!(st.q >= 1.0)) invalid(s.key("q"), "must be >= 1");
  st.radius_scale = positive(s.number("radius_scale", st.radius_scale), s.key("radius_scale"));
  s.finish();
  return st;
}

}  // namespace

ScenarioConfig parse_config(const std::string &text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError("parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  Section top(root, "");
  ScenarioConfig c;

  if (!top.has("grid")) invalid("grid", "required");
  {
    Section s = top.sub("grid");
    c.nx = s.integer("nx", c.nx);
    c.ny = s.integer("ny", c.ny);
    if (c.nx < 8) invalid("grid.nx", "need at least 8 cells");
    if (c.ny < 8) invalid("grid.ny", "need at least 8 cells");
    c.lx = positive(s.number("lx", c.lx), "grid.lx");
    c.ly = positive(s.number("ly", c.ly), "grid.ly");
    if (std::abs(c.lx / c.nx - c.ly / c.ny) > 1e-12 * std::max(c.lx, c.ly)) invalid("grid", "cells must be square");
    s.finish();
  }
  if (top.has("fluid")) {
    Section s = top.sub("fluid");
    c.rho_f = positive(s.number("rho_f", c.rho_f), "fluid.rho_f");
    if (s.has("potential")) c.potential = parse_potential(s.sub("potential"));
    c.g = s.vec2("g", c.g);
    s.finish();
  }
  if (top.has("bodies") && top.has("study")) throw ConfigError("invalid value bodies: give either bodies or study, not both");
  if (top.has("bodies")) {
    const json &v = top.raw("bodies");
    if (!v.is_array()) throw ConfigError("parse error at bodies: expected a list");
    for (std::size_t k = 0; k < v.size(); ++k) c.bodies.push_back(parse_body(Section(v[k], "bodies[" + std::to_string(k) + "]")));
  } else if (top.has("study")) {
    c.study = parse_study(top.sub("study"));
  } else {
    invalid("bodies", "one of bodies or study is required");
  }
  if (top.has("time")) {
    Section s = top.sub("time");
    c.T = non_negative(s.number("T", c.T), "time.T");
    c.dt = non_negative(s.number("dt", 0.0), "time.dt");
    c.snapshot_every = s.integer("snapshot_every", 0);
    if (c.snapshot_every < 0) invalid("time.snapshot_every", "must be non-negative");
    s.finish();
  }
  if (top.has("initial")) {
    Section s = top.sub("initial");
    c.initial = s.string("kind", c.initial);
    if (c.initial != "zero" && c.initial != "random") invalid("initial.kind", "expected zero or random");
    const int seed = s.integer("seed", 1);
    if (seed < 0) invalid("initial.seed", "must be non-negative");
    c.initial_seed = std::uint64_t(seed);
    c.initial_modes = s.integer("modes", c.initial_modes);
    if (c.initial_modes < 1) invalid("initial.modes", "must be at least 1");
    s.finish();
  }
  top.finish();
  return c;
}

ScenarioConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return parse_config(s.str());
}

SimState initial_state(const ScenarioConfig &cfg) {
  if (cfg.study) throw ConfigError("config describes a study, not a single run");
  const Grid2 g(cfg.nx, cfg.ny, cfg.lx, cfg.ly);
  VecField u0(g);
  if (cfg.initial == "random") {
    SolenoidalSampler s(cfg.initial_seed);
    u0 = s.global(g, cfg.initial_modes);
  }
  std::vector<BodyState> bodies;
  for (std::size_t k = 0; k < cfg.bodies.size(); ++k) {
    const BodySpec &b = cfg.bodies[k];
    BodyState s;
    s.shape = b.shape == "disc" ? Shape::disc(b.radius) : Shape::polygon(b.vertices);
    s.h = b.center;
    s.rho = b.density;
    s.Y = b.initial_velocity;
    s.omega = b.initial_omega;
    const std::string path = "bodies[" + std::to_string(k) + "]";
    if (containment_violations(s, g) > 0) invalid(path, "body leaves the domain");
    // rigid field of the body written into the initial velocity
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 1; i < g.nx(); ++i)
        if (s.contains(g.u_face(i, j))) u0.u(i, j) = s.velocity_at(g.u_face(i, j)).x;
    for (int j = 1; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i)
        if (s.contains(g.v_face(i, j))) u0.v(i, j) = s.velocity_at(g.v_face(i, j)).y;
    bodies.push_back(s);
  }
  for (std::size_t a = 0; a < bodies.size(); ++a)
    for (std::size_t b = a + 1; b < bodies.size(); ++b)
      if (norm(bodies[a].h - bodies[b].h) < bodies[a].radius() + bodies[b].radius())
        invalid("bodies[" + std::to_string(b) + "]", "overlaps bodies[" + std::to_string(a) + "]");
  SimState s = make_state(u0, cfg.potential, cfg.rho_f, Cloud(bodies), cfg.g);
  project_state(s);
  return s;
}

double resolve_dt(const ScenarioConfig &cfg, const SimState &s0) {
  if (cfg.dt > 0.0) return cfg.dt;
  double dt = 0.5 * max_stable_dt(s0);
  // bodies accelerate under gravity; keep the first steps well inside the bound
  const double gn = norm(cfg.g);
  if (gn > 0.0) dt = std::min(dt, std::sqrt(0.5 * s0.u.grid().h() / gn));
  if (!std::isfinite(dt)) dt = cfg.T > 0.0 ? cfg.T / 100.0 : 0.01;
  return dt;
}

StudyPlan study_plan(const ScenarioConfig &cfg) {
  if (!cfg.study) throw ConfigError("config has no study section");
  StudyPlan p;
  const StudySpec &s = *cfg.study;
  p.A = s.A;
  p.N_list = s.N_list;
  p.potential = cfg.potential;
  p.p = cfg.potential.p();
  p.q = s.q;
  p.nx = cfg.nx;
  p.ny = cfg.ny;
  p.lx = cfg.lx;
  p.ly = cfg.ly;
  p.rho_f = cfg.rho_f;
  p.g = cfg.g;
  p.T = cfg.T;
  p.dt = cfg.dt;
  p.placement = s.placement;
  p.seed = s.seed;
  p.heavy_beta = s.heavy_beta;
  p.radius_scale = s.radius_scale;
  return p;
}

}  // namespace fsilab
