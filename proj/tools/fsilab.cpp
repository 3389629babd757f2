// fsilab command line: run, study, check-operators, capacity.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fsilab/config.hpp"

namespace fs = std::filesystem;
using namespace fsilab;

namespace {

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string read_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class OutDir {
 public:
  explicit OutDir(const std::string &path) : root_(path) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw RuntimeFailure("cannot create " + path + ": " + ec.message());
  }

  fs::path path(const std::string &rel) const { return root_ / rel; }

  std::ofstream open(const std::string &rel) {
    const fs::path p = root_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    if (!os) throw RuntimeFailure("cannot write " + p.string());
    return os;
  }

  void write(const std::string &rel, const std::string &text) { open(rel) << text; }

  /// manifest.txt: one "<bytes> <path>" line per file, sorted
  void manifest(const std::string &command) {
    std::vector<std::pair<std::string, std::uintmax_t>> files;
    for (const auto &e : fs::recursive_directory_iterator(root_))
      if (e.is_regular_file() && e.path().filename() != "manifest.txt")
        files.emplace_back(fs::relative(e.path(), root_).generic_string(), e.file_size());
    std::sort(files.begin(), files.end());
    std::ofstream os = open("manifest.txt");
    os << "# fsilab " << command << "\n";
    for (const auto &[name, bytes] : files) os << bytes << " " << name << "\n";
  }

 private:
  fs::path root_;
};

void write_energy(std::ostream &os, const std::vector<EnergyRecord> &records, double K0) {
  os << "t,kinetic,diss_F,diss_Fstar,work,gap\n";
  os << "0," << fmt(K0) << ",0,0,0,0\n";
  for (const EnergyRecord &r : records)
    os << fmt(r.t) << "," << fmt(r.kinetic) << "," << fmt(r.dissipation_F) << "," << fmt(r.dissipation_Fstar)
       << "," << fmt(r.work) << "," << fmt(r.fenchel_gap_total) << "\n";
}

void write_state(OutDir &out, const std::string &prefix, const SimState &s) {
  {
    std::ofstream os = out.open(prefix + "_u.txt");
    write_snapshot(os, s.u);
  }
  std::ofstream os = out.open(prefix + "_rho.txt");
  write_snapshot(os, s.rho);
}

std::string step_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", step);
  return buf;
}

int cmd_run(const std::string &config_path, const std::string &out_path) {
  const std::string text = read_file(config_path);
  const ScenarioConfig cfg = parse_config(text);
  if (cfg.study) throw ConfigError("invalid value study: the run command needs a bodies section");
  OutDir out(out_path);
  out.write("config.json", text);

  const SimState s0 = initial_state(cfg);
  const double dt = resolve_dt(cfg, s0);
  RunOptions opt;
  opt.snapshot_every = cfg.snapshot_every;
  opt.snapshot = [&](const SimState &s, int step) { write_state(out, "snapshots/step_" + step_name(step), s); };
  const RunResult res = run(s0, cfg.T, dt, opt);
  {
    std::ofstream os = out.open("energy.csv");
    write_energy(os, res.records, kinetic_energy(s0));
  }
  std::ofstream os = out.open("bodies.csv");
  os << "index,x,y,theta,Yx,Yy,omega\n";
  for (std::size_t k = 0; k < res.final.cloud.size(); ++k) {
    const BodyState &b = res.final.cloud.bodies()[k];
    os << k << "," << fmt(b.h.x) << "," << fmt(b.h.y) << "," << fmt(b.theta) << "," << fmt(b.Y.x) << ","
       << fmt(b.Y.y) << "," << fmt(b.omega) << "\n";
  }
  os.close();
  out.manifest("run");
  std::cerr << "run: " << res.records.size() << " steps of dt = " << dt << "\n";
  return 0;
}

int cmd_study(const std::string &config_path, const std::string &out_path) {
  const std::string text = read_file(config_path);
  const ScenarioConfig cfg = parse_config(text);
  StudyPlan plan = study_plan(cfg);
  plan.validate();
  OutDir out(out_path);
  out.write("config.json", text);

  StudySnapshot snap;
  if (cfg.snapshot_every > 0) fs::create_directories(out.path("snapshots"));
  if (cfg.snapshot_every > 0)
    snap = [&](int N, const SimState &s, int step) {
      write_state(out, "snapshots/N" + std::to_string(N) + "_step_" + step_name(step), s);
    };
  const int workers = study_workers();
  const StudyResult res = run_study(plan, workers, cfg.snapshot_every, snap);

  std::ofstream os = out.open("study.csv");
  os << "N,vol_N,err_L2,err_grad_Lp,energy_drift,max_gap\n";
  bool failed = false;
  for (const StudyRow &r : res.rows) {
    if (!r.error.empty()) {
      std::cerr << "N = " << r.N << ": " << r.error << "\n";
      failed = true;
      os << r.N << "," << fmt(r.vol_N) << ",nan,nan,nan,nan\n";
      continue;
    }
    os << r.N << "," << fmt(r.vol_N) << "," << fmt(r.err_L2) << "," << fmt(r.err_grad_Lp) << ","
       << fmt(r.energy_drift) << "," << fmt(r.max_gap) << "\n";
    std::ofstream e = out.open("runs/energy_N" + std::to_string(r.N) + ".csv");
    write_energy(e, r.records, kinetic_energy(build_scenario(plan, r.N)));
  }
  os.close();
  {
    std::ofstream e = out.open("runs/energy_reference.csv");
    write_energy(e, res.reference, kinetic_energy(build_scenario(plan, 0)));
  }
  out.manifest("study");
  std::cerr << "study: dt = " << res.dt << ", " << workers << " workers, " << res.seconds << " s\n";
  return failed ? 2 : 0;
}

int cmd_check_operators(int trials, const std::string &out_path, int nx, int configs, int fields,
                        std::uint64_t seed) {
  if (trials < 1) throw ConfigError("invalid value --trials: must be >= 1");
  if (nx < 32) throw ConfigError("invalid value --nx: must be >= 32");
  OutDir out(out_path);
  // grid on [-1, 1]^2 so that two-stage cascades fit
  const Grid2 g(nx, nx, 2.0, 2.0, {-1.0, -1.0});
  std::mt19937_64 rng(seed);

  std::ofstream os = out.open("norms.csv");
  os << "N,p,r_min,ratio_L,ratio_W,c_estimate\n";
  for (int N = 1; N <= 2; ++N) {
    const RestrictionConfig cfg = random_config(rng, g, N, false);
    for (double p : {2.0, 3.0}) {
      const NormReport r = measure_operator_norms(cfg, p, trials, g, seed + std::uint64_t(N));
      os << r.N << "," << fmt(r.p) << "," << fmt(r.r_min) << "," << fmt(r.ratio_L) << "," << fmt(r.ratio_W) << ","
         << fmt(r.c_estimate) << "\n";
    }
  }
  os.close();

  const PropertyReport rep = check_properties(g, configs, fields, seed);
  const bool ok = rep.max_divergence <= 1e-7 && rep.max_outside_change == 0.0 && rep.max_ball_stdev <= 1e-8 &&
                  rep.max_linearity <= 1e-10;
  std::ofstream ps = out.open("properties.csv");
  ps << "configs,fields,nested,max_divergence,max_outside_change,max_ball_stdev,max_linearity,ok\n";
  ps << rep.configs << "," << rep.fields << "," << rep.nested << "," << fmt(rep.max_divergence) << ","
     << fmt(rep.max_outside_change) << "," << fmt(rep.max_ball_stdev) << "," << fmt(rep.max_linearity) << ","
     << (ok ? 1 : 0) << "\n";
  ps.close();
  out.manifest("check-operators");
  if (!ok) std::cerr << "check-operators: a restriction contract failed, see properties.csv\n";
  return ok ? 0 : 2;
}

int cmd_capacity(const std::vector<double> &ps, const std::vector<double> &radii, int n, const std::string &out_path) {
  if (n < 16) throw ConfigError("invalid value --n: must be >= 16");
  for (double r : radii)
    if (!(r > 0.0 && r < 0.5)) throw ConfigError("invalid value --radii: radii must lie in (0, 0.5)");
  for (double p : ps)
    if (!(p >= 2.0)) throw ConfigError("invalid value --p: must be >= 2");
  OutDir out(out_path);
  const Grid2 g(n, n, 1.0, 1.0);
  std::ofstream os = out.open("capacity.csv");
  os << "p,r,capacity\n";
  for (double p : ps)
    for (double r : radii) {
      const RestrictionConfig cfg({{0.5, 0.5}}, {r});
      os << fmt(p) << "," << fmt(r) << "," << fmt(capacity_probe(p, cfg, g)) << "\n";
    }
  os.close();
  out.manifest("capacity");
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"fluid-rigid body simulations and restriction operator checks"};
  app.require_subcommand(1);

  std::string config, out = "out";
  auto *run_cmd = app.add_subcommand("run", "simulate the bodies of a config");
  run_cmd->add_option("--config", config, "JSON scenario")->required();
  run_cmd->add_option("--out", out, "output directory");

  auto *study_cmd = app.add_subcommand("study", "run the N-body study of a config");
  study_cmd->add_option("--config", config, "JSON scenario with a study section")->required();
  study_cmd->add_option("--out", out, "output directory");

  int trials = 50, nx = 128, configs = 20, fields = 10;
  std::uint64_t seed = 1;
  auto *ops_cmd = app.add_subcommand("check-operators", "restriction operator norms and contracts");
  ops_cmd->add_option("--trials", trials, "test fields per norm estimate");
  ops_cmd->add_option("--out", out, "output directory");
  ops_cmd->add_option("--nx", nx, "cells per side on [-1, 1]^2");
  ops_cmd->add_option("--configs", configs, "random configurations in the property suite");
  ops_cmd->add_option("--fields", fields, "fields per configuration");
  ops_cmd->add_option("--seed", seed, "random seed");

  std::vector<double> ps{2.0, 3.0}, radii{0.04, 0.016, 0.0064, 0.00256};
  int n = 256;
  auto *cap_cmd = app.add_subcommand("capacity", "p-capacity of a shrinking ball in the unit square");
  cap_cmd->add_option("--p", ps, "exponents");
  cap_cmd->add_option("--radii", radii, "ball radii");
  cap_cmd->add_option("--n", n, "cells per side");
  cap_cmd->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    if (e.get_exit_code() == 0) return 0;
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*run_cmd) return cmd_run(config, out);
    if (*study_cmd) return cmd_study(config, out);
    if (*ops_cmd) return cmd_check_operators(trials, out, nx, configs, fields, seed);
    if (*cap_cmd) return cmd_capacity(ps, radii, n, out);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const ScenarioError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
