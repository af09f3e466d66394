#include "lagstokes/runner.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <random>

#include "lagstokes/diagnostics.hpp"
#include "lagstokes/io.hpp"
#include "lagstokes/nonlinear.hpp"
#include "lagstokes/transmission.hpp"

namespace lagstokes {

namespace fs = std::filesystem;

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"solve-linear", "solve-nonlinear", "solve-global",
                                                 "spectrum",     "diagnose",        "bootstrap-check",
                                                 "transmission-test"};
  return names;
}

int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

RefMesh build_mesh(const MeshConfig& m) {
  if (!m.file.empty()) return load_mesh(m.file);
  return build_two_phase_disk(m.n_radial, m.n_angular, m.r_inner, m.r_outer);
}

Vector initial_velocity(const FESpace& V, const MaterialParams& params, const SolverConfig& s,
                        std::uint64_t seed) {
  const SpMat M = mass_matrix(V, params);
  const RigidBasis rb = build_rigid_basis(V, M);
  Vector u = Vector::Zero(V.nv());
  if (s.initial == "strain") {
    u = project_out_rigid(project_divergence_free(V, params, V.interpolate([](const Vec2& x) {
                            return Vec2(x.x() + 0.3 * x.y() * x.y(), -x.y());
                          })), rb, M);
  } else if (s.initial == "random") {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    for (int i = 0; i < V.mesh().num_nodes(); ++i)
      for (int c = 0; c < 2; ++c) u[V.node_dof(i, c)] = n(rng);
    u = project_out_rigid(project_divergence_free(V, params, u), rb, M);
    u /= std::sqrt(u.dot(M * u));
  } else if (s.initial == "rotation") {
    u = rb.p[2];
  }
  u *= s.amplitude;
  if (s.rigid_offset != 0.0) u += s.rigid_offset * rb.p[0];
  return u;
}

namespace {

struct Run {
  const RunConfig& cfg;
  std::ostream& log;
  std::string name;
  fs::path dir;
  RefMesh mesh;
  std::uint64_t hash = 0;
  std::vector<std::pair<std::string, std::string>> results;
  std::vector<std::string> outputs;

  void say(const std::string& s) const {
    if (cfg.verbose) log << "[" << name << "] " << s << '\n';
  }
  std::string path(const std::string& file) {
    outputs.push_back(file);
    return (dir / file).string();
  }
  void result(const std::string& k, double v) { results.emplace_back(k, format_double(v)); }
  void result(const std::string& k, long long v) { results.emplace_back(k, std::to_string(v)); }
  void result(const std::string& k, int v) { result(k, static_cast<long long>(v)); }
  void result(const std::string& k, bool v) { results.emplace_back(k, v ? "true" : "false"); }
  void result(const std::string& k, const std::string& v) { results.emplace_back(k, v); }

  void save_mesh_file() { save_mesh(path("mesh.txt"), mesh); }

  void manifest() {
    std::ofstream os(dir / "manifest.txt");
    if (!os) throw Error(ErrorKind::io, "cannot write manifest in " + dir.string());
    os << "LAGSTOKES-MANIFEST v1\n";
    os << "command = " << name << '\n';
    os << "seed = " << cfg.seed << '\n';
    os << "mesh_hash = " << hash_hex(hash) << '\n';
    os << "mesh_nodes = " << mesh.num_nodes() << '\n';
    os << "mesh_cells = " << mesh.num_cells() << '\n';
    for (const auto& [k, v] : cfg.effective()) os << "config." << k << " = " << v << '\n';
    for (const auto& [k, v] : results) os << "result." << k << " = " << v << '\n';
    for (const auto& f : outputs) os << "output = " << f << '\n';
  }
};

Snapshot make_snapshot(const Run& r, const FESpace& V, const StokesState& s, const Vector* X = nullptr) {
  Snapshot snap;
  snap.time = s.t;
  snap.mesh_hash = r.hash;
  snap.blocks.push_back({"velocity", 2, s.u});
  snap.blocks.push_back({"pressure", 1, s.q});
  const Field nodal = velocity_to_field(V, s.u);
  snap.blocks.push_back({"velocity_nodal", 2, nodal.values});
  if (X) snap.blocks.push_back({"displacement", 2, *X});
  return snap;
}

void write_snapshots(Run& r, const FESpace& V, const Trajectory& tr, const std::vector<Vector>* X = nullptr) {
  if (!r.cfg.output.snapshots) return;
  const size_t n = tr.states.size();
  for (size_t i = 0; i < n; ++i) {
    if (i % r.cfg.output.snapshot_every != 0 && i + 1 != n) continue;
    char name[32];
    std::snprintf(name, sizeof name, "snap_%05zu.txt", i);
    save_snapshot(r.path(name), make_snapshot(r, V, tr.states[i], X ? &(*X)[i] : nullptr));
  }
}

// Columns: step,time,energy,dissipation,momentum_0..2,lagrangian_momentum_0..2,
// barycenter_x,barycenter_y,energy_residual (0 on the first row).
ConservationReport write_trajectory(Run& r, const FESpace& V, const Trajectory& tr, const std::string& file) {
  const ConservationReport rep = conservation_report(V, r.cfg.material, tr);
  CsvTable t({"step", "time", "energy", "dissipation", "momentum_0", "momentum_1", "momentum_2",
              "lagrangian_momentum_0", "lagrangian_momentum_1", "lagrangian_momentum_2", "barycenter_x",
              "barycenter_y", "energy_residual"});
  for (size_t n = 0; n < rep.time.size(); ++n) {
    t.row().add(static_cast<long long>(n)).add(rep.time[n]).add(rep.energy[n]).add(rep.dissipation[n]);
    for (double m : rep.momentum[n]) t.add(m);
    for (double m : rep.lagrangian_momentum[n]) t.add(m);
    t.add(rep.barycenter[n].x()).add(rep.barycenter[n].y()).add(n ? rep.energy_residual[n - 1] : 0.0);
  }
  t.save(r.path(file));
  r.result("energy_monotone", rep.energy_monotone);
  r.result("max_momentum_drift", rep.max_momentum_drift);
  r.result("max_lagrangian_momentum_drift", rep.max_lagrangian_drift);
  r.result("barycenter_residual", rep.barycenter_residual);
  r.result("cumulative_energy_residual", rep.cumulative_energy_residual);
  return rep;
}

void fit_decay(Run& r, const ConservationReport& rep, const std::string& key) {
  bool positive = rep.energy.size() >= 8;
  for (double e : rep.energy) positive = positive && e > 0.0;
  if (!positive) return;
  const DecayFit f = decay_fit(rep.time, rep.energy);
  r.result(key + "_energy_rate", f.rate);
  r.result(key + "_energy_rate_half_width", f.half_width);
  r.result(key + "_eps0", 0.5 * f.rate);
}

void write_iterations(Run& r, const std::vector<IterationRecord>& it, const std::string& file) {
  CsvTable t({"iteration", "distance", "factor", "residual", "horizon"});
  for (const auto& x : it) t.row().add(x.iteration).add(x.distance).add(x.factor).add(x.residual).add(x.horizon);
  t.save(r.path(file));
}

IterationConfig iteration_config(const RunConfig& c) {
  IterationConfig it = c.iteration;
  it.dt = c.solver.dt;
  it.linear_tol = c.solver.linear_tol;
  return it;
}

int step_count(const SolverConfig& s) {
  return std::max(1, static_cast<int>(std::lround(s.horizon / s.dt)));
}

void solve_linear(Run& r) {
  const FESpace V(r.mesh);
  const StokesStepper st(V, r.cfg.material, r.cfg.solver.dt, r.cfg.solver.linear_tol);
  const Vector u0 = initial_velocity(V, r.cfg.material, r.cfg.solver, r.cfg.seed);
  const int steps = step_count(r.cfg.solver);
  r.say("backward Euler, " + std::to_string(steps) + " steps");
  const Trajectory tr = run_linear(st, u0, steps);
  r.save_mesh_file();
  write_snapshots(r, V, tr);
  const auto rep = write_trajectory(r, V, tr, "trajectory.csv");
  r.result("steps", steps);
  r.result("final_energy", rep.energy.back());
  fit_decay(r, rep, "linear");
}

void solve_nonlinear(Run& r) {
  const FESpace V(r.mesh);
  const IterationConfig it = iteration_config(r.cfg);
  const Vector v0 = initial_velocity(V, r.cfg.material, r.cfg.solver, r.cfg.seed);
  const PicardSolver solver(V, r.cfg.material, it);
  r.say("Picard, initial horizon " + format_double(solver.initial_horizon()));
  const LocalSolution s = solver.solve(v0);
  r.save_mesh_file();
  write_snapshots(r, V, s.traj, &s.X);
  write_iterations(r, s.iterations, "iterations.csv");
  write_trajectory(r, V, s.traj, "trajectory.csv");
  r.result("initial_horizon", solver.initial_horizon());
  r.result("horizon", s.horizon);
  r.result("restarts", s.restarts);
  r.result("iterations", static_cast<int>(s.iterations.size()));
  r.result("contraction", s.contraction);
  r.result("substituted_residual", s.residual);
  r.result("norm_U", s.norm_U);
  r.result("in_ball", s.in_ball);
}

void solve_global(Run& r) {
  const FESpace V(r.mesh);
  IterationConfig it = iteration_config(r.cfg);
  it.T = r.cfg.solver.horizon;
  const Vector v0 = initial_velocity(V, r.cfg.material, r.cfg.solver, r.cfg.seed);
  const SpMat M = mass_matrix(V, r.cfg.material);
  const RigidBasis rb = build_rigid_basis(V, M);
  const Eigen::Vector3d mom = rigid_moments(rb, M, v0);
  const double scale = std::max(std::sqrt(v0.dot(M * v0)), 1e-300);
  if (mom.cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw Error(ErrorKind::validation,
                "initial data violates the orthogonality hypothesis (eta v0, p_alpha) = 0: max |moment| = " +
                    format_double(mom.cwiseAbs().maxCoeff()));
  r.say("global continuation to T = " + format_double(it.T));
  const GlobalReport g = global_continue(V, v0, it, r.cfg.material);
  r.save_mesh_file();
  write_snapshots(r, V, g.traj, &g.Xmap);
  write_iterations(r, g.iterations, "iterations.csv");
  write_trajectory(r, V, g.traj, "trajectory.csv");
  CsvTable xt({"window", "time", "X", "bound"});
  for (size_t k = 0; k < g.X.size(); ++k)
    xt.row().add(static_cast<long long>(k)).add(g.window_end[k]).add(g.X[k]).add(g.bound);
  xt.save(r.path("x_functional.csv"));
  const RecursionFit fit = fit_x_recursion(g.X);
  r.result("v0_norm", g.v0_norm);
  r.result("eps0", g.eps0);
  r.result("bound", g.bound);
  r.result("completed", g.completed);
  r.result("decay_rate", g.decay_rate);
  r.result("x_fit_a", fit.a);
  r.result("x_fit_b", fit.b);
  if (!g.completed) {
    r.result("failure", g.failure);
    r.manifest();
    throw Error(ErrorKind::convergence, "continuation failure: " + g.failure);
  }
}

void spectrum(Run& r) {
  const FESpace V(r.mesh);
  const SpectrumReport sp = discrete_spectrum(V, r.cfg.material, r.cfg.solver.spectrum_count,
                                              r.cfg.solver.spectrum_shift, r.cfg.seed, r.cfg.solver.spectrum_tol);
  CsvTable t({"index", "real", "imag", "residual"});
  for (size_t i = 0; i < sp.eigenvalues.size(); ++i)
    t.row().add(static_cast<long long>(i)).add(sp.eigenvalues[i].real()).add(sp.eigenvalues[i].imag()).add(sp.residuals[i]);
  r.save_mesh_file();
  t.save(r.path("spectrum.csv"));
  r.result("kernel_dim", sp.kernel_dim);
  r.result("smallest_nonzero_real", sp.smallest_nonzero_real);
  r.result("max_principal_angle", sp.max_principal_angle);
  r.result("converged", sp.converged);
  r.result("iterations", sp.iterations);
}

void diagnose(Run& r) {
  const FESpace V(r.mesh);
  const StokesStepper st(V, r.cfg.material, r.cfg.solver.dt, r.cfg.solver.linear_tol);
  const Vector u0 = initial_velocity(V, r.cfg.material, r.cfg.solver, r.cfg.seed);
  const int steps = step_count(r.cfg.solver);
  const Trajectory tr = run_linear(st, u0, steps);
  const auto rep = write_trajectory(r, V, tr, "conservation.csv");
  const SpectrumReport sp = discrete_spectrum(V, r.cfg.material, r.cfg.solver.spectrum_count,
                                              r.cfg.solver.spectrum_shift, r.cfg.seed, r.cfg.solver.spectrum_tol);
  r.result("kernel_dim", sp.kernel_dim);
  r.result("smallest_nonzero_real", sp.smallest_nonzero_real);
  r.result("max_principal_angle", sp.max_principal_angle);
  bool positive = rep.energy.size() >= 8;
  for (double e : rep.energy) positive = positive && e > 0.0;
  if (positive) {
    const DecayFit f = decay_fit(rep.time, rep.energy);
    r.result("eps0", 0.5 * f.rate);
    r.result("eps0_half_width", 0.5 * f.half_width);
    if (sp.smallest_nonzero_real > 0.0) r.result("eps0_over_spectral_gap", 0.5 * f.rate / sp.smallest_nonzero_real);
  }
  r.save_mesh_file();
}

void bootstrap(Run& r) {
  const BootstrapConfig& b = r.cfg.bootstrap;
  const RbResult rb = bootstrap_rb(b.b);
  const double alim = bootstrap_a_limit(b.b);
  std::vector<double> X;
  if (b.a < alim) {
    for (int i = 0; i < b.samples; ++i)
      X.push_back(bootstrap_minimal_root(b.a * (i + 1.0) / b.samples, b.b));
  }
  const BootstrapVerdict v = bootstrap_check(b.a, b.b, X);
  r.result("r_b", rb.r);
  r.result("fprime_r_b", rb.fprime);
  r.result("a_limit", alim);
  r.result("verdict", std::string(bootstrap_status_name(v.status)));
  r.result("verdict_message", v.message.empty() ? std::string("ok") : v.message);
  r.result("max_ratio", v.max_ratio);

  std::mt19937_64 rng(r.cfg.seed);
  std::uniform_real_distribution<double> lb(-3.0, 3.0), fa(0.01, 0.999);
  CsvTable t({"pair", "a", "b", "r_b", "a_limit", "x0", "x0_over_2a", "fprime"});
  double worst = 0.0, worst_f = 0.0;
  for (int i = 0; i < b.pairs; ++i) {
    const double bb = std::pow(10.0, lb(rng));
    const double aa = fa(rng) * bootstrap_a_limit(bb);
    const double x0 = bootstrap_minimal_root(aa, bb);
    const RbResult rr = bootstrap_rb(bb);
    t.row().add(i).add(aa).add(bb).add(rr.r).add(bootstrap_a_limit(bb)).add(x0).add(x0 / (2 * aa)).add(rr.fprime);
    worst = std::max(worst, x0 / (2 * aa));
    worst_f = std::max(worst_f, std::abs(rr.fprime));
  }
  t.save(r.path("bootstrap.csv"));
  r.result("sweep_max_x0_over_2a", worst);
  r.result("sweep_max_abs_fprime", worst_f);
}

void transmission(Run& r) {
  const auto levels = transmission_study(r.cfg.material, r.cfg.solver.transmission_levels, r.cfg.mesh.n_radial,
                                         r.cfg.mesh.n_angular, r.cfg.mesh.r_inner, r.cfg.mesh.r_outer);
  CsvTable t({"level", "n_radial", "n_angular", "nodes", "grad_error", "rate", "stability", "residual"});
  double min_rate = 1e300, growth = 0.0;
  for (size_t i = 0; i < levels.size(); ++i) {
    const auto& L = levels[i];
    t.row().add(static_cast<long long>(i)).add(L.n_radial).add(L.n_angular).add(L.nodes).add(L.grad_error)
        .add(L.rate).add(L.stability).add(L.residual);
    if (i) {
      min_rate = std::min(min_rate, L.rate);
      growth = std::max(growth, L.stability / levels[i - 1].stability);
    }
  }
  t.save(r.path("transmission.csv"));
  r.result("min_rate", min_rate);
  r.result("max_stability_growth", growth);
}

}  // namespace

void run_subcommand(const RunConfig& cfg, const std::string& name, std::ostream& log) {
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw Error(ErrorKind::parameter, "unknown subcommand '" + name + "'");
  cfg.validate();
  Run r{cfg, log, name, fs::path(cfg.output.dir), {}, 0, {}, {}};
  std::error_code ec;
  fs::create_directories(r.dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create output directory " + r.dir.string());
  r.mesh = build_mesh(cfg.mesh);
  r.hash = mesh_hash(r.mesh);
  r.say("mesh " + std::to_string(r.mesh.num_nodes()) + " nodes, hash " + hash_hex(r.hash));
  if (name == "solve-linear") solve_linear(r);
  else if (name == "solve-nonlinear") solve_nonlinear(r);
  else if (name == "solve-global") solve_global(r);
  else if (name == "spectrum") spectrum(r);
  else if (name == "diagnose") diagnose(r);
  else if (name == "bootstrap-check") bootstrap(r);
  else transmission(r);
  r.manifest();
  r.say("done");
}

}  // namespace lagstokes
