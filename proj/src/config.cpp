#include "lagstokes/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "lagstokes/io.hpp"

namespace lagstokes {

namespace {

struct Option {
  std::string section, key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

[[noreturn]] void bad_value(const std::string& name, const std::string& v, const char* want) {
  throw Error(ErrorKind::validation, name + ": expected " + want + ", got '" + v + "'");
}

double to_double(const std::string& name, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const Error&) {
    bad_value(name, v, "a number");
  }
}

long long to_int(const std::string& name, const std::string& v) {
  char* e = nullptr;
  errno = 0;
  const long long x = std::strtoll(v.c_str(), &e, 10);
  if (e == v.c_str() || *e != '\0' || errno == ERANGE) bad_value(name, v, "an integer");
  return x;
}

bool to_bool(const std::string& name, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(name, v, "true or false");
}

template <class C>
std::vector<Option> schema(C& c) {
  std::vector<Option> o;
  auto real = [&o](const char* s, const char* k, auto& ref) {
    const std::string name = std::string(s) + "." + k;
    o.push_back({s, k, [&ref, name](const std::string& v) { ref = to_double(name, v); },
                 [&ref] { return format_double(ref); }});
  };
  auto integer = [&o](const char* s, const char* k, auto& ref) {
    const std::string name = std::string(s) + "." + k;
    o.push_back({s, k, [&ref, name](const std::string& v) { ref = static_cast<int>(to_int(name, v)); },
                 [&ref] { return std::to_string(ref); }});
  };
  auto flag = [&o](const char* s, const char* k, auto& ref) {
    const std::string name = std::string(s) + "." + k;
    o.push_back({s, k, [&ref, name](const std::string& v) { ref = to_bool(name, v); },
                 [&ref] { return std::string(ref ? "true" : "false"); }});
  };
  auto text = [&o](const char* s, const char* k, auto& ref) {
    o.push_back({s, k, [&ref](const std::string& v) { ref = v; }, [&ref] { return std::string(ref); }});
  };
  integer("mesh", "n_radial", c.mesh.n_radial);
  integer("mesh", "n_angular", c.mesh.n_angular);
  real("mesh", "r_inner", c.mesh.r_inner);
  real("mesh", "r_outer", c.mesh.r_outer);
  text("mesh", "file", c.mesh.file);
  real("material", "eta_plus", c.material.eta_plus);
  real("material", "eta_minus", c.material.eta_minus);
  real("material", "mu_plus", c.material.mu_plus);
  real("material", "mu_minus", c.material.mu_minus);
  real("material", "rho0_plus", c.iteration.rho0_plus);
  real("material", "rho0_minus", c.iteration.rho0_minus);
  real("solver", "dt", c.solver.dt);
  real("solver", "horizon", c.solver.horizon);
  real("solver", "linear_tol", c.solver.linear_tol);
  text("solver", "initial", c.solver.initial);
  real("solver", "amplitude", c.solver.amplitude);
  real("solver", "rigid_offset", c.solver.rigid_offset);
  integer("solver", "spectrum_count", c.solver.spectrum_count);
  real("solver", "spectrum_shift", c.solver.spectrum_shift);
  real("solver", "spectrum_tol", c.solver.spectrum_tol);
  integer("solver", "transmission_levels", c.solver.transmission_levels);
  real("iteration", "p", c.iteration.p);
  real("iteration", "q", c.iteration.q);
  real("iteration", "L", c.iteration.L);
  real("iteration", "T", c.iteration.T);
  real("iteration", "tol", c.iteration.tol);
  integer("iteration", "max_iter", c.iteration.max_iter);
  real("iteration", "kappa", c.iteration.kappa);
  real("iteration", "gamma0", c.iteration.gamma0);
  real("iteration", "eps0", c.iteration.eps0);
  real("iteration", "C_cal", c.iteration.C_cal);
  real("iteration", "a_cal", c.iteration.a_cal);
  real("iteration", "contraction_target", c.iteration.contraction_target);
  real("iteration", "horizon_floor", c.iteration.horizon_floor);
  real("iteration", "window", c.iteration.window);
  flag("iteration", "hessian", c.iteration.hessian);
  real("iteration", "bootstrap_a", c.bootstrap.a);
  real("iteration", "bootstrap_b", c.bootstrap.b);
  integer("iteration", "bootstrap_pairs", c.bootstrap.pairs);
  integer("iteration", "bootstrap_samples", c.bootstrap.samples);
  text("output", "dir", c.output.dir);
  integer("output", "snapshot_every", c.output.snapshot_every);
  flag("output", "snapshots", c.output.snapshots);
  return o;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorKind::validation, msg);
}

}  // namespace

void RunConfig::validate() const {
  if (mesh.file.empty()) {
    require(mesh.n_radial >= 2, "mesh.n_radial must be at least 2");
    require(mesh.n_angular >= 8, "mesh.n_angular must be at least 8");
    require(mesh.r_inner > 0.0 && mesh.r_inner < mesh.r_outer, "mesh.r_inner must lie in (0, r_outer)");
  }
  require(material.eta_plus > 0.0, "material.eta_plus must be positive (eta+- > 0)");
  require(material.eta_minus > 0.0, "material.eta_minus must be positive (eta+- > 0)");
  require(material.mu_plus > 0.0, "material.mu_plus must be positive (mu+- > 0)");
  require(material.mu_minus > 0.0, "material.mu_minus must be positive (mu+- > 0)");
  require(iteration.rho0_plus < 0.0 || iteration.rho0_plus > 0.0, "material.rho0_plus must be nonzero");
  require(iteration.rho0_minus < 0.0 || iteration.rho0_minus > 0.0, "material.rho0_minus must be nonzero");
  require(solver.dt > 0.0, "solver.dt must be positive");
  require(solver.horizon >= solver.dt, "solver.horizon must cover at least one step");
  require(solver.linear_tol > 0.0 && solver.linear_tol < 1e-2, "solver.linear_tol must lie in (0, 1e-2)");
  require(solver.initial == "zero" || solver.initial == "strain" || solver.initial == "rotation" ||
              solver.initial == "random",
          "solver.initial must be zero, strain, rotation or random");
  require(std::isfinite(solver.amplitude), "solver.amplitude must be finite");
  require(std::isfinite(solver.rigid_offset), "solver.rigid_offset must be finite");
  require(solver.spectrum_count >= 6, "solver.spectrum_count must be at least 6");
  require(solver.spectrum_shift > 0.0, "solver.spectrum_shift must be positive");
  require(solver.spectrum_tol > 0.0, "solver.spectrum_tol must be positive");
  require(solver.transmission_levels >= 2 && solver.transmission_levels <= 5,
          "solver.transmission_levels must lie in 2..5");
  require(bootstrap.a > 0.0 && bootstrap.b > 0.0, "iteration.bootstrap_a and bootstrap_b must be positive");
  require(bootstrap.pairs >= 1, "iteration.bootstrap_pairs must be at least 1");
  require(bootstrap.samples >= 2, "iteration.bootstrap_samples must be at least 2");
  require(!output.dir.empty(), "output.dir must not be empty");
  require(output.snapshot_every >= 1, "output.snapshot_every must be at least 1");
  IterationConfig it = iteration;
  it.dt = solver.dt;
  it.linear_tol = solver.linear_tol;
  try {
    it.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::validation, e.what());
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::effective() const {
  RunConfig copy = *this;
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& o : schema(copy)) out.emplace_back(o.section + "." + o.key, o.get());
  return out;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorKind::validation,
                origin + ":" + std::to_string(e.line()) + ": parse error: " + e.message());
  }
  RunConfig cfg;
  auto opts = schema(cfg);
  for (const auto& sec : tree) {
    if (sec.second.empty() && !sec.second.data().empty())
      throw Error(ErrorKind::validation, origin + ": key '" + sec.first + "' outside any section");
    bool known = false;
    for (const auto& o : opts) known = known || o.section == sec.first;
    if (!known) throw Error(ErrorKind::validation, origin + ": unknown section [" + sec.first + "]");
    for (const auto& kv : sec.second) {
      const Option* hit = nullptr;
      for (const auto& o : opts)
        if (o.section == sec.first && o.key == kv.first) hit = &o;
      if (!hit) throw Error(ErrorKind::validation, origin + ": unknown key " + sec.first + "." + kv.first);
      hit->set(kv.second.data());
    }
  }
  cfg.iteration.dt = cfg.solver.dt;
  cfg.iteration.linear_tol = cfg.solver.linear_tol;
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io, "cannot read config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

}  // namespace lagstokes
