#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "lagstokes/config.hpp"
#include "lagstokes/io.hpp"
#include "lagstokes/runner.hpp"

using namespace lagstokes;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::parameter;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lagstokes_test_io_" + name);
  fs::remove_all(p);
  return p;
}

std::string manifest_value(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  const std::string prefix = key + " = ";
  while (std::getline(is, line))
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  return "";
}

}  // namespace

TEST_CASE("doubles round-trip bitwise through text") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, 40.0 * u(rng));
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(parse_double(format_double(0.1)) == 0.1);
  CHECK(kind_of([] { parse_double("1.0x"); }) == ErrorKind::io);
  CHECK(kind_of([] { parse_double(""); }) == ErrorKind::io);
}

TEST_CASE("mesh text round-trips and the hash is stable") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  std::stringstream ss;
  write_mesh(ss, m);
  const RefMesh r = read_mesh(ss);
  REQUIRE(r.num_nodes() == m.num_nodes());
  REQUIRE(r.num_cells() == m.num_cells());
  REQUIRE(r.num_facets() == m.num_facets());
  REQUIRE(r.num_pnodes() == m.num_pnodes());
  for (int i = 0; i < m.num_nodes(); ++i) CHECK((r.nodes[i].array() == m.nodes[i].array()).all());
  for (int c = 0; c < m.num_cells(); ++c) {
    CHECK(r.cells[c] == m.cells[c]);
    CHECK(r.phase[c] == m.phase[c]);
  }
  CHECK(mesh_hash(r) == mesh_hash(m));
  CHECK(mesh_hash(m) == mesh_hash(build_two_phase_disk(4, 16, 0.5, 1.0)));
  CHECK(mesh_hash(m) != mesh_hash(build_two_phase_disk(4, 16, 0.5, 1.1)));
  CHECK(mesh_hash(m) != mesh_hash(transform_mesh(m, 1e-9, Vec2::Zero())));
  CHECK(hash_hex(0xabcULL) == "0000000000000abc");

  std::stringstream again;
  write_mesh(again, r);
  std::stringstream first;
  write_mesh(first, m);
  CHECK(again.str() == first.str());
}

TEST_CASE("malformed mesh files report the line") {
  auto err = [](const std::string& text) {
    std::istringstream is(text);
    try {
      read_mesh(is);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(err("LAGSTOKES-MESH v2\n").find("line 1") != std::string::npos);
  CHECK(err("LAGSTOKES-MESH v1\nnodes 2\n0 0\n1 x\n").find("line 4") != std::string::npos);
  CHECK(err("LAGSTOKES-MESH v1\nnodes 3\n0 0\n1 0\n0 1\ncells 1\n0 1 2 wet\n").find("line 7") !=
        std::string::npos);

  std::stringstream ss;
  write_mesh(ss, build_two_phase_disk(4, 16, 0.5, 1.0));
  std::string text = ss.str();
  const auto pos = text.find(" outer ");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 7, " interface ");
  CHECK(err(text) != "no error");
}

TEST_CASE("snapshots round-trip bitwise") {
  Snapshot s;
  s.time = 0.1 + 0.2;
  s.mesh_hash = 0x0123456789abcdefULL;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Vector a(10), b(3);
  for (auto& v : a) v = n(rng);
  for (auto& v : b) v = n(rng) * 1e-300;
  s.blocks.push_back({"velocity", 2, a});
  s.blocks.push_back({"pressure", 1, b});
  std::stringstream ss;
  write_snapshot(ss, s);
  const Snapshot r = read_snapshot(ss);
  CHECK(r.time == s.time);
  CHECK(r.mesh_hash == s.mesh_hash);
  REQUIRE(r.blocks.size() == 2);
  CHECK(r.block("velocity").ncomp == 2);
  CHECK((r.block("velocity").values.array() == a.array()).all());
  CHECK((r.block("pressure").values.array() == b.array()).all());
  CHECK(kind_of([&] { r.block("missing"); }) == ErrorKind::lookup);

  std::istringstream bad("LAGSTOKES-FIELD v1\ntime 0\nmesh_hash 00\nblocks 1\nblock v 2 3\n1\n2\n3\nend\n");
  CHECK(kind_of([&] { read_snapshot(bad); }) == ErrorKind::io);
}

TEST_CASE("csv output is deterministic and quoted") {
  CsvTable t({"a", "b", "c"});
  t.row().add(0.1).add(3).add(std::string("x,y"));
  t.row().add(-0.0).add(-7).add(std::string("plain"));
  std::ostringstream os1, os2;
  t.write(os1);
  t.write(os2);
  CHECK(os1.str() == os2.str());
  CHECK(os1.str() == "a,b,c\n0.10000000000000001,3,\"x,y\"\n-0,-7,plain\n");
  CHECK(t.rows() == 2);
}

TEST_CASE("configuration parsing") {
  const RunConfig d = parse_config_text("");
  CHECK(d.mesh.n_radial == 4);
  CHECK(d.solver.dt == 0.05);
  CHECK(d.iteration.p == 3.0);
  CHECK(d.material.eta_minus == 0.8);

  const RunConfig c = parse_config_text(
      "[mesh]\nn_radial = 6\n[material]\nmu_plus = 0.2\n[solver]\ndt = 0.025\ninitial = random\n"
      "[iteration]\nq = 5\nbootstrap_b = 2\n[output]\ndir = elsewhere\nsnapshots = false\n");
  CHECK(c.mesh.n_radial == 6);
  CHECK(c.material.mu_plus == 0.2);
  CHECK(c.solver.dt == 0.025);
  CHECK(c.solver.initial == "random");
  CHECK(c.iteration.q == 5.0);
  CHECK(c.bootstrap.b == 2.0);
  CHECK(c.output.dir == "elsewhere");
  CHECK_FALSE(c.output.snapshots);

  auto message = [](const std::string& text) {
    try {
      parse_config_text(text, "cfg.ini");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message("[solver]\nfoo = 1\n").find("solver.foo") != std::string::npos);
  CHECK(message("[extra]\nx = 1\n").find("extra") != std::string::npos);
  CHECK(message("[mesh]\nn_radial = 4\n[solver\n").find("cfg.ini:3") != std::string::npos);
  CHECK(message("[material]\neta_minus = 0\n").find("eta_minus") != std::string::npos);
  CHECK(message("[material]\nmu_plus = -1\n") != "no error");
  CHECK(message("[solver]\ndt = abc\n").find("solver.dt") != std::string::npos);
  CHECK(message("[solver]\ninitial = wavy\n") != "no error");
  CHECK(message("[iteration]\np = 2\n") != "no error");
  CHECK(message("[mesh]\nn_angular = 2\n") != "no error");

  const auto eff = d.effective();
  CHECK(eff.size() > 30);
  CHECK(eff.front().first == "mesh.n_radial");
  // Every effective key parses back to the same configuration.
  std::string text, section;
  for (const auto& [k, v] : eff) {
    const auto dot = k.find('.');
    if (k.substr(0, dot) != section) {
      section = k.substr(0, dot);
      text += "[" + section + "]\n";
    }
    text += k.substr(dot + 1) + " = " + v + "\n";
  }
  CHECK(parse_config_text(text).effective() == eff);
}

TEST_CASE("runner writes a manifest and deterministic artifacts") {
  RunConfig cfg;
  cfg.solver.horizon = 1.0;
  cfg.output.snapshot_every = 5;
  const fs::path a = scratch("lin_a"), b = scratch("lin_b");
  std::ostringstream log;
  cfg.output.dir = a.string();
  run_subcommand(cfg, "solve-linear", log);
  cfg.output.dir = b.string();
  run_subcommand(cfg, "solve-linear", log);
  for (const char* f : {"trajectory.csv", "mesh.txt", "snap_00000.txt", "snap_00020.txt"})
    CHECK(slurp(a / f) == slurp(b / f));
  const std::string man = slurp(a / "manifest.txt");
  CHECK(man.rfind("LAGSTOKES-MANIFEST v1\n", 0) == 0);
  CHECK(manifest_value(man, "command") == "solve-linear");
  CHECK(manifest_value(man, "config.solver.dt") == "0.050000000000000003");
  CHECK(manifest_value(man, "result.energy_monotone") == "true");

  const RefMesh m = load_mesh((a / "mesh.txt").string());
  CHECK(manifest_value(man, "mesh_hash") == hash_hex(mesh_hash(m)));
  const Snapshot s = load_snapshot((a / "snap_00020.txt").string());
  CHECK(s.time == doctest::Approx(1.0));
  CHECK(s.mesh_hash == mesh_hash(m));

  std::ifstream csv(a / "trajectory.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("step,time,energy,dissipation,momentum_0", 0) == 0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("zero data gives zero snapshots") {
  RunConfig cfg;
  cfg.solver.initial = "zero";
  cfg.solver.horizon = 0.5;
  const fs::path d = scratch("zero");
  cfg.output.dir = d.string();
  std::ostringstream log;
  run_subcommand(cfg, "solve-nonlinear", log);
  for (const auto& e : fs::directory_iterator(d)) {
    if (e.path().filename().string().rfind("snap_", 0) != 0) continue;
    const Snapshot s = load_snapshot(e.path().string());
    for (const auto& blk : s.blocks) CHECK(blk.values.cwiseAbs().maxCoeff() == 0.0);
  }
  fs::remove_all(d);
}

TEST_CASE("spectrum, bootstrap and transmission subcommands") {
  RunConfig cfg;
  std::ostringstream log;
  const fs::path d = scratch("misc");
  cfg.output.dir = d.string();
  run_subcommand(cfg, "spectrum", log);
  CHECK(manifest_value(slurp(d / "manifest.txt"), "result.kernel_dim") == "3");
  run_subcommand(cfg, "bootstrap-check", log);
  CHECK(manifest_value(slurp(d / "manifest.txt"), "result.verdict") == "holds");
  cfg.bootstrap.a = 1.0;
  run_subcommand(cfg, "bootstrap-check", log);
  CHECK(manifest_value(slurp(d / "manifest.txt"), "result.verdict") == "hypothesis_failed");
  cfg.solver.transmission_levels = 2;
  run_subcommand(cfg, "transmission-test", log);
  CHECK(parse_double(manifest_value(slurp(d / "manifest.txt"), "result.min_rate")) > 0.9);
  fs::remove_all(d);
}

TEST_CASE("solve-global rejects data with rigid moments") {
  RunConfig cfg;
  cfg.solver.rigid_offset = 0.1;
  cfg.output.dir = scratch("global").string();
  std::ostringstream log;
  try {
    run_subcommand(cfg, "solve-global", log);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    CHECK(std::string(e.what()).find("orthogonality") != std::string::npos);
  }
  CHECK(kind_of([&] { run_subcommand(cfg, "solve-sideways", log); }) == ErrorKind::parameter);
  fs::remove_all(cfg.output.dir);
}
