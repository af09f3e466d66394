#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lagstokes/fe.hpp"
#include "lagstokes/nonlinear.hpp"

namespace lagstokes {

struct MeshConfig {
  int n_radial = 4;
  int n_angular = 16;
  double r_inner = 0.5;
  double r_outer = 1.0;
  std::string file;  // LAGSTOKES-MESH v1 file; empty: build the disk
};

struct SolverConfig {
  double dt = 0.05;
  double horizon = 10.0;
  double linear_tol = 1e-10;
  std::string initial = "strain";  // zero | strain | rotation | random
  double amplitude = 0.05;
  double rigid_offset = 0.0;  // adds this multiple of the unit translation mode
  int spectrum_count = 8;
  double spectrum_shift = 1e-3;
  double spectrum_tol = 1e-10;
  int transmission_levels = 3;
};

struct BootstrapConfig {
  double a = 0.01;
  double b = 1.0;
  int pairs = 100;
  int samples = 50;
};

struct OutputConfig {
  std::string dir = "out";
  int snapshot_every = 10;
  bool snapshots = true;
};

struct RunConfig {
  MeshConfig mesh;
  MaterialParams material;
  SolverConfig solver;
  IterationConfig iteration;
  BootstrapConfig bootstrap;
  OutputConfig output;
  std::uint64_t seed = 1;
  bool verbose = false;

  void validate() const;
  // Every effective value as (section.key, text), in schema order.
  std::vector<std::pair<std::string, std::string>> effective() const;
};

// INI text with sections [mesh], [material], [solver], [iteration], [output].
// Unknown sections or keys are validation errors; syntax errors carry the line.
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config(const std::string& path);

}  // namespace lagstokes
