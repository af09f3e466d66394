#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lagstokes/config.hpp"

namespace lagstokes {

const std::vector<std::string>& subcommand_names();

// Runs one subcommand, writing artifacts under cfg.output.dir. Errors
// propagate as lagstokes::Error; log receives progress lines when verbose.
void run_subcommand(const RunConfig& cfg, const std::string& name, std::ostream& log);

// Process exit status for an error category (0 is success).
int exit_code(ErrorKind kind);

RefMesh build_mesh(const MeshConfig& cfg);
// Initial velocity from solver.initial / amplitude / rigid_offset, discretely
// divergence-free. strain and random are rigid-orthogonal before the offset.
Vector initial_velocity(const FESpace& V, const MaterialParams& params, const SolverConfig& s,
                        std::uint64_t seed);

}  // namespace lagstokes
