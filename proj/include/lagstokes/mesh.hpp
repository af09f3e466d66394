#pragma once

#include <array>
#include <vector>

#include "lagstokes/core.hpp"

namespace lagstokes {

enum class Phase : int { minus = 0, plus = 1 };

inline int phase_index(Phase p) { return static_cast<int>(p); }

enum class FacetKind { interface, outer };

struct Facet {
  std::array<int, 2> nodes;
  FacetKind kind;
  int cell_plus = -1;   // interface: the (+) cell; outer: unused
  int cell_minus = -1;  // interface: the (-) cell; outer: unused
  int cell = -1;        // outer: the only adjacent cell
};

// Which phase touches the outer boundary.
enum class OuterConfig { annulus_minus, simple_plus };

struct RefMesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> cells;  // counter-clockwise
  std::vector<Phase> phase;
  std::vector<Facet> facets;
  std::vector<int> interface_facets;
  std::vector<int> outer_facets;
  std::vector<int> wall_facets;  // Gamma_minus; always empty for the droplet
  OuterConfig outer_config = OuterConfig::annulus_minus;

  // Phase-node numbering: one dof per (phase, node) pair that occurs.
  // Interface nodes carry two dofs, every other node one.
  std::vector<std::array<int, 2>> pnode;  // [node][phase] -> dof or -1
  std::vector<int> pnode_node;
  std::vector<Phase> pnode_phase;
  std::vector<bool> on_interface;
  std::vector<bool> on_outer;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }
  int num_pnodes() const { return static_cast<int>(pnode_node.size()); }
  int num_facets() const { return static_cast<int>(facets.size()); }

  double cell_area(int c) const;
  double total_area() const;
  const Facet& facet(int id) const;

  // Rebuild pnode maps, boundary flags and facet lists from cells, phases and
  // facet records, then check the invariants.
  void finalize();
  void check() const;
};

RefMesh build_two_phase_disk(int n_radial, int n_angular, double r_inner,
                             double r_outer);

// Rigidly move a mesh: x -> R(angle) x + shift.
RefMesh transform_mesh(const RefMesh& mesh, double angle, const Vec2& shift);

// Area of the polygon inscribed in the outer circle by the mesh boundary.
double inscribed_polygon_area(int sides, double radius);

Vec2 facet_normal(const RefMesh& mesh, int facet);
Vec2 facet_midpoint(const RefMesh& mesh, int facet);
double facet_length(const RefMesh& mesh, int facet);

// Nodal data on phase-nodes. Interface nodes appear once per phase.
struct Field {
  const RefMesh* mesh = nullptr;
  int ncomp = 1;
  Vector values;

  Field() = default;
  Field(const RefMesh& m, int components);

  double& at(int pn, int c) { return values[pn * ncomp + c]; }
  double at(int pn, int c) const { return values[pn * ncomp + c]; }
  double trace(int node, Phase side, int c) const;
  void check_shape() const;
};

// Plus-side trace minus minus-side trace, averaged over the facet endpoints.
Vector jump(const Field& field, int facet);
// Same, at a single interface node.
Vector jump_at_node(const Field& field, int node);

}  // namespace lagstokes
