#pragma once

#include <Eigen/Sparse>
#include <array>
#include <functional>
#include <vector>

#include "lagstokes/mesh.hpp"

namespace lagstokes {

using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

struct MaterialParams {
  double eta_plus = 1.0;
  double eta_minus = 0.8;
  double mu_plus = 0.1;
  double mu_minus = 0.05;

  double eta(Phase p) const { return p == Phase::plus ? eta_plus : eta_minus; }
  double mu(Phase p) const { return p == Phase::plus ? mu_plus : mu_minus; }
  void validate() const;
};

// Degree-6 rule on the reference triangle, barycentric points, weights sum to 1.
struct TriangleRule {
  static constexpr int size = 12;
  std::array<std::array<double, 3>, size> bary;
  std::array<double, size> weight;
};
const TriangleRule& triangle_rule();

// Three-point Gauss rule on [0,1].
struct LineRule {
  static constexpr int size = 3;
  std::array<double, size> point;
  std::array<double, size> weight;
};
const LineRule& line_rule();

constexpr int kQuad = TriangleRule::size;
constexpr int kLine = LineRule::size;
constexpr int kLocalV = 8;  // 3 vertices + bubble, 2 components

struct CellCache {
  double area;
  std::array<Vec2, 3> grad_lambda;
  std::array<double, kQuad> w;
  std::array<Vec2, kQuad> x;
  std::array<std::array<double, 4>, kQuad> shape;  // lambda_0..2, bubble
  std::array<std::array<Vec2, 4>, kQuad> grad;
};

// Quadrature point on a boundary facet, seen from one adjacent cell.
struct FacetPoint {
  int cell;
  double w;  // includes facet length
  Vec2 x;
  std::array<double, 4> shape;
  std::array<Vec2, 4> grad;
};

// Continuous P1 + cubic bubble velocity (single-valued on the interface) and
// P1 pressure per phase (doubled on the interface).
class FESpace {
 public:
  explicit FESpace(const RefMesh& mesh);

  const RefMesh& mesh() const { return *mesh_; }
  int nv() const { return 2 * (mesh_->num_nodes() + mesh_->num_cells()); }
  int np() const { return mesh_->num_pnodes(); }
  int node_dof(int node, int c) const { return 2 * node + c; }
  int bubble_dof(int cell, int c) const { return 2 * (mesh_->num_nodes() + cell) + c; }
  std::array<int, kLocalV> cell_vdofs(int cell) const;
  std::array<int, 3> cell_pdofs(int cell) const;

  const CellCache& cell(int c) const { return cells_[c]; }

  // Facet quadrature. Interface facets have one point set per side
  // (index 0 plus, 1 minus); outer facets a single set.
  const std::array<FacetPoint, kLine>& facet_points(int facet, int side) const;

  // Velocity value and Jacobian J_ij = d_j u^i at a cell quadrature point.
  Vec2 value(const Vector& u, int cell, int q) const;
  Mat2 jacobian(const Vector& u, int cell, int q) const;
  Vec2 value_at(const Vector& u, const FacetPoint& fp) const;
  Mat2 jacobian_at(const Vector& u, const FacetPoint& fp) const;
  // Pressure value at a quadrature point of the cell.
  double pressure(const Vector& q, int cell, int qp) const;
  double pressure_at(const Vector& q, const FacetPoint& fp) const;

  // Nodal interpolation (bubble coefficients zero).
  Vector interpolate(const std::function<Vec2(const Vec2&)>& f) const;
  Vector pressure_interpolate(const std::function<double(const Vec2&, Phase)>& f) const;

 private:
  const RefMesh* mesh_;
  std::vector<CellCache> cells_;
  std::vector<std::array<std::array<FacetPoint, kLine>, 2>> facet_pts_;
  std::array<double, 4> shape_of(const std::array<double, 3>& b) const;
  void fill_point(int cell, const std::array<double, 3>& b, std::array<double, 4>& s,
                  std::array<Vec2, 4>& g) const;
};

// Local basis function l (0..7) has component l % 2 and shape l / 2.
inline int local_comp(int l) { return l % 2; }
inline int local_shape(int l) { return l / 2; }

SpMat mass_matrix(const FESpace& V, const MaterialParams& params);
SpMat unit_mass_matrix(const FESpace& V);
// 1/2 (mu D(u), D(v))
SpMat viscous_matrix(const FESpace& V, const MaterialParams& params);
// (d_j u^i, d_j v^i)
SpMat gradient_matrix(const FESpace& V);
// D[p][v] = (phi_p, div v)
SpMat divergence_matrix(const FESpace& V);
SpMat pressure_mass_matrix(const FESpace& V);

// Symmetric deformation tensor of the element field at a quadrature point.
Mat2 sym_grad(const Mat2& J);

// Interface and outer traction loads: ([[h]], v)_Gamma + (k, v)_Gamma+ with h,
// k nodal phase-node vector fields interpolated linearly along facets.
Vector boundary_load(const FESpace& V, const Field* h, const Field* k);
// (eta f, v) for a velocity-space f.
Vector velocity_load(const FESpace& V, const MaterialParams& params, const Vector& f);
// (g, phi) for a nodal scalar phase-node field g.
Vector pressure_load(const FESpace& V, const Field& g);

// Nodal P1 part of a velocity as a two-component phase-node field.
Field velocity_to_field(const FESpace& V, const Vector& u);
Vector field_to_velocity(const FESpace& V, const Field& f);

// Rigid motions e1, e2, (-x2, x1) as velocity vectors (not normalized).
std::array<Vector, 3> rigid_modes(const FESpace& V);

}  // namespace lagstokes
