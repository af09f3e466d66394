#pragma once

#include <vector>

#include "lagstokes/fe.hpp"

namespace lagstokes {

// C = int_0^t grad u, with (grad u)_jk = d_j u^k, at an arbitrary list of
// sample sites (phase-nodes or quadrature points).
struct DisplacementGradient {
  std::vector<Mat2> C;
  double t = 0.0;
  double norm_estimate = 0.0;  // running int_0^t max_site |grad u|
  int size() const { return static_cast<int>(C.size()); }
};

DisplacementGradient zero_displacement(int sites);

// grad u held constant over the step.
DisplacementGradient accumulate_gradient(const DisplacementGradient& C,
                                         const std::vector<Mat2>& grad_u, double dt);
// Trapezoid rule between two time levels.
DisplacementGradient accumulate_gradient(const DisplacementGradient& C,
                                         const std::vector<Mat2>& grad_prev,
                                         const std::vector<Mat2>& grad_next, double dt);

struct SeriesOptions {
  double tol = 1e-13;
  int max_order = 64;
  double kappa = 0.5;
};

struct CofactorField {
  std::vector<Mat2> A;  // (I + C)^-1 per site
  int order = 0;        // largest truncation order used over all sites
  double kappa = 0.0;   // max site norm of C at evaluation
  int size() const { return static_cast<int>(A.size()); }
};

Mat2 neumann_series(const Mat2& C, double tol, int max_order, int* order = nullptr);
CofactorField neumann_cofactor(const DisplacementGradient& C, const SeriesOptions& opts = {});
CofactorField direct_inverse_oracle(const DisplacementGradient& C);
// A2 - A1 through the double-sum expansion in powers of C1, C2 and dC = C2 - C1.
std::vector<Mat2> delta_cofactor(const DisplacementGradient& C1, const DisplacementGradient& C2,
                                 const SeriesOptions& opts = {});
double max_site_norm(const std::vector<Mat2>& m);

struct TransformedNormal {
  std::vector<Vec2> interface;  // ordered as mesh.interface_facets
  std::vector<Vec2> outer;      // ordered as mesh.outer_facets
};

Vec2 pushforward(const Mat2& A, const Vec2& n);
// A given on phase-nodes; the facet value averages its endpoints on the
// plus side (interface) or the outer phase (outer boundary).
TransformedNormal pushforward_normal(const CofactorField& A, const RefMesh& mesh);

struct DeformationTensors {
  Mat2 D;   // grad^T u + grad u^T
  Mat2 Du;  // grad^T u A^T + A grad u^T
  Mat2 H;   // grad^T u (I - A^T) + (I - A) grad u^T
};

// J is the Jacobian d_j u^i (= grad^T u).
DeformationTensors deformation_tensors(const Mat2& J, const Mat2& A);
std::vector<DeformationTensors> deformation_tensors(const std::vector<Mat2>& J,
                                                    const CofactorField& A);

// Volume-weighted average of cell-mean Jacobians on each phase-node.
std::vector<Mat2> recover_nodal_jacobian(const FESpace& V, const Vector& u);
std::vector<Mat2> transpose_all(const std::vector<Mat2>& m);

// Cell quadrature points followed by facet quadrature points (interface
// facets two sides, outer facets one).
class QuadratureSites {
 public:
  explicit QuadratureSites(const FESpace& V);
  int size() const { return total_; }
  int cell_site(int cell, int q) const { return cell * kQuad + q; }
  int interface_site(int k, int side, int g) const { return iface0_ + (k * 2 + side) * kLine + g; }
  int outer_site(int k, int g) const { return outer0_ + k * kLine + g; }

  std::vector<Mat2> jacobians(const FESpace& V, const Vector& u) const;
  std::vector<Vec2> values(const FESpace& V, const Vector& u) const;
  std::vector<double> pressures(const FESpace& V, const Vector& q) const;

 private:
  int iface0_, outer0_, total_;
};

}  // namespace lagstokes
