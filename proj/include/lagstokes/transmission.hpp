#pragma once

#include <Eigen/SparseLU>
#include <functional>
#include <memory>

#include "lagstokes/fe.hpp"

namespace lagstokes {

using VectorFunction = std::function<Vec2(const Vec2&, Phase)>;

struct TransmissionSolution {
  Field theta;             // scalar, phase-node
  double residual = 0.0;   // relative residual of the reduced system
  double stability = 0.0;  // |grad theta|_L2 / |data|
  double grad_norm = 0.0;
  double data_norm = 0.0;
};

// (eta^-1 grad theta, grad phi) over phase-nodes, block diagonal per phase.
SpMat pressure_stiffness(const FESpace& V, const MaterialParams& params);
// L2 norm of the broken gradient of a phase-node scalar.
double broken_gradient_norm(const FESpace& V, const Vector& theta);

// Test space: continuous P1 vanishing on the outer boundary.
class TransmissionSolver {
 public:
  TransmissionSolver(const FESpace& V, const MaterialParams& params);

  int size() const { return static_cast<int>(free_nodes_.size()); }
  int test_index(int node) const { return test_of_node_[node]; }
  // Continuous extension of a test-space vector to phase-nodes.
  Vector extend(const Vector& theta_c) const;

  // (alpha, grad phi_j) for every test function.
  Vector gradient_load(const VectorFunction& alpha) const;
  Vector gradient_load(const Vector& velocity) const;

  // beta, gamma are indexed by node; only interface (beta) and outer (gamma)
  // entries are read. Empty vectors mean zero.
  TransmissionSolution solve(const Vector& load, const Vector& beta, const Vector& gamma,
                             double alpha_norm) const;

  const FESpace& space() const { return *V_; }
  const MaterialParams& params() const { return params_; }
  const SpMat& reduced_matrix() const { return Kc_; }
  const SpMat& extension_matrix() const { return E_; }

 private:
  const FESpace* V_;
  MaterialParams params_;
  std::vector<int> free_nodes_, test_of_node_;
  SpMat Kp_, E_, Kc_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

double l2_norm(const FESpace& V, const VectorFunction& f);
double l2_norm(const FESpace& V, const Vector& velocity);
double interface_norm(const RefMesh& mesh, const Vector& beta);
double outer_norm(const RefMesh& mesh, const Vector& gamma);

TransmissionSolution solve_weak_transmission(const TransmissionSolver& solver,
                                             const VectorFunction& f);
TransmissionSolution solve_transmission_with_jumps(const TransmissionSolver& solver,
                                                   const VectorFunction& alpha,
                                                   const Vector& beta, const Vector& gamma);

// Data of the pressure reconstruction for a velocity u: the alpha_u
// functional, integrated by parts onto a per-phase recovered gradient of the
// test function, and nodal beta_u, gamma_u from adjacent-cell traces.
struct KData {
  Vector load;
  Vector beta;
  Vector gamma;
  double alpha_norm = 0.0;
};
KData k_data(const TransmissionSolver& solver, const Vector& u);
TransmissionSolution pressure_reconstruct_K(const TransmissionSolver& solver, const Vector& u);

// Discrete Hodge decomposition f = Pf + Qf with Qf = eta^-1 grad theta,
// theta continuous and zero on the outer boundary, and Pf orthogonal to
// all such gradients.
class HelmholtzProjector {
 public:
  HelmholtzProjector(const FESpace& V, const MaterialParams& params);
  struct Result {
    Vector P, Q, theta;
  };
  Result project(const Vector& f) const;
  // (Pf, grad phi_j) for every test function, used to check solenoidality.
  Vector divergence_residual(const Vector& Pf) const;

 private:
  const FESpace* V_;
  SpMat M_, G_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  int nt_;
};

struct RigidBasis {
  std::array<Vector, 3> p;
  Eigen::Matrix3d gram;
  static constexpr int size = 3;
};

RigidBasis build_rigid_basis(const FESpace& V, const MaterialParams& params);
RigidBasis build_rigid_basis(const FESpace& V, const SpMat& M_eta);
Eigen::Vector3d rigid_moments(const RigidBasis& basis, const SpMat& M_eta, const Vector& u);
Vector project_out_rigid(const Vector& u, const RigidBasis& basis, const SpMat& M_eta);

// Refinement study on the disk with a manufactured piecewise potential that
// vanishes on the outer circle and jumps across the interface.
struct TransmissionLevel {
  int n_radial = 0, n_angular = 0, nodes = 0;
  double grad_error = 0.0;  // broken L2 error of the gradient
  double rate = 0.0;        // log2 of the error ratio to the previous level
  double stability = 0.0;
  double residual = 0.0;
};
std::vector<TransmissionLevel> transmission_study(const MaterialParams& params, int levels,
                                                  int n_radial = 4, int n_angular = 16,
                                                  double r_inner = 0.5, double r_outer = 1.0);

}  // namespace lagstokes
