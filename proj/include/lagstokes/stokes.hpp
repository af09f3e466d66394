#pragma once

#include <Eigen/SparseLU>
#include <complex>
#include <memory>
#include <vector>

#include "lagstokes/transmission.hpp"

namespace lagstokes {

struct StokesState {
  Vector u;  // velocity dofs
  Vector q;  // pressure on phase-nodes
  double t = 0.0;
};

StokesState zero_state(const FESpace& V, double t = 0.0);

struct Trajectory {
  std::vector<StokesState> states;
  double dt = 0.0;
  // Optional per-state dissipation override (e.g. the Lagrangian form);
  // empty means 1/2 (mu D u, D u).
  std::vector<double> dissipation;
};

// Data fields left without a mesh are treated as absent. The two *_load
// vectors are already-assembled functionals added to the momentum rows
// ((., v) for velocity tests) and the divergence rows ((., phi)).
struct StokesData {
  Vector f;  // velocity-space body force
  Field g;   // divergence datum, scalar phase-node
  Field R;   // vector phase-node field with div R = g
  Field h;   // interface traction per side, vector phase-node
  Field k;   // outer traction, vector phase-node
  Vector momentum_load;
  Vector divergence_load;
};

// Backward Euler for the two-phase Stokes problem with natural traction
// conditions. The saddle-point matrix is factorized once per dt.
class StokesStepper {
 public:
  StokesStepper(const FESpace& V, const MaterialParams& params, double dt, double tol = 1e-10,
                double consistency_tol = 1e-8);

  StokesState step(const StokesState& s, const StokesData& data) const;
  StokesState step(const StokesState& s) const;  // zero data

  // Solve the step system for assembled right-hand sides.
  StokesState solve(const StokesState& s, const Vector& momentum, const Vector& divergence) const;

  double dt() const { return dt_; }
  double tol() const { return tol_; }
  const FESpace& space() const { return *V_; }
  const MaterialParams& params() const { return params_; }
  const SpMat& M() const { return M_; }
  const SpMat& A() const { return A_; }
  const SpMat& D() const { return D_; }

  // |(g, phi) + (R, grad phi)| over continuous test functions vanishing on the
  // outer boundary, relative to the data size.
  double consistency_residual(const Field& g, const Field& R) const;

 private:
  const FESpace* V_;
  MaterialParams params_;
  double dt_, tol_, consistency_tol_;
  SpMat M_, A_, D_, K_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
};

// n zero-data steps from u0, states 0..n.
Trajectory run_linear(const StokesStepper& stepper, const Vector& u0, int steps);

// Discretely divergence-free part of f in the eta-weighted velocity inner product.
Vector project_divergence_free(const FESpace& V, const MaterialParams& params, const Vector& f);

struct ResolventSolution {
  Vector u_re, u_im, q_re, q_im;
  double residual = 0.0;
};

// lambda (eta u, v) + 1/2 (mu D u, D v) - (q, div v) = (eta f, v), (div u, phi) = 0.
// With restrict_rigid the problem is posed on the complement of rigid
// motions (multipliers for (eta u, p_alpha) = 0); used automatically at lambda = 0.
ResolventSolution solve_resolvent(const FESpace& V, const MaterialParams& params,
                                  std::complex<double> lambda, const Vector& f,
                                  bool restrict_rigid = false, double tol = 1e-10);

struct KornResult {
  double ratio;     // min |D w|^2 / |w|^2_H1 over the rigid complement
  double constant;  // 1 / sqrt(ratio)
  int iterations;
};
KornResult korn_constant(const FESpace& V, const MaterialParams& params, std::uint64_t seed = 7);

// Kinetic energy 1/2 (eta u, u) and dissipation 1/2 (mu D u, D u).
double kinetic_energy(const SpMat& M, const Vector& u);
double dissipation(const SpMat& A, const Vector& u);

}  // namespace lagstokes
