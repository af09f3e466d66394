#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lagstokes/lagrangian.hpp"
#include "lagstokes/stokes.hpp"

namespace lagstokes {

struct ExponentSet {
  double sigma = 0.0;        // sigma_{p,q}
  double s = 0.0;            // s_{p,q}
  double sigma_tilde = 0.0;  // min{1/p, (1 - N/q)/2}
};

// (p, q) in (I) = {p > 2, q > N} or (II) = {1 < p < 2, q > N, 1/p + N/q > 3/2}.
bool admissible_exponents(double p, double q, int N);
// sigma_{p,q} alone; defined for any p > 1, q > N.
double sigma_pq(double p, double q, int N);
ExponentSet sigma_exponents(double p, double q, int N);

// Largest T <= 1 with C T^{1/p' + sigma} L <= 1/2 and C T^s L <= 1.
double select_local_T(double L, const ExponentSet& e, double p, double C_cal);

struct IterationConfig {
  double p = 3.0, q = 4.0;
  double L = 1.0;             // trajectory-norm ball radius
  double T = 1.0;             // requested horizon (local) or final time (global)
  double dt = 0.05;
  double tol = 1e-12;         // relative fixed-point tolerance
  int max_iter = 50;
  double kappa = 0.5;         // cap on |C| at every site
  double gamma0 = 1.0;
  double eps0 = 0.0;          // <= 0: derive from the linear decay rate
  double C_cal = 1.0;
  double a_cal = 1.0;         // global bound X <= 2 a_cal |v0|
  double linear_tol = 1e-10;
  double contraction_target = 0.9;
  double horizon_floor = 0.0; // <= 0: two steps
  double window = 1.0;        // global continuation window length
  bool hessian = true;        // include the recovered second-gradient term in norms
  int N = 2;
  // Reference density per phase; negative means rho0 = eta.
  double rho0_plus = -1.0, rho0_minus = -1.0;

  void validate() const;
};

// External body force f(x, t) composed with the Lagrangian map.
using ForceFunction = std::function<Vec2(const Vec2&, double)>;

// Nonlinear data at one time level. f is the assembled momentum functional
// int (T - T_u A) : grad v minus the traction part; h, k are per-side
// tractions (T - T_u A) n recovered on boundary phase-nodes.
struct NonlinearRHS {
  double t = 0.0;
  Vector f;          // velocity-space functional
  Vector momentum;   // full momentum functional (f plus traction loads)
  Vector divergence; // (g_u, phi)
  Field g, R, h, k;
};

// Per-site state of the Lagrangian map along a trajectory.
struct LagrangianMap {
  QuadratureSites sites;
  DisplacementGradient C;
  std::vector<Mat2> J;  // site Jacobians at the current time
  explicit LagrangianMap(const FESpace& V);
};

// Terms for velocity u and pressure q with cofactor A on the quadrature sites.
NonlinearRHS compute_nonlinear_terms(const FESpace& V, const MaterialParams& params,
                                     const QuadratureSites& sites, const Vector& u,
                                     const Vector& q, const CofactorField& A, double t = 0.0);
// |(g_u, 1) - sum_K (R_u . n_K)_{dK}| relative to the size of the terms.
double compatibility_defect(const FESpace& V, const QuadratureSites& sites, const Vector& u,
                            const CofactorField& A);

// Cell-centred samples h((n + 1/2) dt).
struct TimeSeries {
  double dt = 1.0;
  std::vector<double> v;
  double horizon() const { return dt * static_cast<double>(v.size()); }
};
// Weighted discrete norm (sum dt |e^{w s} v|^p)^{1/p}.
double lp_norm(const TimeSeries& s, double p, double weight = 0.0);
// Even reflection about t, zero beyond 2t.
TimeSeries extension_reflect(const TimeSeries& h, double t);
// Smooth cutoff (1 for r <= 0, 0 for r >= 1) and its shift times the reflection about T.
double smooth_cutoff(double r);
TimeSeries cutoff_extension(const TimeSeries& h, double T, double gamma);

// Discrete trajectory norm: sup_t |u|_{H1} + |du/dt|_{Lp(L2)} + |grad u|_{Lp(L2)}
// + |grad^2 u|_{Lp(L2)} (recovered) + |grad q|_{Lp(L2)}.
class TrajectoryNorm {
 public:
  TrajectoryNorm(const FESpace& V, double p, bool hessian);
  double operator()(const std::vector<StokesState>& states, double dt) const;
  double difference(const std::vector<StokesState>& a, const std::vector<StokesState>& b,
                    double dt) const;
  double h1(const Vector& u) const;
  double hessian(const Vector& u) const;
  double pressure_h1(const Vector& q) const;
  double l2(const Vector& u) const;
  double grad(const Vector& u) const;

 private:
  const FESpace* V_;
  double p_;
  bool hessian_;
  SpMat M1_, G_, Pm_;
};

struct IterationRecord {
  int iteration;
  double distance;     // trajectory norm of the update
  double factor;       // distance ratio to the previous update (0 for the first)
  double residual;     // substituted nonlinear residual of the iterate
  double horizon;
};

struct LocalSolution {
  Trajectory traj;     // composed (u, q)
  Trajectory linear;   // (u_L, q_L)
  std::vector<double> lagrangian_dissipation;
  std::vector<IterationRecord> iterations;
  double horizon = 0.0;
  double contraction = 0.0;  // last measured factor
  double residual = 0.0;     // substituted residual of the returned solution
  double norm_U = 0.0;       // trajectory norm of u - u_L
  bool in_ball = true;
  int restarts = 0;
  LagrangianMap map_end;     // C and J at the final time
  std::vector<Vector> X;     // Lagrangian displacement per state (velocity space)
  explicit LocalSolution(const FESpace& V) : map_end(V) {}
};

// One Picard run from state (u0, t0) with the Lagrangian map carried in from
// earlier windows. The horizon starts at min(cfg.T, select_local_T) unless
// fixed_horizon is set, and is halved while the contraction factor exceeds the
// target or the series cap is violated.
class PicardSolver {
 public:
  PicardSolver(const FESpace& V, const MaterialParams& params, const IterationConfig& cfg);

  LocalSolution solve(const Vector& v0, ForceFunction force = nullptr) const;
  LocalSolution solve_window(const Vector& u0, const LagrangianMap& map0, const Vector& X0,
                             double t0, double horizon, bool fixed_horizon,
                             ForceFunction force = nullptr) const;

  double residual(const std::vector<StokesState>& states, const LagrangianMap& map0,
                  ForceFunction force = nullptr) const;
  const StokesStepper& stepper() const { return stepper_; }
  const TrajectoryNorm& norm() const { return norm_; }
  const IterationConfig& config() const { return cfg_; }
  double initial_horizon() const;

 private:
  const FESpace* V_;
  MaterialParams params_;
  IterationConfig cfg_;
  StokesStepper stepper_;
  TrajectoryNorm norm_;
  SpMat M_rho_;  // rho0-weighted mass
  bool rho_is_eta_;
  QuadratureSites sites_;

  bool attempt(const Vector& u0, const LagrangianMap& map0, const Vector& X0, double t0,
               int steps, ForceFunction force, LocalSolution& out, std::string& why) const;
  void lagrange_history(const std::vector<StokesState>& states, const LagrangianMap& map0,
                        std::vector<CofactorField>& A, LagrangianMap& end,
                        std::vector<DisplacementGradient>* Cs = nullptr) const;
  void step_loads(const StokesState& prev, const StokesState& cur, const CofactorField& A,
                  const Vector& X, ForceFunction force, Vector& mom, Vector& div) const;
};

LocalSolution picard_solve_local(const FESpace& V, const Vector& v0, const IterationConfig& cfg,
                                 const MaterialParams& params, ForceFunction force = nullptr);

struct StabilityReport {
  double distance = 0.0;      // trajectory norm of the difference
  double data_distance = 0.0; // H1 norm of v0_a - v0_b
  double ratio = 0.0;
  double horizon = 0.0;
  double ratio_half = 0.0;    // same at half the horizon
  bool bounded = true;        // ratio_half <= ratio (1 + margin)
};
StabilityReport stability_probe(const FESpace& V, const Vector& v0_a, const Vector& v0_b,
                                const IterationConfig& cfg, const MaterialParams& params,
                                double margin = 0.1);

struct GlobalReport {
  Trajectory traj;
  Trajectory linear;
  std::vector<double> window_end;  // T_k
  std::vector<double> X;           // X(T_k)
  std::vector<double> lagrangian_dissipation;
  std::vector<IterationRecord> iterations;
  double v0_norm = 0.0;
  double eps0 = 0.0;
  double bound = 0.0;  // 2 a_cal |v0|
  bool completed = false;
  std::string failure;
  double decay_rate = 0.0;  // fitted energy decay of the composed solution
  std::vector<Vector> Xmap;
};

// The weighted functional X(T) of w = u - u_L, P = q - q_L over states 0..n.
double x_functional(const TrajectoryNorm& norm, const std::vector<StokesState>& u,
                    const std::vector<StokesState>& uL, double dt, double eps0, double p,
                    size_t upto);

GlobalReport global_continue(const FESpace& V, const Vector& v0, const IterationConfig& cfg,
                             const MaterialParams& params);

// Least squares X_k ~ a + b (X_k^2 + X_k^3) with a, b >= 0, then a raised to
// the smallest value making the inequality hold at every sample.
struct RecursionFit {
  double a = 0.0, b = 0.0;
  double raw_a = 0.0;
};
RecursionFit fit_x_recursion(const std::vector<double>& X);
// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lagstokes
