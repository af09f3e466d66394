#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "lagstokes/stokes.hpp"

namespace lagstokes {

struct ConservationReport {
  std::vector<double> time;
  std::vector<double> energy;       // 1/2 (eta u, u)
  std::vector<double> dissipation;  // 1/2 (mu D u, D u) or the trajectory override
  std::vector<std::array<double, 3>> momentum;             // (eta u, p_alpha), orthonormal basis
  std::vector<std::array<double, 3>> lagrangian_momentum;  // (eta u, a(X_u)), a = e1, e2, (-x2, x1)
  std::vector<Vec2> barycenter;                            // int eta X / int eta
  // E^{n+1} - E^n + dt D^{n+1}; non-positive for backward Euler with f = 0.
  std::vector<double> energy_residual;
  double cumulative_energy_residual = 0.0;
  double max_momentum_drift = 0.0;
  double max_lagrangian_drift = 0.0;
  double barycenter_residual = 0.0;  // max |dB/dt - (int eta u)/(int eta)|
  bool energy_monotone = true;
};

// Lagrangian displacement X - xi accumulated by the trapezoid rule per state.
std::vector<Vector> lagrangian_displacement(const Trajectory& traj);

ConservationReport energy_budget(const FESpace& V, const MaterialParams& params,
                                 const Trajectory& traj);
ConservationReport momentum_and_barycenter(const FESpace& V, const MaterialParams& params,
                                           const Trajectory& traj);
// Both of the above in one pass.
ConservationReport conservation_report(const FESpace& V, const MaterialParams& params,
                                       const Trajectory& traj);

struct DecayFit {
  double rate = 0.0;        // -(d/dt) log y
  double half_width = 0.0;  // 95% confidence half-width of the slope
  double intercept = 0.0;
  int used = 0;
};
// Drops the first 10% of samples, then least squares on log(y).
DecayFit decay_fit(const std::vector<double>& t, const std::vector<double>& y);

struct SpectrumReport {
  std::vector<std::complex<double>> eigenvalues;  // sorted by real part
  std::vector<double> residuals;
  int kernel_dim = 0;
  double smallest_nonzero_real = 0.0;
  double max_principal_angle = 0.0;  // kernel eigenvectors vs span of rigid basis
  double shift = 0.0;
  int iterations = 0;
  bool converged = false;
  double fitted_rate = 0.0;  // filled in by callers that run a decay fit
};

SpectrumReport discrete_spectrum(const FESpace& V, const MaterialParams& params, int count,
                                 double shift = 1e-3, std::uint64_t seed = 1, double tol = 1e-10);

struct RbResult {
  double r;
  double fprime;  // 3 b r^2 + 2 b r - 1
};
RbResult bootstrap_rb(double b);
// Largest a allowed by the continuation hypothesis: r_b (2 - b r_b) / 3.
double bootstrap_a_limit(double b);
// Smallest root of x = a + b x^2 + b x^3 in (0, r_b), by bisection.
double bootstrap_minimal_root(double a, double b);

struct BootstrapVerdict {
  enum class Status { holds, hypothesis_failed, discontinuous, recursion_violated, bound_violated };
  Status status = Status::holds;
  int first_violation = -1;
  double max_ratio = 0.0;  // max X / (2a)
  std::string message;
};
const char* bootstrap_status_name(BootstrapVerdict::Status s);

BootstrapVerdict bootstrap_check(double a, double b, const std::vector<double>& X,
                                 double max_jump = 1e300);

}  // namespace lagstokes
