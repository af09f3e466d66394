#include "lagstokes/diagnostics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "lagstokes/eigen_tools.hpp"

namespace lagstokes {

namespace {

// Apply the rotation generator (x1, x2) -> (-x2, x1) to every dof pair.
Vector rotate_pairs(const Vector& y) {
  Vector r(y.size());
  for (int i = 0; i + 1 < y.size(); i += 2) {
    r[i] = -y[i + 1];
    r[i + 1] = y[i];
  }
  return r;
}

}  // namespace

std::vector<Vector> lagrangian_displacement(const Trajectory& traj) {
  std::vector<Vector> Y;
  if (traj.states.empty()) return Y;
  Y.reserve(traj.states.size());
  Y.push_back(Vector::Zero(traj.states[0].u.size()));
  for (size_t n = 1; n < traj.states.size(); ++n)
    Y.push_back(Y.back() + 0.5 * traj.dt * (traj.states[n - 1].u + traj.states[n].u));
  return Y;
}

ConservationReport conservation_report(const FESpace& V, const MaterialParams& params,
                                       const Trajectory& traj) {
  ConservationReport r;
  const size_t ns = traj.states.size();
  if (ns == 0) return r;
  if (!traj.dissipation.empty() && traj.dissipation.size() != ns)
    throw Error(ErrorKind::shape, "dissipation override length differs from state count");
  const SpMat M = mass_matrix(V, params);
  const SpMat A = viscous_matrix(V, params);
  const RigidBasis rb = build_rigid_basis(V, M);
  const auto raw = rigid_modes(V);
  const Vector xi = V.interpolate([](const Vec2& x) { return x; });
  const double mass = raw[0].dot(M * raw[0]);
  const auto Y = lagrangian_displacement(traj);

  for (size_t n = 0; n < ns; ++n) {
    const Vector& u = traj.states[n].u;
    const Vector Mu = M * u;
    r.time.push_back(traj.states[n].t);
    r.energy.push_back(0.5 * u.dot(Mu));
    r.dissipation.push_back(traj.dissipation.empty() ? u.dot(A * u) : traj.dissipation[n]);
    r.momentum.push_back({rb.p[0].dot(Mu), rb.p[1].dot(Mu), rb.p[2].dot(Mu)});
    const Vector rot_x = raw[2] + rotate_pairs(Y[n]);
    r.lagrangian_momentum.push_back({raw[0].dot(Mu), raw[1].dot(Mu), rot_x.dot(Mu)});
    const Vector X = xi + Y[n];
    const Vector MX = M * X;
    r.barycenter.push_back(Vec2(raw[0].dot(MX), raw[1].dot(MX)) / mass);
  }
  for (size_t n = 1; n < ns; ++n) {
    const double res = r.energy[n] - r.energy[n - 1] + traj.dt * r.dissipation[n];
    r.energy_residual.push_back(res);
    r.cumulative_energy_residual += res;
    if (r.energy[n] > r.energy[n - 1]) r.energy_monotone = false;
    const Vector Mu0 = M * traj.states[n - 1].u, Mu1 = M * traj.states[n].u;
    const Vec2 v = 0.5 * Vec2(raw[0].dot(Mu0 + Mu1), raw[1].dot(Mu0 + Mu1)) / mass;
    const Vec2 dB = (r.barycenter[n] - r.barycenter[n - 1]) / traj.dt;
    r.barycenter_residual = std::max(r.barycenter_residual, (dB - v).lpNorm<Eigen::Infinity>());
  }
  for (size_t n = 0; n < ns; ++n)
    for (int a = 0; a < 3; ++a) {
      r.max_momentum_drift = std::max(r.max_momentum_drift, std::abs(r.momentum[n][a] - r.momentum[0][a]));
      r.max_lagrangian_drift = std::max(
          r.max_lagrangian_drift, std::abs(r.lagrangian_momentum[n][a] - r.lagrangian_momentum[0][a]));
    }
  return r;
}

ConservationReport energy_budget(const FESpace& V, const MaterialParams& params,
                                 const Trajectory& traj) {
  return conservation_report(V, params, traj);
}

ConservationReport momentum_and_barycenter(const FESpace& V, const MaterialParams& params,
                                           const Trajectory& traj) {
  return conservation_report(V, params, traj);
}

DecayFit decay_fit(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size()) throw Error(ErrorKind::shape, "decay fit: series lengths differ");
  if (y.size() < 8) throw Error(ErrorKind::parameter, "decay fit needs at least 8 samples");
  for (double v : y)
    if (!(v > 0.0)) throw Error(ErrorKind::domain, "decay fit: series must be positive");
  const size_t start = y.size() / 10;
  const size_t m = y.size() - start;
  double tm = 0.0, lm = 0.0;
  for (size_t i = start; i < y.size(); ++i) {
    tm += t[i];
    lm += std::log(y[i]);
  }
  tm /= m;
  lm /= m;
  double stt = 0.0, stl = 0.0;
  for (size_t i = start; i < y.size(); ++i) {
    stt += (t[i] - tm) * (t[i] - tm);
    stl += (t[i] - tm) * (std::log(y[i]) - lm);
  }
  DecayFit f;
  const double slope = stl / stt;
  f.rate = -slope;
  f.intercept = lm - slope * tm;
  f.used = static_cast<int>(m);
  double ss = 0.0;
  for (size_t i = start; i < y.size(); ++i) {
    const double e = std::log(y[i]) - (f.intercept + slope * t[i]);
    ss += e * e;
  }
  f.half_width = m > 2 ? 1.96 * std::sqrt(ss / (m - 2) / stt) : 0.0;
  return f;
}

SpectrumReport discrete_spectrum(const FESpace& V, const MaterialParams& params, int count,
                                 double shift, std::uint64_t seed, double tol) {
  if (count < RigidBasis::size + 3)
    throw Error(ErrorKind::parameter, "spectrum count must be >= M + 3");
  const SpMat M = mass_matrix(V, params);
  const SpMat A = viscous_matrix(V, params);
  const SpMat D = divergence_matrix(V);
  const int nv = V.nv(), np = V.np();
  Triplets t;
  const SpMat As = A - shift * M;
  for (int k = 0; k < As.outerSize(); ++k)
    for (SpMat::InnerIterator it(As, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < D.outerSize(); ++k)
    for (SpMat::InnerIterator it(D, k); it; ++it) {
      t.emplace_back(it.col(), nv + it.row(), -it.value());
      t.emplace_back(nv + it.row(), it.col(), -it.value());
    }
  SpMat K(nv + np, nv + np);
  K.setFromTriplets(t.begin(), t.end());
  K.makeCompressed();
  Eigen::SparseLU<SpMat> lu(K);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::numeric, "shifted Stokes matrix singular");
  BlockOp op = [&](const Eigen::MatrixXd& X) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(nv + np, X.cols());
    B.topRows(nv) = M * X;
    Eigen::MatrixXd Y = lu.solve(B);
    Eigen::MatrixXd R = B - K * Y;
    Y += lu.solve(R);
    return Eigen::MatrixXd(Y.topRows(nv));
  };
  const RitzResult rr = subspace_iteration(op, M, nv, count + 8, count, tol, 500, seed);

  SpectrumReport rep;
  rep.shift = shift;
  rep.iterations = rr.iterations;
  rep.converged = rr.converged;
  std::vector<int> idx;
  for (int k = 0; k < std::min<int>(count, rr.theta.size()); ++k) idx.push_back(k);
  std::vector<std::complex<double>> lam(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) lam[k] = shift + 1.0 / rr.theta[idx[k]];
  std::vector<int> order(idx.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return lam[a].real() < lam[b].real(); });
  double lmax = 0.0;
  for (auto l : lam) lmax = std::max(lmax, std::abs(l));
  const double ktol = 1e-8 * std::max(1.0, lmax);
  std::vector<int> kernel;
  rep.smallest_nonzero_real = 0.0;
  bool have_nonzero = false;
  for (int k : order) {
    rep.eigenvalues.push_back(lam[k]);
    rep.residuals.push_back(rr.residual[idx[k]]);
    if (std::abs(lam[k]) <= ktol) {
      kernel.push_back(idx[k]);
    } else if (!have_nonzero) {
      rep.smallest_nonzero_real = lam[k].real();
      have_nonzero = true;
    }
  }
  rep.kernel_dim = static_cast<int>(kernel.size());
  if (!kernel.empty()) {
    Eigen::MatrixXd Z(nv, 2 * kernel.size());
    for (size_t j = 0; j < kernel.size(); ++j) {
      Z.col(2 * j) = rr.vectors.col(kernel[j]).real();
      Z.col(2 * j + 1) = rr.vectors.col(kernel[j]).imag();
    }
    b_orthonormalize(Z, M);
    const RigidBasis rb = build_rigid_basis(V, M);
    Eigen::MatrixXd P(nv, 3);
    for (int a = 0; a < 3; ++a) P.col(a) = rb.p[a];
    const Eigen::MatrixXd R = Z - P * (P.transpose() * (M * Z));
    const Eigen::MatrixXd G = R.transpose() * (M * R);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const double s2 = std::max(0.0, es.eigenvalues().maxCoeff());
    rep.max_principal_angle = std::asin(std::min(1.0, std::sqrt(s2)));
  }
  return rep;
}

RbResult bootstrap_rb(double b) {
  if (!(b > 0.0)) throw Error(ErrorKind::domain, "bootstrap_rb requires b > 0");
  const double r = (-1.0 + std::sqrt(1.0 + 3.0 / b)) / 3.0;
  return {r, 3.0 * b * r * r + 2.0 * b * r - 1.0};
}

double bootstrap_a_limit(double b) {
  const double r = bootstrap_rb(b).r;
  return r * (2.0 - b * r) / 3.0;
}

double bootstrap_minimal_root(double a, double b) {
  const double rb = bootstrap_rb(b).r;
  auto f = [&](double x) { return a + b * x * x + b * x * x * x - x; };
  if (!(a > 0.0) || !(f(rb) < 0.0))
    throw Error(ErrorKind::domain, "no root of x = a + b x^2 + b x^3 below r_b");
  double lo = 0.0, hi = rb;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return hi;
}

const char* bootstrap_status_name(BootstrapVerdict::Status s) {
  switch (s) {
    case BootstrapVerdict::Status::holds: return "holds";
    case BootstrapVerdict::Status::hypothesis_failed: return "hypothesis_failed";
    case BootstrapVerdict::Status::discontinuous: return "discontinuous";
    case BootstrapVerdict::Status::recursion_violated: return "recursion_violated";
    case BootstrapVerdict::Status::bound_violated: return "bound_violated";
  }
  return "unknown";
}

BootstrapVerdict bootstrap_check(double a, double b, const std::vector<double>& X,
                                 double max_jump) {
  BootstrapVerdict v;
  using S = BootstrapVerdict::Status;
  if (!(a > 0.0) || !(b > 0.0)) {
    v.status = S::hypothesis_failed;
    v.message = "a and b must be positive";
    return v;
  }
  const double rb = bootstrap_rb(b).r;
  if (!(a < bootstrap_a_limit(b))) {
    v.status = S::hypothesis_failed;
    v.message = "a >= r_b (2 - b r_b) / 3";
    return v;
  }
  if (!X.empty() && X[0] > rb) {
    v.status = S::hypothesis_failed;
    v.first_violation = 0;
    v.message = "X(0) > r_b";
    return v;
  }
  for (size_t i = 1; i < X.size(); ++i)
    if (std::abs(X[i] - X[i - 1]) > max_jump) {
      v.status = S::discontinuous;
      v.first_violation = static_cast<int>(i);
      v.message = "sample jump exceeds the continuity allowance";
      return v;
    }
  for (size_t i = 0; i < X.size(); ++i) {
    const double x = X[i];
    const double rhs = a + b * x * x + b * x * x * x;
    if (x > rhs * (1.0 + 1e-14) + 1e-300) {
      v.status = S::recursion_violated;
      v.first_violation = static_cast<int>(i);
      v.message = "X > a + b X^2 + b X^3";
      return v;
    }
  }
  for (size_t i = 0; i < X.size(); ++i) {
    v.max_ratio = std::max(v.max_ratio, X[i] / (2.0 * a));
    if (X[i] > 2.0 * a && v.status == S::holds) {
      v.status = S::bound_violated;
      v.first_violation = static_cast<int>(i);
      v.message = "X > 2a despite the hypothesis";
    }
  }
  if (v.status == S::holds) v.message = "X <= 2a at every sample";
  return v;
}

}  // namespace lagstokes
