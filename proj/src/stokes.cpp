#include "lagstokes/stokes.hpp"

#include <cmath>
#include <string>

#include "lagstokes/eigen_tools.hpp"

namespace lagstokes {

namespace {

void add_block(Triplets& t, const SpMat& m, int r0, int c0, double s) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
}

void add_block_t(Triplets& t, const SpMat& m, int r0, int c0, double s) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      t.emplace_back(r0 + it.col(), c0 + it.row(), s * it.value());
}

SpMat from_triplets(int n, const Triplets& t) {
  SpMat K(n, n);
  K.setFromTriplets(t.begin(), t.end());
  K.makeCompressed();
  return K;
}

bool present(const Field& f) { return f.mesh != nullptr; }

// Solve with up to three refinement passes; returns the relative residual.
double refined_solve(const Eigen::SparseLU<SpMat>& lu, const SpMat& K, const Vector& b,
                     Vector& x, double tol) {
  const double bn = b.norm();
  x = lu.solve(b);
  if (bn == 0.0) return 0.0;
  double rel = (b - K * x).norm() / bn;
  for (int pass = 0; pass < 3 && rel > 0.01 * tol; ++pass) {
    Vector r = b - K * x;
    x += lu.solve(r);
    rel = (b - K * x).norm() / bn;
  }
  return rel;
}

}  // namespace

StokesState zero_state(const FESpace& V, double t) {
  return {Vector::Zero(V.nv()), Vector::Zero(V.np()), t};
}

StokesStepper::StokesStepper(const FESpace& V, const MaterialParams& params, double dt,
                             double tol, double consistency_tol)
    : V_(&V), params_(params), dt_(dt), tol_(tol), consistency_tol_(consistency_tol) {
  if (!(dt > 0.0)) throw Error(ErrorKind::parameter, "dt must be > 0");
  params.validate();
  M_ = mass_matrix(V, params);
  A_ = viscous_matrix(V, params);
  D_ = divergence_matrix(V);
  const int nv = V.nv(), np = V.np();
  Triplets t;
  add_block(t, M_, 0, 0, 1.0 / dt);
  add_block(t, A_, 0, 0, 1.0);
  add_block_t(t, D_, 0, nv, -1.0);
  add_block(t, D_, nv, 0, -1.0);
  K_ = from_triplets(nv + np, t);
  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(K_);
  if (lu_->info() != Eigen::Success)
    throw Error(ErrorKind::singular, "singular Stokes saddle-point matrix");
}

StokesState StokesStepper::solve(const StokesState& s, const Vector& momentum,
                                 const Vector& divergence) const {
  const int nv = V_->nv(), np = V_->np();
  Vector b(nv + np);
  b.head(nv) = M_ * s.u / dt_ + momentum;
  b.tail(np) = -divergence;
  Vector x;
  const double rel = refined_solve(*lu_, K_, b, x, tol_);
  if (!(rel <= tol_) || !x.allFinite())
    throw Error(ErrorKind::solver, "Stokes step residual " + std::to_string(rel) + " above tolerance");
  return {x.head(nv), x.tail(np), s.t + dt_};
}

StokesState StokesStepper::step(const StokesState& s) const {
  return solve(s, Vector::Zero(V_->nv()), Vector::Zero(V_->np()));
}

StokesState StokesStepper::step(const StokesState& s, const StokesData& data) const {
  Vector mom = Vector::Zero(V_->nv());
  Vector div = Vector::Zero(V_->np());
  if (data.f.size()) {
    if (data.f.size() != V_->nv()) throw Error(ErrorKind::shape, "body force has wrong size");
    mom += M_ * data.f;
  }
  if (present(data.h) || present(data.k))
    mom += boundary_load(*V_, present(data.h) ? &data.h : nullptr,
                         present(data.k) ? &data.k : nullptr);
  if (data.momentum_load.size()) mom += data.momentum_load;
  if (present(data.g) && data.g.values.lpNorm<Eigen::Infinity>() > 0.0) {
    if (!present(data.R))
      throw Error(ErrorKind::data, "divergence datum g given without its potential R");
    const double r = consistency_residual(data.g, data.R);
    if (r > consistency_tol_)
      throw Error(ErrorKind::data, "inconsistent g/R pair: (g,phi) + (R,grad phi) residual " +
                                       std::to_string(r));
    div += pressure_load(*V_, data.g);
  }
  if (data.divergence_load.size()) div += data.divergence_load;
  return solve(s, mom, div);
}

double StokesStepper::consistency_residual(const Field& g, const Field& R) const {
  const RefMesh& mesh = V_->mesh();
  g.check_shape();
  R.check_shape();
  Vector res = Vector::Zero(mesh.num_nodes());
  Vector scale = Vector::Zero(mesh.num_nodes());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V_->cell(c);
    const auto pd = V_->cell_pdofs(c);
    Vec2 rmean = Vec2::Zero();
    for (int b = 0; b < 3; ++b) rmean += Vec2(R.at(pd[b], 0), R.at(pd[b], 1)) * (cc.area / 3.0);
    for (int a = 0; a < 3; ++a) {
      const int node = mesh.cells[c][a];
      if (mesh.on_outer[node]) continue;
      double gphi = 0.0;
      for (int b = 0; b < 3; ++b) gphi += g.at(pd[b], 0) * cc.area * (a == b ? 2.0 : 1.0) / 12.0;
      const double rg = rmean.dot(cc.grad_lambda[a]);
      res[node] += gphi + rg;
      scale[node] += std::abs(gphi) + std::abs(rg);
    }
  }
  const double s = scale.maxCoeff();
  return s > 0.0 ? res.lpNorm<Eigen::Infinity>() / s : 0.0;
}

Trajectory run_linear(const StokesStepper& stepper, const Vector& u0, int steps) {
  Trajectory tr;
  tr.dt = stepper.dt();
  tr.states.reserve(steps + 1);
  StokesState s = zero_state(stepper.space());
  s.u = u0;
  tr.states.push_back(s);
  for (int n = 0; n < steps; ++n) tr.states.push_back(stepper.step(tr.states.back()));
  return tr;
}

Vector project_divergence_free(const FESpace& V, const MaterialParams& params, const Vector& f) {
  const SpMat M = mass_matrix(V, params);
  const SpMat D = divergence_matrix(V);
  const int nv = V.nv(), np = V.np();
  Triplets t;
  add_block(t, M, 0, 0, 1.0);
  add_block_t(t, D, 0, nv, -1.0);
  add_block(t, D, nv, 0, -1.0);
  const SpMat K = from_triplets(nv + np, t);
  Eigen::SparseLU<SpMat> lu(K);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::solver, "divergence projection failed");
  Vector b = Vector::Zero(nv + np);
  b.head(nv) = M * f;
  Vector x;
  refined_solve(lu, K, b, x, 1e-12);
  return x.head(nv);
}

ResolventSolution solve_resolvent(const FESpace& V, const MaterialParams& params,
                                  std::complex<double> lambda, const Vector& f,
                                  bool restrict_rigid, double tol) {
  if (f.size() != V.nv()) throw Error(ErrorKind::shape, "resolvent data has wrong size");
  const SpMat M = mass_matrix(V, params);
  const SpMat A = viscous_matrix(V, params);
  const SpMat D = divergence_matrix(V);
  const int nv = V.nv(), np = V.np();
  const bool cplx = lambda.imag() != 0.0;
  if (std::abs(lambda) < 1e-14) restrict_rigid = true;
  const int blocks = cplx ? 2 : 1;
  const int nr = restrict_rigid ? 3 : 0;
  const int per = nv + np + nr;
  const int n = blocks * per;

  RigidBasis rb;
  if (restrict_rigid) rb = build_rigid_basis(V, M);
  Triplets t;
  for (int b = 0; b < blocks; ++b) {
    const int o = b * per;
    add_block(t, M, o, o, lambda.real());
    add_block(t, A, o, o, 1.0);
    add_block_t(t, D, o, o + nv, -1.0);
    add_block(t, D, o + nv, o, -1.0);
    if (restrict_rigid)
      for (int a = 0; a < 3; ++a) {
        const Vector mp = M * rb.p[a];
        for (int i = 0; i < nv; ++i)
          if (mp[i] != 0.0) {
            t.emplace_back(o + i, o + nv + np + a, mp[i]);
            t.emplace_back(o + nv + np + a, o + i, mp[i]);
          }
      }
  }
  if (cplx) {
    add_block(t, M, 0, per, -lambda.imag());
    add_block(t, M, per, 0, lambda.imag());
  }
  const SpMat K = from_triplets(n, t);
  Eigen::SparseLU<SpMat> lu(K);
  const Vector Mf = M * f;
  const double fnorm = std::sqrt(std::max(0.0, f.dot(Mf)));
  if (lu.info() != Eigen::Success)
    throw Error(ErrorKind::solver, "resolvent system singular: lambda is (numerically) in the spectrum");
  Vector rhs = Vector::Zero(n);
  rhs.head(nv) = Mf;
  Vector x;
  const double rel = refined_solve(lu, K, rhs, x, tol);
  ResolventSolution s;
  s.u_re = x.segment(0, nv);
  s.q_re = x.segment(nv, np);
  s.u_im = cplx ? Vector(x.segment(per, nv)) : Vector::Zero(nv);
  s.q_im = cplx ? Vector(x.segment(per + nv, np)) : Vector::Zero(np);
  s.residual = rel;
  if (!(rel <= tol) || !x.allFinite()) {
    const double un = std::sqrt(std::max(0.0, s.u_re.dot(M * s.u_re) + s.u_im.dot(M * s.u_im)));
    throw Error(ErrorKind::solver, "resolvent near-singular; estimated distance to spectrum " +
                                       std::to_string(un > 0.0 ? fnorm / un : 0.0));
  }
  return s;
}

KornResult korn_constant(const FESpace& V, const MaterialParams& params, std::uint64_t seed) {
  const SpMat M = mass_matrix(V, params);
  const RigidBasis rb = build_rigid_basis(V, M);
  const MaterialParams unit{1.0, 1.0, 1.0, 1.0};
  const SpMat KD = 2.0 * viscous_matrix(V, unit);
  const SpMat KH = SpMat(unit_mass_matrix(V) + gradient_matrix(V));
  const int nv = V.nv();
  Triplets t;
  add_block(t, KD, 0, 0, 1.0);
  for (int a = 0; a < 3; ++a) {
    const Vector mp = M * rb.p[a];
    for (int i = 0; i < nv; ++i)
      if (mp[i] != 0.0) {
        t.emplace_back(i, nv + a, mp[i]);
        t.emplace_back(nv + a, i, mp[i]);
      }
  }
  const SpMat K = from_triplets(nv + 3, t);
  Eigen::SparseLU<SpMat> lu(K);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::numeric, "Korn system factorization failed");
  BlockOp op = [&](const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Y(nv, X.cols());
    for (int j = 0; j < X.cols(); ++j) {
      Vector b = Vector::Zero(nv + 3);
      b.head(nv) = KH * X.col(j);
      Vector x;
      refined_solve(lu, K, b, x, 1e-13);
      Y.col(j) = x.head(nv);
    }
    return Y;
  };
  const RitzResult r = subspace_iteration(op, KH, nv, 6, 1, 1e-12, 2000, seed);
  if (!r.converged) throw Error(ErrorKind::numeric, "Korn eigen-iteration did not converge");
  const double ratio = 1.0 / r.theta[0].real();
  return {ratio, 1.0 / std::sqrt(ratio), r.iterations};
}

double kinetic_energy(const SpMat& M, const Vector& u) { return 0.5 * u.dot(M * u); }
double dissipation(const SpMat& A, const Vector& u) { return u.dot(A * u); }

}  // namespace lagstokes
