#include "lagstokes/transmission.hpp"

#include <cmath>

namespace lagstokes {

namespace {

Phase outer_phase(const RefMesh& mesh) {
  return mesh.outer_config == OuterConfig::simple_plus ? Phase::plus : Phase::minus;
}

double linear_sq_integral(double len, double a, double b) {
  return len * (a * a + a * b + b * b) / 3.0;
}

}  // namespace

SpMat pressure_stiffness(const FESpace& V, const MaterialParams& params) {
  Triplets trip;
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    const auto& cc = V.cell(c);
    const auto pd = V.cell_pdofs(c);
    const double s = cc.area / params.eta(V.mesh().phase[c]);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        trip.emplace_back(pd[a], pd[b], s * cc.grad_lambda[a].dot(cc.grad_lambda[b]));
  }
  SpMat K(V.np(), V.np());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

double broken_gradient_norm(const FESpace& V, const Vector& theta) {
  double s = 0.0;
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    const auto& cc = V.cell(c);
    const auto pd = V.cell_pdofs(c);
    Vec2 g = Vec2::Zero();
    for (int a = 0; a < 3; ++a) g += theta[pd[a]] * cc.grad_lambda[a];
    s += cc.area * g.squaredNorm();
  }
  return std::sqrt(s);
}

TransmissionSolver::TransmissionSolver(const FESpace& V, const MaterialParams& params)
    : V_(&V), params_(params) {
  const RefMesh& mesh = V.mesh();
  test_of_node_.assign(mesh.num_nodes(), -1);
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (!mesh.on_outer[n]) {
      test_of_node_[n] = static_cast<int>(free_nodes_.size());
      free_nodes_.push_back(n);
    }
  Triplets trip;
  for (int pn = 0; pn < mesh.num_pnodes(); ++pn) {
    const int j = test_of_node_[mesh.pnode_node[pn]];
    if (j >= 0) trip.emplace_back(pn, j, 1.0);
  }
  E_.resize(mesh.num_pnodes(), size());
  E_.setFromTriplets(trip.begin(), trip.end());
  Kp_ = pressure_stiffness(V, params);
  Kc_ = SpMat(E_.transpose() * Kp_ * E_);
  Kc_.makeCompressed();
  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(Kc_);
  if (lu_->info() != Eigen::Success)
    throw Error(ErrorKind::solver, "transmission matrix factorization failed");
}

Vector TransmissionSolver::extend(const Vector& theta_c) const { return E_ * theta_c; }

Vector TransmissionSolver::gradient_load(const VectorFunction& alpha) const {
  const RefMesh& mesh = V_->mesh();
  Vector b = Vector::Zero(size());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V_->cell(c);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (int q = 0; q < kQuad; ++q) {
      const Vec2 a = alpha(cc.x[q], mesh.phase[c]);
      for (int k = 0; k < 3; ++k) acc[k] += cc.w[q] * a.dot(cc.grad_lambda[k]);
    }
    for (int k = 0; k < 3; ++k) {
      const int j = test_of_node_[mesh.cells[c][k]];
      if (j >= 0) b[j] += acc[k];
    }
  }
  return b;
}

Vector TransmissionSolver::gradient_load(const Vector& velocity) const {
  const RefMesh& mesh = V_->mesh();
  Vector b = Vector::Zero(size());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V_->cell(c);
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (int q = 0; q < kQuad; ++q) {
      const Vec2 a = V_->value(velocity, c, q);
      for (int k = 0; k < 3; ++k) acc[k] += cc.w[q] * a.dot(cc.grad_lambda[k]);
    }
    for (int k = 0; k < 3; ++k) {
      const int j = test_of_node_[mesh.cells[c][k]];
      if (j >= 0) b[j] += acc[k];
    }
  }
  return b;
}

TransmissionSolution TransmissionSolver::solve(const Vector& load, const Vector& beta,
                                               const Vector& gamma, double alpha_norm) const {
  const RefMesh& mesh = V_->mesh();
  if (load.size() != size()) throw Error(ErrorKind::shape, "transmission load has wrong size");
  if ((beta.size() && beta.size() != mesh.num_nodes()) ||
      (gamma.size() && gamma.size() != mesh.num_nodes()))
    throw Error(ErrorKind::shape, "jump data must be indexed by node");
  if (!load.allFinite() || !beta.allFinite() || !gamma.allFinite())
    throw Error(ErrorKind::data, "transmission data not finite");

  Vector lift = Vector::Zero(mesh.num_pnodes());
  const int plus = phase_index(Phase::plus);
  const int outer = phase_index(outer_phase(mesh));
  for (int n = 0; n < mesh.num_nodes(); ++n) {
    if (beta.size() && mesh.on_interface[n]) lift[mesh.pnode[n][plus]] = beta[n];
    if (gamma.size() && mesh.on_outer[n]) lift[mesh.pnode[n][outer]] = gamma[n];
  }
  const Vector rhs = load - E_.transpose() * (Kp_ * lift);
  const Vector tc = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success || !tc.allFinite())
    throw Error(ErrorKind::solver, "transmission solve failed");

  TransmissionSolution sol;
  sol.theta = Field(mesh, 1);
  sol.theta.values = E_ * tc + lift;
  const double rn = rhs.norm();
  sol.residual = rn > 0.0 ? (Kc_ * tc - rhs).norm() / rn : (Kc_ * tc - rhs).norm();
  sol.grad_norm = broken_gradient_norm(*V_, sol.theta.values);
  sol.data_norm = alpha_norm + (beta.size() ? interface_norm(mesh, beta) : 0.0) +
                  (gamma.size() ? outer_norm(mesh, gamma) : 0.0);
  sol.stability = sol.data_norm > 0.0 ? sol.grad_norm / sol.data_norm : 0.0;
  return sol;
}

double l2_norm(const FESpace& V, const VectorFunction& f) {
  double s = 0.0;
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    const auto& cc = V.cell(c);
    for (int q = 0; q < kQuad; ++q) s += cc.w[q] * f(cc.x[q], V.mesh().phase[c]).squaredNorm();
  }
  return std::sqrt(s);
}

double l2_norm(const FESpace& V, const Vector& u) {
  double s = 0.0;
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    const auto& cc = V.cell(c);
    for (int q = 0; q < kQuad; ++q) s += cc.w[q] * V.value(u, c, q).squaredNorm();
  }
  return std::sqrt(s);
}

double interface_norm(const RefMesh& mesh, const Vector& beta) {
  double s = 0.0;
  for (int id : mesh.interface_facets) {
    const auto& f = mesh.facets[id];
    s += linear_sq_integral(facet_length(mesh, id), beta[f.nodes[0]], beta[f.nodes[1]]);
  }
  return std::sqrt(s);
}

double outer_norm(const RefMesh& mesh, const Vector& gamma) {
  double s = 0.0;
  for (int id : mesh.outer_facets) {
    const auto& f = mesh.facets[id];
    s += linear_sq_integral(facet_length(mesh, id), gamma[f.nodes[0]], gamma[f.nodes[1]]);
  }
  return std::sqrt(s);
}

TransmissionSolution solve_weak_transmission(const TransmissionSolver& solver,
                                             const VectorFunction& f) {
  return solver.solve(solver.gradient_load(f), Vector(), Vector(), l2_norm(solver.space(), f));
}

TransmissionSolution solve_transmission_with_jumps(const TransmissionSolver& solver,
                                                   const VectorFunction& alpha,
                                                   const Vector& beta, const Vector& gamma) {
  return solver.solve(solver.gradient_load(alpha), beta, gamma, l2_norm(solver.space(), alpha));
}

KData k_data(const TransmissionSolver& solver, const Vector& u) {
  const FESpace& V = solver.space();
  const MaterialParams& params = solver.params();
  const RefMesh& mesh = V.mesh();
  if (u.size() != V.nv()) throw Error(ErrorKind::shape, "velocity has wrong size");

  // b(pn, c): the alpha_u functional tested against psi_pn e_c, psi the
  // per-phase P1 hat.
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(mesh.num_pnodes(), 2);
  double alpha_sq = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V.cell(c);
    const auto pd = V.cell_pdofs(c);
    const Phase ph = mesh.phase[c];
    const double r = params.mu(ph) / params.eta(ph);
    for (int q = 0; q < kQuad; ++q) {
      const Mat2 J = V.jacobian(u, c, q);
      const Mat2 D = sym_grad(J);
      const double div = J.trace();
      for (int a = 0; a < 3; ++a)
        for (int k = 0; k < 2; ++k)
          b(pd[a], k) += cc.w[q] * (-r * D.row(k).dot(cc.grad_lambda[a]) +
                                    div * cc.grad_lambda[a][k]);
      alpha_sq += cc.w[q] * (r * D.squaredNorm() + div * div);
    }
  }
  auto boundary = [&](int id, int side, Phase ph, const Vec2& n_out) {
    const auto& pts = V.facet_points(id, side);
    const double r = params.mu(ph) / params.eta(ph);
    const auto pd = V.cell_pdofs(pts[0].cell);
    for (const auto& fp : pts) {
      const Mat2 J = V.jacobian_at(u, fp);
      const Vec2 t = r * (sym_grad(J) * n_out) - J.trace() * n_out;
      for (int a = 0; a < 3; ++a)
        for (int k = 0; k < 2; ++k) b(pd[a], k) += fp.w * fp.shape[a] * t[k];
    }
  };
  for (int id : mesh.interface_facets) {
    const Vec2 n = facet_normal(mesh, id);
    boundary(id, 0, Phase::plus, n);
    boundary(id, 1, Phase::minus, -n);
  }
  for (int id : mesh.outer_facets) boundary(id, 0, mesh.phase[mesh.facets[id].cell], facet_normal(mesh, id));

  // Recovered gradient of a continuous hat: area-weighted cell gradients per phase-node.
  std::vector<double> wsum(mesh.num_pnodes(), 0.0);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int p : V.cell_pdofs(c)) wsum[p] += V.cell(c).area;
  KData out;
  out.load = Vector::Zero(solver.size());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V.cell(c);
    const auto pd = V.cell_pdofs(c);
    for (int i = 0; i < 3; ++i) {
      const Vec2 bi(b(pd[i], 0), b(pd[i], 1));
      const double w = cc.area / wsum[pd[i]];
      for (int a = 0; a < 3; ++a) {
        const int j = solver.test_index(mesh.cells[c][a]);
        if (j >= 0) out.load[j] += w * bi.dot(cc.grad_lambda[a]);
      }
    }
  }

  auto cell_mean_jac = [&](int c) {
    Mat2 m = Mat2::Zero();
    for (int q = 0; q < kQuad; ++q) m += V.cell(c).w[q] * V.jacobian(u, c, q);
    return Mat2(m / V.cell(c).area);
  };
  auto normal_stress = [&](int c, const Vec2& n) {
    const Mat2 J = cell_mean_jac(c);
    return params.mu(mesh.phase[c]) * n.dot(sym_grad(J) * n) - J.trace();
  };
  out.beta = Vector::Zero(mesh.num_nodes());
  out.gamma = Vector::Zero(mesh.num_nodes());
  Vector hits = Vector::Zero(mesh.num_nodes());
  for (int id : mesh.interface_facets) {
    const auto& f = mesh.facets[id];
    const Vec2 n = facet_normal(mesh, id);
    const double v = normal_stress(f.cell_plus, n) - normal_stress(f.cell_minus, n);
    for (int node : f.nodes) {
      out.beta[node] += v;
      hits[node] += 1.0;
    }
  }
  for (int id : mesh.outer_facets) {
    const auto& f = mesh.facets[id];
    const double v = normal_stress(f.cell, facet_normal(mesh, id));
    for (int node : f.nodes) {
      out.gamma[node] += v;
      hits[node] += 1.0;
    }
  }
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (hits[n] > 0) {
      out.beta[n] /= hits[n];
      out.gamma[n] /= hits[n];
    }
  out.alpha_norm = std::sqrt(alpha_sq);
  return out;
}

TransmissionSolution pressure_reconstruct_K(const TransmissionSolver& solver, const Vector& u) {
  const KData d = k_data(solver, u);
  return solver.solve(d.load, d.beta, d.gamma, d.alpha_norm);
}

HelmholtzProjector::HelmholtzProjector(const FESpace& V, const MaterialParams& params) : V_(&V) {
  const RefMesh& mesh = V.mesh();
  std::vector<int> test(mesh.num_nodes(), -1);
  nt_ = 0;
  for (int n = 0; n < mesh.num_nodes(); ++n)
    if (!mesh.on_outer[n]) test[n] = nt_++;
  M_ = mass_matrix(V, params);
  Triplets trip;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V.cell(c);
    const auto vd = V.cell_vdofs(c);
    for (int a = 0; a < 3; ++a) {
      const int j = test[mesh.cells[c][a]];
      if (j < 0) continue;
      for (int l = 0; l < kLocalV; ++l) {
        double s = 0.0;
        for (int q = 0; q < kQuad; ++q)
          s += cc.w[q] * cc.shape[q][local_shape(l)] * cc.grad_lambda[a][local_comp(l)];
        if (s != 0.0) trip.emplace_back(vd[l], j, s);
      }
    }
  }
  G_.resize(V.nv(), nt_);
  G_.setFromTriplets(trip.begin(), trip.end());

  const int n = V.nv() + nt_;
  Triplets big;
  for (int k = 0; k < M_.outerSize(); ++k)
    for (SpMat::InnerIterator it(M_, k); it; ++it) big.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < G_.outerSize(); ++k)
    for (SpMat::InnerIterator it(G_, k); it; ++it) {
      big.emplace_back(it.row(), V.nv() + it.col(), it.value());
      big.emplace_back(V.nv() + it.col(), it.row(), it.value());
    }
  SpMat K(n, n);
  K.setFromTriplets(big.begin(), big.end());
  K.makeCompressed();
  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(K);
  if (lu_->info() != Eigen::Success)
    throw Error(ErrorKind::solver, "Helmholtz saddle-point factorization failed");
}

HelmholtzProjector::Result HelmholtzProjector::project(const Vector& f) const {
  if (f.size() != V_->nv()) throw Error(ErrorKind::shape, "field has wrong size");
  Vector rhs = Vector::Zero(V_->nv() + nt_);
  rhs.head(V_->nv()) = M_ * f;
  const Vector x = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success || !x.allFinite())
    throw Error(ErrorKind::solver, "Helmholtz projection solve failed");
  Result r;
  r.P = x.head(V_->nv());
  r.Q = f - r.P;
  r.theta = x.tail(nt_);
  return r;
}

Vector HelmholtzProjector::divergence_residual(const Vector& Pf) const {
  return G_.transpose() * Pf;
}

RigidBasis build_rigid_basis(const FESpace& V, const MaterialParams& params) {
  return build_rigid_basis(V, mass_matrix(V, params));
}

RigidBasis build_rigid_basis(const FESpace& V, const SpMat& M) {
  RigidBasis b;
  const auto raw = rigid_modes(V);
  for (int a = 0; a < 3; ++a) {
    Vector v = raw[a];
    for (int pass = 0; pass < 2; ++pass)
      for (int c = 0; c < a; ++c) v -= b.p[c].dot(M * v) * b.p[c];
    const double n2 = v.dot(M * v);
    if (!(n2 > 1e-300))
      throw Error(ErrorKind::geometry, "degenerate rigid Gram matrix (zero-measure mesh)");
    b.p[a] = v / std::sqrt(n2);
  }
  for (int a = 0; a < 3; ++a)
    for (int c = 0; c < 3; ++c) b.gram(a, c) = b.p[a].dot(M * b.p[c]);
  return b;
}

Eigen::Vector3d rigid_moments(const RigidBasis& basis, const SpMat& M, const Vector& u) {
  const Vector Mu = M * u;
  return {basis.p[0].dot(Mu), basis.p[1].dot(Mu), basis.p[2].dot(Mu)};
}

Vector project_out_rigid(const Vector& u, const RigidBasis& basis, const SpMat& M) {
  Vector r = u;
  for (int pass = 0; pass < 2; ++pass)
    for (int a = 0; a < 3; ++a) r -= basis.p[a].dot(M * r) * basis.p[a];
  return r;
}

std::vector<TransmissionLevel> transmission_study(const MaterialParams& params, int levels,
                                                  int n_radial, int n_angular, double r_inner,
                                                  double r_outer) {
  if (levels < 1) throw Error(ErrorKind::parameter, "transmission study needs a level");
  const double R = r_outer;
  // psi(x) = (1 - |x/R|^2)(1 + x1/R + 0.5 (x2/R)^2); the plus phase adds a smooth jump.
  auto grad_star = [R](const Vec2& xr, Phase p) {
    const Vec2 x = xr / R;
    const double a = 1.0 - x.squaredNorm(), b = 1.0 + x.x() + 0.5 * x.y() * x.y();
    Vec2 g(-2 * x.x() * b + a, -2 * x.y() * b + a * x.y());
    if (p == Phase::plus) g += Vec2(0.2 - 0.1 * x.y(), -0.1 * x.x());
    return Vec2(g / R);
  };
  auto theta_star = [R](const Vec2& xr, Phase p) {
    const Vec2 x = xr / R;
    const double v = (1.0 - x.squaredNorm()) * (1.0 + x.x() + 0.5 * x.y() * x.y());
    return v + (p == Phase::plus ? 0.3 + 0.2 * x.x() - 0.1 * x.x() * x.y() : 0.0);
  };
  std::vector<TransmissionLevel> out;
  for (int level = 0; level < levels; ++level) {
    TransmissionLevel L;
    L.n_radial = n_radial << level;
    L.n_angular = n_angular << level;
    const RefMesh m = build_two_phase_disk(L.n_radial, L.n_angular, r_inner, r_outer);
    const FESpace V(m);
    const TransmissionSolver T(V, params);
    Vector beta = Vector::Zero(m.num_nodes()), gamma = Vector::Zero(m.num_nodes());
    for (int n = 0; n < m.num_nodes(); ++n)
      if (m.on_interface[n]) beta[n] = theta_star(m.nodes[n], Phase::plus) - theta_star(m.nodes[n], Phase::minus);
    const auto s = solve_transmission_with_jumps(
        T, [&](const Vec2& x, Phase p) { return Vec2(grad_star(x, p) / params.eta(p)); }, beta, gamma);
    double e = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
      const auto& cc = V.cell(c);
      const auto pd = V.cell_pdofs(c);
      Vec2 g = Vec2::Zero();
      for (int a = 0; a < 3; ++a) g += s.theta.values[pd[a]] * cc.grad_lambda[a];
      for (int q = 0; q < kQuad; ++q) e += cc.w[q] * (g - grad_star(cc.x[q], m.phase[c])).squaredNorm();
    }
    L.nodes = m.num_nodes();
    L.grad_error = std::sqrt(e);
    L.stability = s.stability;
    L.residual = s.residual;
    if (!out.empty()) L.rate = std::log2(out.back().grad_error / L.grad_error);
    out.push_back(L);
  }
  return out;
}

}  // namespace lagstokes

