#include "lagstokes/nonlinear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lagstokes/diagnostics.hpp"
#include "lagstokes/transmission.hpp"

namespace lagstokes {

bool admissible_exponents(double p, double q, int N) {
  if (!(q > N) || !(p > 1.0)) return false;
  if (p > 2.0) return true;
  return p < 2.0 && 1.0 / p + N / q > 1.5;
}

double sigma_pq(double p, double q, int N) {
  if (!(p > 1.0) || !(q > N)) throw Error(ErrorKind::domain, "sigma needs p > 1 and q > N");
  return 2.0 / p + N / q > 1.0 ? 0.5 * (1.0 - N / q) : 0.0;
}

ExponentSet sigma_exponents(double p, double q, int N) {
  if (!admissible_exponents(p, q, N))
    throw Error(ErrorKind::domain, "(p, q) outside the admissible index sets");
  ExponentSet e;
  e.sigma = sigma_pq(p, q, N);
  const double pp = p / (p - 1.0);
  e.s = p > 2.0 ? 0.5 * (1.0 - N / (p * q) + e.sigma) : 0.5 * (1.0 / pp + e.sigma);
  e.sigma_tilde = std::min(1.0 / p, 0.5 * (1.0 - N / q));
  return e;
}

double select_local_T(double L, const ExponentSet& e, double p, double C_cal) {
  if (!(L > 0.0)) throw Error(ErrorKind::parameter, "select_local_T needs L > 0");
  if (!(C_cal > 0.0)) throw Error(ErrorKind::parameter, "calibration constant must be positive");
  if (!(p > 1.0)) throw Error(ErrorKind::parameter, "p must exceed 1");
  double T = 1.0;
  const double a1 = (p - 1.0) / p + e.sigma;
  if (a1 > 0.0) T = std::min(T, std::pow(1.0 / (2.0 * C_cal * L), 1.0 / a1));
  if (e.s > 0.0) T = std::min(T, std::pow(1.0 / (C_cal * L), 1.0 / e.s));
  return T;
}

void IterationConfig::validate() const {
  if (!admissible_exponents(p, q, N))
    throw Error(ErrorKind::validation, "iteration exponents (p, q) not admissible");
  if (!(L > 0.0)) throw Error(ErrorKind::validation, "iteration.L must be positive");
  if (!(T > 0.0)) throw Error(ErrorKind::validation, "iteration.T must be positive");
  if (!(dt > 0.0)) throw Error(ErrorKind::validation, "solver.dt must be positive");
  if (!(tol > 0.0)) throw Error(ErrorKind::validation, "iteration.tol must be positive");
  if (max_iter < 1) throw Error(ErrorKind::validation, "iteration.max_iter must be at least 1");
  if (!(kappa > 0.0 && kappa < 1.0)) throw Error(ErrorKind::validation, "iteration.kappa must lie in (0,1)");
  if (!(gamma0 >= 1.0)) throw Error(ErrorKind::validation, "iteration.gamma0 must be at least 1");
  if (!(C_cal > 0.0) || !(a_cal > 0.0)) throw Error(ErrorKind::validation, "calibration constants must be positive");
  if (!(linear_tol > 0.0)) throw Error(ErrorKind::validation, "solver.linear_tol must be positive");
  if (!(contraction_target > 0.0 && contraction_target < 1.0))
    throw Error(ErrorKind::validation, "contraction target must lie in (0,1)");
  if (!(window > 0.0)) throw Error(ErrorKind::validation, "iteration.window must be positive");
}

LagrangianMap::LagrangianMap(const FESpace& V) : sites(V), C(zero_displacement(sites.size())) {}

namespace {

struct VolumeTerms {
  Vector momentum, divergence;
  double dissipation = 0.0;  // 1/2 (mu D_u, D_u)
};

void check_kappa(const CofactorField& A, double cap) {
  if (A.kappa > cap)
    throw Error(ErrorKind::geometry, "displacement gradient exceeds the series cap (|C| = " +
                                         std::to_string(A.kappa) + "); reduce the horizon");
}

VolumeTerms volume_terms(const FESpace& V, const MaterialParams& params, const QuadratureSites& sites,
                         const Vector& u, const Vector& q, const CofactorField& A) {
  const RefMesh& mesh = V.mesh();
  VolumeTerms out;
  out.momentum = Vector::Zero(V.nv());
  out.divergence = Vector::Zero(V.np());
  const Mat2 I = Mat2::Identity();
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double mu = params.mu(mesh.phase[c]);
    const auto& cc = V.cell(c);
    const auto vd = V.cell_vdofs(c);
    const auto pd = V.cell_pdofs(c);
    for (int k = 0; k < kQuad; ++k) {
      const Mat2& a = A.A[sites.cell_site(c, k)];
      const Mat2 J = V.jacobian(u, c, k);
      const double qv = V.pressure(q, c, k);
      const Mat2 Du = J * a.transpose() + a * J.transpose();
      const Mat2 W = mu * (J + J.transpose()) - qv * I - (mu * Du - qv * I) * a;
      const double w = cc.w[k];
      for (int l = 0; l < kLocalV; ++l)
        out.momentum[vd[l]] += w * W.row(local_comp(l)).dot(cc.grad[k][local_shape(l)]);
      const double g = (J * (I - a.transpose())).trace();
      for (int i = 0; i < 3; ++i) out.divergence[pd[i]] += w * g * cc.shape[k][i];
      out.dissipation += 0.5 * w * mu * Du.squaredNorm();
    }
  }
  return out;
}

// Cell means of site quantities averaged onto phase-nodes.
template <class F>
Field nodal_from_cells(const FESpace& V, int ncomp, F&& site_value) {
  const RefMesh& mesh = V.mesh();
  Field out(mesh, ncomp);
  std::vector<double> wsum(mesh.num_pnodes(), 0.0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V.cell(c);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(ncomp);
    for (int k = 0; k < kQuad; ++k) mean += cc.w[k] * site_value(c, k);
    mean /= cc.area;
    for (int pn : V.cell_pdofs(c)) {
      for (int j = 0; j < ncomp; ++j) out.at(pn, j) += cc.area * mean[j];
      wsum[pn] += cc.area;
    }
  }
  for (int pn = 0; pn < mesh.num_pnodes(); ++pn)
    if (wsum[pn] > 0.0)
      for (int j = 0; j < ncomp; ++j) out.at(pn, j) /= wsum[pn];
  return out;
}

Mat2 traction_defect(const Mat2& J, double qv, double mu, const Mat2& a) {
  const Mat2 I = Mat2::Identity();
  const Mat2 Du = J * a.transpose() + a * J.transpose();
  return mu * (J + J.transpose()) - qv * I - (mu * Du - qv * I) * a;
}

}  // namespace

NonlinearRHS compute_nonlinear_terms(const FESpace& V, const MaterialParams& params,
                                     const QuadratureSites& sites, const Vector& u,
                                     const Vector& q, const CofactorField& A, double t) {
  if (A.size() != sites.size()) throw Error(ErrorKind::shape, "cofactor field does not match the sites");
  if (u.size() != V.nv() || q.size() != V.np()) throw Error(ErrorKind::shape, "state has wrong size");
  check_kappa(A, 1.0);
  const RefMesh& mesh = V.mesh();
  NonlinearRHS r;
  r.t = t;
  VolumeTerms vt = volume_terms(V, params, sites, u, q, A);
  r.momentum = std::move(vt.momentum);
  r.divergence = std::move(vt.divergence);
  const Mat2 I = Mat2::Identity();
  r.g = nodal_from_cells(V, 1, [&](int c, int k) {
    const Mat2 J = V.jacobian(u, c, k);
    Eigen::VectorXd v(1);
    v[0] = (J * (I - A.A[sites.cell_site(c, k)].transpose())).trace();
    return v;
  });
  r.R = nodal_from_cells(V, 2, [&](int c, int k) {
    const Vec2 val = V.value(u, c, k);
    return Eigen::VectorXd((I - A.A[sites.cell_site(c, k)].transpose()) * val);
  });

  // Boundary tractions: facet means from the facet sites, then length-weighted to nodes.
  r.h = Field(mesh, 2);
  r.k = Field(mesh, 2);
  std::vector<double> wh(mesh.num_pnodes(), 0.0), wk(mesh.num_pnodes(), 0.0);
  auto deposit = [&](Field& dst, std::vector<double>& wsum, int facet, Phase side, const Vec2& val,
                     double len) {
    for (int node : mesh.facet(facet).nodes) {
      const int pn = mesh.pnode[node][phase_index(side)];
      dst.at(pn, 0) += len * val.x();
      dst.at(pn, 1) += len * val.y();
      wsum[pn] += len;
    }
  };
  for (size_t f = 0; f < mesh.interface_facets.size(); ++f) {
    const int id = mesh.interface_facets[f];
    const Vec2 n = facet_normal(mesh, id);
    const double len = facet_length(mesh, id);
    for (int s = 0; s < 2; ++s) {
      const auto& pts = V.facet_points(id, s);
      const Phase ph = s == 0 ? Phase::plus : Phase::minus;
      Vec2 mean = Vec2::Zero();
      for (int g = 0; g < kLine; ++g) {
        const Mat2 W = traction_defect(V.jacobian_at(u, pts[g]), V.pressure_at(q, pts[g]),
                                       params.mu(ph), A.A[sites.interface_site(f, s, g)]);
        mean += pts[g].w * (W * n);
      }
      deposit(r.h, wh, id, ph, mean / len, len);
    }
  }
  for (size_t f = 0; f < mesh.outer_facets.size(); ++f) {
    const int id = mesh.outer_facets[f];
    const Vec2 n = facet_normal(mesh, id);
    const double len = facet_length(mesh, id);
    const auto& pts = V.facet_points(id, 0);
    const Phase ph = mesh.phase[pts[0].cell];
    Vec2 mean = Vec2::Zero();
    for (int g = 0; g < kLine; ++g) {
      const Mat2 W = traction_defect(V.jacobian_at(u, pts[g]), V.pressure_at(q, pts[g]),
                                     params.mu(ph), A.A[sites.outer_site(f, g)]);
      mean += pts[g].w * (W * n);
    }
    deposit(r.k, wk, id, ph, mean / len, len);
  }
  for (int pn = 0; pn < mesh.num_pnodes(); ++pn) {
    if (wh[pn] > 0.0) r.h.values.segment(2 * pn, 2) /= wh[pn];
    if (wk[pn] > 0.0) r.k.values.segment(2 * pn, 2) /= wk[pn];
  }
  r.f = r.momentum - boundary_load(V, &r.h, &r.k);
  return r;
}

double compatibility_defect(const FESpace& V, const QuadratureSites& sites, const Vector& u,
                            const CofactorField& A) {
  const RefMesh& mesh = V.mesh();
  const Mat2 I = Mat2::Identity();
  double vol = 0.0, scale = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int k = 0; k < kQuad; ++k) {
      const Mat2 J = V.jacobian(u, c, k);
      const double g = (J * (I - A.A[sites.cell_site(c, k)].transpose())).trace();
      vol += V.cell(c).w[k] * g;
      scale += V.cell(c).w[k] * std::abs(g);
    }
  double flux = 0.0;
  for (size_t f = 0; f < mesh.outer_facets.size(); ++f) {
    const int id = mesh.outer_facets[f];
    const Vec2 n = facet_normal(mesh, id);
    const auto& pts = V.facet_points(id, 0);
    for (int g = 0; g < kLine; ++g) {
      const double v = ((I - A.A[sites.outer_site(f, g)].transpose()) * V.value_at(u, pts[g])).dot(n);
      flux += pts[g].w * v;
      scale += pts[g].w * std::abs(v);
    }
  }
  for (size_t f = 0; f < mesh.interface_facets.size(); ++f) {
    const int id = mesh.interface_facets[f];
    const Vec2 n = facet_normal(mesh, id);
    for (int s = 0; s < 2; ++s) {
      const auto& pts = V.facet_points(id, s);
      for (int g = 0; g < kLine; ++g) {
        const double v =
            ((I - A.A[sites.interface_site(f, s, g)].transpose()) * V.value_at(u, pts[g])).dot(n);
        flux -= (s == 0 ? 1.0 : -1.0) * pts[g].w * v;
        scale += pts[g].w * std::abs(v);
      }
    }
  }
  return scale > 0.0 ? std::abs(vol - flux) / scale : 0.0;
}

double lp_norm(const TimeSeries& s, double p, double weight) {
  if (!(p >= 1.0)) throw Error(ErrorKind::parameter, "lp_norm needs p >= 1");
  double acc = 0.0;
  for (size_t n = 0; n < s.v.size(); ++n) {
    const double t = s.dt * (static_cast<double>(n) + 0.5);
    acc += s.dt * std::pow(std::exp(weight * t) * std::abs(s.v[n]), p);
  }
  return std::pow(acc, 1.0 / p);
}

TimeSeries extension_reflect(const TimeSeries& h, double t) {
  const double T = h.horizon();
  if (!(t > 0.0) || t > T * (1.0 + 1e-12))
    throw Error(ErrorKind::parameter, "reflection time must lie in (0, T]");
  const size_t m = static_cast<size_t>(std::floor(t / h.dt + 1e-9));
  if (m == 0) throw Error(ErrorKind::parameter, "reflection time shorter than one sample");
  TimeSeries out;
  out.dt = h.dt;
  out.v.assign(2 * m, 0.0);
  for (size_t n = 0; n < m; ++n) {
    out.v[n] = h.v[n];
    out.v[2 * m - 1 - n] = h.v[n];
  }
  return out;
}

double smooth_cutoff(double r) {
  if (r <= 0.0) return 1.0;
  if (r >= 1.0) return 0.0;
  return 1.0 - r * r * (3.0 - 2.0 * r);
}

TimeSeries cutoff_extension(const TimeSeries& h, double T, double gamma) {
  (void)gamma;  // the weight only enters the bound, not the construction
  TimeSeries out = extension_reflect(h, T);
  for (size_t n = 0; n < out.v.size(); ++n) {
    const double s = out.dt * (static_cast<double>(n) + 0.5);
    out.v[n] *= smooth_cutoff(s - T);
  }
  return out;
}

TrajectoryNorm::TrajectoryNorm(const FESpace& V, double p, bool hessian)
    : V_(&V), p_(p), hessian_(hessian), M1_(unit_mass_matrix(V)), G_(gradient_matrix(V)),
      Pm_(pressure_mass_matrix(V)) {}

double TrajectoryNorm::l2(const Vector& u) const { return std::sqrt(std::max(0.0, u.dot(M1_ * u))); }
double TrajectoryNorm::grad(const Vector& u) const { return std::sqrt(std::max(0.0, u.dot(G_ * u))); }
double TrajectoryNorm::h1(const Vector& u) const { return std::hypot(l2(u), grad(u)); }

double TrajectoryNorm::hessian(const Vector& u) const {
  const RefMesh& mesh = V_->mesh();
  const auto J = recover_nodal_jacobian(*V_, u);
  double acc = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V_->cell(c);
    const auto pd = V_->cell_pdofs(c);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        Vec2 g = Vec2::Zero();
        for (int a = 0; a < 3; ++a) g += J[pd[a]](i, j) * cc.grad_lambda[a];
        acc += cc.area * g.squaredNorm();
      }
  }
  return std::sqrt(acc);
}

double TrajectoryNorm::pressure_h1(const Vector& q) const {
  return std::hypot(std::sqrt(std::max(0.0, q.dot(Pm_ * q))), broken_gradient_norm(*V_, q));
}

double TrajectoryNorm::operator()(const std::vector<StokesState>& s, double dt) const {
  if (s.empty()) return 0.0;
  double sup = 0.0;
  for (const auto& st : s) sup = std::max(sup, h1(st.u));
  if (s.size() < 2) return sup;
  TimeSeries du{dt, {}}, gu{dt, {}}, hu{dt, {}}, gq{dt, {}};
  for (size_t n = 1; n < s.size(); ++n) {
    du.v.push_back(l2(s[n].u - s[n - 1].u) / dt);
    gu.v.push_back(grad(s[n].u));
    if (hessian_) hu.v.push_back(hessian(s[n].u));
    gq.v.push_back(broken_gradient_norm(*V_, s[n].q));
  }
  double total = sup + lp_norm(du, p_) + lp_norm(gu, p_) + lp_norm(gq, p_);
  if (hessian_) total += lp_norm(hu, p_);
  return total;
}

double TrajectoryNorm::difference(const std::vector<StokesState>& a,
                                  const std::vector<StokesState>& b, double dt) const {
  if (a.size() != b.size()) throw Error(ErrorKind::shape, "trajectories differ in length");
  std::vector<StokesState> d(a.size());
  for (size_t n = 0; n < a.size(); ++n) d[n] = {a[n].u - b[n].u, a[n].q - b[n].q, a[n].t};
  return (*this)(d, dt);
}

PicardSolver::PicardSolver(const FESpace& V, const MaterialParams& params, const IterationConfig& cfg)
    : V_(&V), params_(params), cfg_(cfg), stepper_(V, params, cfg.dt, cfg.linear_tol),
      norm_(V, cfg.p, cfg.hessian), sites_(V) {
  params.validate();
  cfg.validate();
  MaterialParams rho = params;
  if (cfg.rho0_plus > 0.0) rho.eta_plus = cfg.rho0_plus;
  if (cfg.rho0_minus > 0.0) rho.eta_minus = cfg.rho0_minus;
  rho_is_eta_ = rho.eta_plus == params.eta_plus && rho.eta_minus == params.eta_minus;
  M_rho_ = mass_matrix(V, rho);
}

double PicardSolver::initial_horizon() const {
  const ExponentSet e = sigma_exponents(cfg_.p, cfg_.q, cfg_.N);
  return std::min(cfg_.T, select_local_T(cfg_.L, e, cfg_.p, cfg_.C_cal));
}

void PicardSolver::lagrange_history(const std::vector<StokesState>& states, const LagrangianMap& map0,
                                    std::vector<CofactorField>& A, LagrangianMap& end,
                                    std::vector<DisplacementGradient>* Cs) const {
  SeriesOptions opts;
  opts.kappa = cfg_.kappa;
  A.clear();
  A.reserve(states.size());
  DisplacementGradient C = map0.C;
  std::vector<Mat2> Jprev = map0.J.empty() ? sites_.jacobians(*V_, states[0].u) : map0.J;
  if (Cs) Cs->clear();
  for (size_t n = 0; n < states.size(); ++n) {
    std::vector<Mat2> J = n == 0 ? Jprev : sites_.jacobians(*V_, states[n].u);
    if (n > 0) C = accumulate_gradient(C, transpose_all(Jprev), transpose_all(J), cfg_.dt);
    if (max_site_norm(C.C) > cfg_.kappa)
      throw Error(ErrorKind::geometry, "displacement gradient exceeds the series cap at t = " +
                                           std::to_string(states[n].t) + "; reduce the horizon");
    A.push_back(neumann_cofactor(C, opts));
    if (Cs) Cs->push_back(C);
    Jprev = std::move(J);
  }
  end.C = C;
  end.J = Jprev;
}

void PicardSolver::step_loads(const StokesState& prev, const StokesState& cur, const CofactorField& A,
                              const Vector& X, ForceFunction force, Vector& mom, Vector& div) const {
  const VolumeTerms vt = volume_terms(*V_, params_, sites_, cur.u, cur.q, A);
  mom = vt.momentum;
  div = vt.divergence;
  if (!rho_is_eta_) mom += (stepper_.M() - M_rho_) * (cur.u - prev.u) / cfg_.dt;
  if (force) {
    const RefMesh& mesh = V_->mesh();
    Vector fv = Vector::Zero(V_->nv());
    for (int i = 0; i < mesh.num_nodes(); ++i) {
      const Vec2 x = mesh.nodes[i] + Vec2(X[V_->node_dof(i, 0)], X[V_->node_dof(i, 1)]);
      const Vec2 f = force(x, cur.t);
      fv[V_->node_dof(i, 0)] = f.x();
      fv[V_->node_dof(i, 1)] = f.y();
    }
    mom += M_rho_ * fv;
  }
}

namespace {

std::vector<Vector> displacement_history(const std::vector<StokesState>& s, const Vector& X0, double dt) {
  std::vector<Vector> X{X0};
  for (size_t n = 1; n < s.size(); ++n) X.push_back(X.back() + 0.5 * dt * (s[n - 1].u + s[n].u));
  return X;
}

double step_residual(const StokesStepper& st, const StokesState& prev, const StokesState& cur,
                     const Vector& mom, const Vector& div) {
  const Vector r1 = st.M() * (cur.u - prev.u) / st.dt() + st.A() * cur.u -
                    SpMat(st.D().transpose()) * cur.q - mom;
  const Vector r2 = st.D() * cur.u - div;
  const double scale = std::max({(st.M() * prev.u / st.dt() + mom).norm(), (st.M() * cur.u / st.dt()).norm(),
                                 div.norm(), std::numeric_limits<double>::min()});
  return std::sqrt(r1.squaredNorm() + r2.squaredNorm()) / scale;
}

}  // namespace

double PicardSolver::residual(const std::vector<StokesState>& states, const LagrangianMap& map0,
                              ForceFunction force) const {
  std::vector<CofactorField> A;
  LagrangianMap end(*V_);
  lagrange_history(states, map0, A, end);
  const auto X = displacement_history(states, Vector::Zero(V_->nv()), cfg_.dt);
  double r = 0.0;
  Vector mom, div;
  for (size_t n = 1; n < states.size(); ++n) {
    step_loads(states[n - 1], states[n], A[n], X[n], force, mom, div);
    if (states[n].u.norm() == 0.0 && states[n - 1].u.norm() == 0.0 && mom.norm() == 0.0) continue;
    r = std::max(r, step_residual(stepper_, states[n - 1], states[n], mom, div));
  }
  return r;
}

bool PicardSolver::attempt(const Vector& u0, const LagrangianMap& map0, const Vector& X0, double t0,
                           int steps, ForceFunction force, LocalSolution& out, std::string& why) const {
  const double dt = cfg_.dt;
  StokesState s0{u0, Vector::Zero(V_->np()), t0};
  std::vector<StokesState> lin{s0};
  for (int n = 0; n < steps; ++n) lin.push_back(stepper_.step(lin.back()));

  out.iterations.clear();
  std::vector<StokesState> cur = lin;
  std::vector<CofactorField> A;
  LagrangianMap end(*V_);
  double prev_d = 0.0;
  bool converged = false;
  for (int it = 1; it <= cfg_.max_iter; ++it) {
    try {
      lagrange_history(cur, map0, A, end);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::geometry && e.kind() != ErrorKind::domain) throw;
      why = e.what();
      return false;
    }
    const auto X = displacement_history(cur, X0, dt);
    std::vector<StokesState> next{s0};
    double res = 0.0;
    Vector mom, div;
    for (int n = 0; n < steps; ++n) {
      step_loads(cur[n], cur[n + 1], A[n + 1], X[n + 1], force, mom, div);
      if (it > 1) res = std::max(res, step_residual(stepper_, cur[n], cur[n + 1], mom, div));
      next.push_back(stepper_.solve(next.back(), mom, div));
    }
    const double d = norm_.difference(next, cur, dt);
    const double scale = norm_(next, dt);
    const double factor = it > 1 && prev_d > 0.0 ? d / prev_d : 0.0;
    out.iterations.push_back({it, d, factor, res, steps * dt});
    cur = std::move(next);
    out.norm_U = norm_.difference(cur, lin, dt);
    if (out.norm_U > cfg_.L) out.in_ball = false;
    if (d <= cfg_.tol * scale || d == 0.0) {
      converged = true;
      out.contraction = factor;
      break;
    }
    if (it > 1 && factor >= cfg_.contraction_target) {
      why = "contraction factor " + std::to_string(factor) + " at horizon " + std::to_string(steps * dt);
      out.contraction = factor;
      return false;
    }
    prev_d = d;
  }
  if (!converged) {
    out.contraction = out.iterations.back().factor;
    why = "no convergence within " + std::to_string(cfg_.max_iter) + " iterations (factor " +
          std::to_string(out.contraction) + ")";
    return false;
  }

  // Substitute the converged pair back into the nonlinear step equations.
  lagrange_history(cur, map0, A, end);
  const auto X = displacement_history(cur, X0, dt);
  out.residual = 0.0;
  out.lagrangian_dissipation.clear();
  Vector mom, div;
  for (int n = 0; n <= steps; ++n) {
    out.lagrangian_dissipation.push_back(volume_terms(*V_, params_, sites_, cur[n].u, cur[n].q, A[n]).dissipation);
    if (n == 0) continue;
    step_loads(cur[n - 1], cur[n], A[n], X[n], force, mom, div);
    if ((M_rho_ * cur[n].u).norm() == 0.0 && mom.norm() == 0.0 && cur[n - 1].u.norm() == 0.0) continue;
    out.residual = std::max(out.residual, step_residual(stepper_, cur[n - 1], cur[n], mom, div));
  }
  out.traj.states = std::move(cur);
  out.traj.dt = dt;
  out.traj.dissipation = out.lagrangian_dissipation;
  out.linear.states = std::move(lin);
  out.linear.dt = dt;
  out.horizon = steps * dt;
  out.map_end = end;
  out.X = X;
  return true;
}

LocalSolution PicardSolver::solve_window(const Vector& u0, const LagrangianMap& map0, const Vector& X0,
                                         double t0, double horizon, bool fixed_horizon,
                                         ForceFunction force) const {
  if (u0.size() != V_->nv()) throw Error(ErrorKind::shape, "initial velocity has wrong size");
  const double dt = cfg_.dt;
  int steps = static_cast<int>(std::floor(horizon / dt + 1e-9));
  const double floor_T = cfg_.horizon_floor > 0.0 ? cfg_.horizon_floor : 2.0 * dt;
  if (steps < 1) throw Error(ErrorKind::parameter, "local horizon shorter than one step");
  LocalSolution out(*V_);
  std::string why;
  for (;;) {
    if (attempt(u0, map0, X0, t0, steps, force, out, why)) return out;
    const int half = steps / 2;
    if (fixed_horizon || half < 1 || half * dt < floor_T * (1.0 - 1e-12)) {
      if (why.find("series cap") != std::string::npos)
        throw Error(ErrorKind::geometry, why);
      throw Error(ErrorKind::convergence, "fixed-point iteration does not contract: " + why);
    }
    steps = half;
    ++out.restarts;
  }
}

LocalSolution PicardSolver::solve(const Vector& v0, ForceFunction force) const {
  LagrangianMap map0(*V_);
  map0.J = sites_.jacobians(*V_, v0);
  return solve_window(v0, map0, Vector::Zero(V_->nv()), 0.0, initial_horizon(), false, force);
}

LocalSolution picard_solve_local(const FESpace& V, const Vector& v0, const IterationConfig& cfg,
                                 const MaterialParams& params, ForceFunction force) {
  const PicardSolver solver(V, params, cfg);
  return solver.solve(v0, force);
}

StabilityReport stability_probe(const FESpace& V, const Vector& v0_a, const Vector& v0_b,
                                const IterationConfig& cfg, const MaterialParams& params, double margin) {
  const PicardSolver solver(V, params, cfg);
  StabilityReport r;
  LocalSolution a = solver.solve(v0_a);
  const double T = a.horizon;
  LagrangianMap map_b(V);
  map_b.J = map_b.sites.jacobians(V, v0_b);
  const LocalSolution b = solver.solve_window(v0_b, map_b, Vector::Zero(V.nv()), 0.0, T, true);
  r.horizon = T;
  r.data_distance = solver.norm().h1(v0_a - v0_b);
  r.distance = solver.norm().difference(a.traj.states, b.traj.states, cfg.dt);
  r.ratio = r.data_distance > 0.0 ? r.distance / r.data_distance : 0.0;
  const size_t half = (a.traj.states.size() - 1) / 2;
  if (half >= 1) {
    const std::vector<StokesState> ah(a.traj.states.begin(), a.traj.states.begin() + half + 1);
    const std::vector<StokesState> bh(b.traj.states.begin(), b.traj.states.begin() + half + 1);
    const double dh = solver.norm().difference(ah, bh, cfg.dt);
    r.ratio_half = r.data_distance > 0.0 ? dh / r.data_distance : 0.0;
  }
  r.bounded = r.ratio_half <= r.ratio * (1.0 + margin) + 1e-300;
  return r;
}

double x_functional(const TrajectoryNorm& norm, const std::vector<StokesState>& u,
                    const std::vector<StokesState>& uL, double dt, double eps0, double p, size_t upto) {
  if (u.size() < upto + 1 || uL.size() < upto + 1) throw Error(ErrorKind::shape, "X functional range");
  TimeSeries dw{dt, {}}, w{dt, {}}, gw{dt, {}}, hw{dt, {}}, P{dt, {}};
  auto weight = [&](double t) { return std::exp(eps0 * t); };
  for (size_t n = 1; n <= upto; ++n) {
    const Vector wn = u[n].u - uL[n].u;
    const Vector wp = u[n - 1].u - uL[n - 1].u;
    const double e = weight(u[n].t);
    dw.v.push_back(e * norm.l2(wn - wp) / dt);
    w.v.push_back(e * norm.l2(wn));
    gw.v.push_back(e * norm.grad(wn));
    hw.v.push_back(e * norm.hessian(wn));
    P.v.push_back(e * norm.pressure_h1(u[n].q - uL[n].q));
  }
  return lp_norm(dw, p) + lp_norm(w, p) + lp_norm(gw, p) + lp_norm(hw, p) + lp_norm(P, p);
}

GlobalReport global_continue(const FESpace& V, const Vector& v0_in, const IterationConfig& cfg,
                             const MaterialParams& params) {
  if ((cfg.rho0_plus > 0.0 && cfg.rho0_plus != params.eta_plus) ||
      (cfg.rho0_minus > 0.0 && cfg.rho0_minus != params.eta_minus))
    throw Error(ErrorKind::parameter, "global continuation requires rho0 = eta");
  const PicardSolver solver(V, params, cfg);
  const StokesStepper& st = solver.stepper();
  GlobalReport rep;
  const RigidBasis rb = build_rigid_basis(V, st.M());
  Vector v0 = v0_in;
  const double vm = std::sqrt(v0.dot(st.M() * v0));
  if (rigid_moments(rb, st.M(), v0).cwiseAbs().maxCoeff() > 1e-12 * std::max(vm, 1.0))
    v0 = project_out_rigid(v0, rb, st.M());
  rep.v0_norm = solver.norm().h1(v0);
  rep.bound = 2.0 * cfg.a_cal * rep.v0_norm;

  const int total = static_cast<int>(std::lround(cfg.T / cfg.dt));
  if (total < 1) throw Error(ErrorKind::parameter, "global horizon shorter than one step");
  rep.linear = run_linear(st, v0, total);

  if (cfg.eps0 > 0.0) {
    rep.eps0 = cfg.eps0;
  } else if (rep.v0_norm > 0.0 && total >= 8) {
    std::vector<double> t, e;
    for (const auto& s : rep.linear.states) {
      t.push_back(s.t);
      e.push_back(0.5 * s.u.dot(st.M() * s.u));
    }
    // Energy rate is twice the velocity rate; keep the weight strictly inside it.
    rep.eps0 = 0.25 * std::max(0.0, decay_fit(t, e).rate);
  }

  rep.traj.dt = cfg.dt;
  rep.traj.states.push_back({v0, Vector::Zero(V.np()), 0.0});
  LagrangianMap map(V);
  map.J = map.sites.jacobians(V, v0);
  Vector X = Vector::Zero(V.nv());
  rep.Xmap.push_back(X);
  int done = 0;
  rep.completed = true;
  while (done < total) {
    const int want = std::min(total - done, std::max(1, static_cast<int>(std::floor(cfg.window / cfg.dt + 1e-9))));
    LocalSolution sol(V);
    try {
      sol = solver.solve_window(rep.traj.states.back().u, map, X, done * cfg.dt, want * cfg.dt, false);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::geometry && e.kind() != ErrorKind::convergence) throw;
      rep.completed = false;
      rep.failure = "local solve failed at t = " + std::to_string(done * cfg.dt) + ": " + e.what();
      break;
    }
    const int got = static_cast<int>(sol.traj.states.size()) - 1;
    for (int n = 1; n <= got; ++n) {
      sol.traj.states[n].t = (done + n) * cfg.dt;
      rep.traj.states.push_back(sol.traj.states[n]);
      rep.Xmap.push_back(sol.X[n]);
    }
    if (rep.lagrangian_dissipation.empty()) rep.lagrangian_dissipation.push_back(sol.lagrangian_dissipation[0]);
    for (int n = 1; n <= got; ++n) rep.lagrangian_dissipation.push_back(sol.lagrangian_dissipation[n]);
    for (auto it : sol.iterations) rep.iterations.push_back(it);
    map = sol.map_end;
    X = sol.X.back();
    done += got;
    const double x = x_functional(solver.norm(), rep.traj.states, rep.linear.states, cfg.dt, rep.eps0,
                                  cfg.p, done);
    rep.window_end.push_back(done * cfg.dt);
    rep.X.push_back(x);
    if (x > rep.bound && rep.v0_norm > 0.0) {
      rep.completed = false;
      rep.failure = "X(" + std::to_string(done * cfg.dt) + ") = " + std::to_string(x) +
                    " exceeds 2 a_cal |v0| = " + std::to_string(rep.bound);
      break;
    }
  }
  rep.traj.dissipation = rep.lagrangian_dissipation;
  if (rep.v0_norm > 0.0 && rep.traj.states.size() >= 8) {
    std::vector<double> t, e;
    for (const auto& s : rep.traj.states) {
      t.push_back(s.t);
      e.push_back(0.5 * s.u.dot(st.M() * s.u));
    }
    rep.decay_rate = decay_fit(t, e).rate;
  }
  return rep;
}

RecursionFit fit_x_recursion(const std::vector<double>& X) {
  RecursionFit f;
  if (X.empty()) return f;
  const size_t n = X.size();
  std::vector<double> z(n);
  for (size_t i = 0; i < n; ++i) z[i] = X[i] * X[i] + X[i] * X[i] * X[i];
  auto sse = [&](double a, double b) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += std::pow(X[i] - a - b * z[i], 2);
    return s;
  };
  double best = std::numeric_limits<double>::infinity();
  auto consider = [&](double a, double b) {
    if (a < 0.0 || b < 0.0 || !std::isfinite(a) || !std::isfinite(b)) return;
    const double s = sse(a, b);
    if (s < best) {
      best = s;
      f.a = a;
      f.b = b;
    }
  };
  double sx = 0, sz = 0, szz = 0, sxz = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += X[i];
    sz += z[i];
    szz += z[i] * z[i];
    sxz += X[i] * z[i];
  }
  const double det = n * szz - sz * sz;
  if (std::abs(det) > 1e-300) consider((szz * sx - sz * sxz) / det, (n * sxz - sz * sx) / det);
  consider(sx / n, 0.0);
  if (szz > 0.0) consider(0.0, sxz / szz);
  f.raw_a = f.a;
  for (size_t i = 0; i < n; ++i) f.a = std::max(f.a, X[i] - f.b * z[i]);
  return f;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::shape, "slope needs two or more pairs");
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw Error(ErrorKind::domain, "log-log slope needs positive data");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += std::pow(std::log(x[i]) - mx, 2);
  }
  return sxy / sxx;
}

}  // namespace lagstokes
