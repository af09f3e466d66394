#include <cmath>
#include <random>

#include "doctest.h"
#include "lagstokes/diagnostics.hpp"
#include "lagstokes/nonlinear.hpp"
#include "lagstokes/transmission.hpp"

using namespace lagstokes;

namespace {

const MaterialParams kParams{1.0, 0.8, 0.1, 0.05};

struct Droplet {
  RefMesh mesh = build_two_phase_disk(4, 16, 0.5, 1.0);
  FESpace V{mesh};
  SpMat M = mass_matrix(V, kParams);
  RigidBasis rb = build_rigid_basis(V, M);
  Vector base() const {
    const Vector u = project_divergence_free(V, kParams, V.interpolate([](const Vec2& x) {
      return Vec2(x.x() + 0.3 * x.y() * x.y(), -x.y());
    }));
    return project_out_rigid(u, rb, M);
  }
};

const Droplet& droplet() {
  static const Droplet d;
  return d;
}

}  // namespace

TEST_CASE("exponent arithmetic") {
  CHECK(sigma_pq(2.0, 4.0, 2) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(sigma_pq(4.0, 8.0, 2) == 0.0);
  CHECK(sigma_exponents(3.0, 4.0, 2).sigma_tilde == doctest::Approx(0.25).epsilon(1e-15));

  struct Row { double p, q; int N; double sigma, s, st; };
  const Row rows[] = {
      {3.0, 4.0, 2, 1.0 / 4, 13.0 / 24, 1.0 / 4},
      {4.0, 8.0, 2, 0.0, 15.0 / 32, 1.0 / 4},
      {5.0 / 2, 3.0, 2, 1.0 / 6, 9.0 / 20, 1.0 / 6},
      {3.0, 5.0 / 2, 2, 1.0 / 10, 5.0 / 12, 1.0 / 10},
      {6.0, 3.0, 2, 0.0, 4.0 / 9, 1.0 / 6},
      {10.0, 20.0, 2, 0.0, 99.0 / 200, 1.0 / 10},
      {11.0 / 10, 11.0 / 5, 2, 1.0 / 22, 3.0 / 44, 1.0 / 22},
      {6.0 / 5, 5.0 / 2, 2, 1.0 / 10, 2.0 / 15, 1.0 / 10},
      {3.0 / 2, 21.0 / 10, 2, 1.0 / 42, 5.0 / 28, 1.0 / 42},
      {9.0 / 5, 41.0 / 20, 2, 1.0 / 82, 337.0 / 1476, 1.0 / 82},
      {3.0, 4.0, 3, 1.0 / 8, 7.0 / 16, 1.0 / 8},
      {4.0, 5.0, 3, 1.0 / 5, 21.0 / 40, 1.0 / 5},
      {11.0 / 5, 10.0, 3, 7.0 / 20, 267.0 / 440, 7.0 / 20},
      {6.0 / 5, 7.0 / 2, 3, 1.0 / 14, 5.0 / 42, 1.0 / 14},
      {3.0 / 2, 16.0 / 5, 3, 1.0 / 32, 35.0 / 192, 1.0 / 32},
      {5.0, 6.0, 3, 0.0, 9.0 / 20, 1.0 / 5},
      {8.0, 4.0, 2, 0.0, 15.0 / 32, 1.0 / 8},
      {21.0 / 10, 21.0 / 10, 2, 1.0 / 42, 503.0 / 1764, 1.0 / 42},
      {5.0 / 4, 9.0 / 4, 2, 1.0 / 18, 23.0 / 180, 1.0 / 18},
      {12.0, 30.0, 3, 0.0, 119.0 / 240, 1.0 / 12},
  };
  for (const Row& r : rows) {
    const ExponentSet e = sigma_exponents(r.p, r.q, r.N);
    CHECK(e.sigma == doctest::Approx(r.sigma).epsilon(1e-13));
    CHECK(e.s == doctest::Approx(r.s).epsilon(1e-13));
    CHECK(e.sigma_tilde == doctest::Approx(r.st).epsilon(1e-13));
    CHECK(e.sigma_tilde > 0.0);
  }
  CHECK_THROWS_AS(sigma_exponents(2.0, 4.0, 2), Error);
  CHECK_THROWS_AS(sigma_exponents(3.0, 2.0, 2), Error);
  CHECK_THROWS_AS(sigma_exponents(1.5, 4.0, 2), Error);  // 1/p + N/q = 7/6
}

TEST_CASE("local horizon selection") {
  ExponentSet e;
  e.sigma = 0.25;
  e.s = 0.5;
  CHECK(select_local_T(1.0, e, 2.0, 1.0) == doctest::Approx(std::pow(2.0, -4.0 / 3.0)).epsilon(1e-14));
  const ExponentSet e3 = sigma_exponents(3.0, 4.0, 2);
  double prev = 2.0;
  for (double L : {0.1, 1.0, 10.0, 100.0, 1e4}) {
    const double T = select_local_T(L, e3, 3.0, 1.0);
    CHECK(T <= 1.0);
    CHECK(T < prev);
    prev = T;
  }
  for (double C : {0.5, 1.0, 2.0, 4.0})
    CHECK(select_local_T(3.0, e3, 3.0, 2.0 * C) <= select_local_T(3.0, e3, 3.0, C));
  CHECK_THROWS_AS(select_local_T(0.0, e3, 3.0, 1.0), Error);
}

TEST_CASE("iteration config validation") {
  IterationConfig c;
  CHECK_NOTHROW(c.validate());
  c.p = 2.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = IterationConfig{};
  c.gamma0 = 0.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = IterationConfig{};
  c.kappa = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("nonlinear terms") {
  const Droplet& d = droplet();
  const QuadratureSites sites(d.V);
  const int ns = sites.size();
  CofactorField I;
  I.A.assign(ns, Mat2::Identity());

  const Vector zu = Vector::Zero(d.V.nv()), zq = Vector::Zero(d.V.np());
  const auto z = compute_nonlinear_terms(d.V, kParams, sites, zu, zq, I);
  CHECK(z.momentum.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(z.divergence.lpNorm<Eigen::Infinity>() == 0.0);

  // A = I: every term carries a factor I - A.
  const Vector u = d.base();
  Vector q(d.V.np());
  for (int i = 0; i < q.size(); ++i) q[i] = std::sin(1.0 + i);
  const auto t0 = compute_nonlinear_terms(d.V, kParams, sites, u, q, I);
  CHECK(t0.momentum.lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(t0.divergence.lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(t0.g.values.lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(t0.R.values.lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(t0.h.values.lpNorm<Eigen::Infinity>() <= 1e-15);
  CHECK(t0.k.values.lpNorm<Eigen::Infinity>() <= 1e-15);

  // Constant gradient and constant A: closed-form tensors per phase.
  Mat2 G, Ac;
  G << 0.3, -0.2, 0.5, 0.1;
  Ac << 0.9, 0.05, -0.1, 1.08;
  CofactorField A;
  A.A.assign(ns, Ac);
  A.kappa = 0.2;
  const Vector ul = d.V.interpolate([&](const Vec2& x) { return Vec2(G * x); });
  const double qp = 0.7, qm = -0.4;
  const Vector qc = d.V.pressure_interpolate([&](const Vec2&, Phase p) { return p == Phase::plus ? qp : qm; });
  const auto t1 = compute_nonlinear_terms(d.V, kParams, sites, ul, qc, A);
  const Mat2 Id = Mat2::Identity();
  auto W = [&](Phase p) {
    const double mu = kParams.mu(p), qq = p == Phase::plus ? qp : qm;
    const Mat2 Du = G * Ac.transpose() + Ac * G.transpose();
    return Mat2(mu * (G + G.transpose()) - qq * Id - (mu * Du - qq * Id) * Ac);
  };
  const double gexact = (G * (Id - Ac.transpose())).trace();
  for (int pn = 0; pn < d.mesh.num_pnodes(); ++pn) CHECK(t1.g.at(pn, 0) == doctest::Approx(gexact).epsilon(1e-12));
  double area[2] = {0.0, 0.0};
  for (int c = 0; c < d.mesh.num_cells(); ++c) area[phase_index(d.mesh.phase[c])] += d.mesh.cell_area(c);
  Mat2 B;
  B << 1.0, 2.0, -0.5, 0.25;
  const Vector vb = d.V.interpolate([&](const Vec2& x) { return Vec2(B * x); });
  const double expect = area[phase_index(Phase::plus)] * (W(Phase::plus).cwiseProduct(B)).sum() +
                        area[phase_index(Phase::minus)] * (W(Phase::minus).cwiseProduct(B)).sum();
  CHECK(t1.momentum.dot(vb) == doctest::Approx(expect).epsilon(1e-12));
  const Vector ones = Vector::Ones(d.V.np());
  CHECK(t1.divergence.dot(ones) == doctest::Approx(gexact * d.mesh.total_area()).epsilon(1e-12));
  // Interface traction on one facet pair equals W n per side at a node touched by two facets.
  for (int node = 0; node < d.mesh.num_nodes(); ++node) {
    if (!d.mesh.on_interface[node]) continue;
    Vec2 nsum = Vec2::Zero();
    double lsum = 0.0;
    for (int f : d.mesh.interface_facets)
      for (int a : d.mesh.facet(f).nodes)
        if (a == node) {
          nsum += facet_length(d.mesh, f) * facet_normal(d.mesh, f);
          lsum += facet_length(d.mesh, f);
        }
    const Vec2 n = nsum / lsum;
    for (Phase p : {Phase::plus, Phase::minus}) {
      const int pn = d.mesh.pnode[node][phase_index(p)];
      const Vec2 h = W(p) * n;
      CHECK(t1.h.at(pn, 0) == doctest::Approx(h.x()).epsilon(1e-12));
      CHECK(t1.h.at(pn, 1) == doctest::Approx(h.y()).epsilon(1e-12));
    }
  }
  // Constant velocity: R = (I - A^T) u exactly.
  const Vec2 c0(0.4, -1.1);
  const Vector uc = d.V.interpolate([&](const Vec2&) { return c0; });
  const auto t2 = compute_nonlinear_terms(d.V, kParams, sites, uc, zq, A);
  const Vec2 Rex = (Id - Ac.transpose()) * c0;
  for (int pn = 0; pn < d.mesh.num_pnodes(); ++pn) {
    CHECK(t2.R.at(pn, 0) == doctest::Approx(Rex.x()).epsilon(1e-12));
    CHECK(t2.R.at(pn, 1) == doctest::Approx(Rex.y()).epsilon(1e-12));
  }
  CHECK(t2.momentum.lpNorm<Eigen::Infinity>() <= 1e-15);

  CofactorField bad = A;
  bad.kappa = 1.5;
  try {
    compute_nonlinear_terms(d.V, kParams, sites, ul, qc, bad);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::geometry);
  }
}

TEST_CASE("reflection extension") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  TimeSeries zero{0.1, std::vector<double>(20, 0.0)};
  for (double v : extension_reflect(zero, 1.0).v) CHECK(v == 0.0);

  TimeSeries h{0.1, {}};
  for (int i = 0; i < 30; ++i) h.v.push_back(U(rng));
  const TimeSeries e = extension_reflect(h, 2.0);
  REQUIRE(e.v.size() == 40);
  for (int n = 20; n < 40; ++n) CHECK(e.v[n] == h.v[39 - n]);
  for (int n = 0; n < 20; ++n) CHECK(e.v[n] == h.v[n]);

  for (int trial = 0; trial < 200; ++trial) {
    TimeSeries s{0.05, {}};
    const int len = 20 + trial % 40;
    for (int i = 0; i < len; ++i) s.v.push_back(U(rng));
    const double t = s.dt * (1 + static_cast<int>(rng() % len));
    for (double p : {1.5, 2.0, 3.0})
      for (double g : {0.0, 0.5, 1.0})
        CHECK(lp_norm(extension_reflect(s, t), p, -g) <= 2.0 * lp_norm(s, p));
  }
  CHECK_THROWS_AS(extension_reflect(h, 0.0), Error);
  CHECK_THROWS_AS(extension_reflect(h, 3.5), Error);
}

TEST_CASE("cutoff extension") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  CHECK(smooth_cutoff(-0.3) == 1.0);
  CHECK(smooth_cutoff(1.2) == 0.0);
  CHECK(smooth_cutoff(0.5) == doctest::Approx(0.5));

  TimeSeries h{0.05, {}};
  for (int i = 0; i < 60; ++i) h.v.push_back(U(rng));
  for (double T : {0.5, 2.0, 3.0}) {
    const TimeSeries c = cutoff_extension(h, T, 0.5);
    const int m = static_cast<int>(std::lround(T / h.dt));
    for (int n = 0; n < m; ++n) CHECK(c.v[n] == h.v[n]);
    for (size_t n = 0; n < c.v.size(); ++n)
      if (h.dt * (n + 0.5) >= std::min(2.0 * T, T + 1.0)) CHECK(c.v[n] == 0.0);
  }
  for (int trial = 0; trial < 200; ++trial) {
    TimeSeries s{0.05, {}};
    const int len = 10 + trial % 70;
    for (int i = 0; i < len; ++i) s.v.push_back(U(rng));
    const int m = 1 + static_cast<int>(rng() % len);
    const double T = s.dt * m;
    TimeSeries head{s.dt, std::vector<double>(s.v.begin(), s.v.begin() + m)};
    for (double p : {1.5, 2.0, 3.0})
      for (double g : {0.0, 0.5, 1.0}) {
        const double lhs = lp_norm(cutoff_extension(s, T, g), p, g);
        CHECK(lhs <= std::pow(1.0 + std::exp(2.0 * p * g), 1.0 / p) * lp_norm(head, p, g) * (1.0 + 1e-12));
      }
  }
}

TEST_CASE("trajectory norm") {
  const Droplet& d = droplet();
  const TrajectoryNorm nrm(d.V, 3.0, true);
  const Vector lin = d.V.interpolate([](const Vec2& x) { return Vec2(2.0 * x.x() - x.y(), 0.5 * x.y()); });
  CHECK(nrm.hessian(lin) <= 1e-12);
  CHECK(nrm.grad(lin) == doctest::Approx(std::sqrt(5.25 * d.mesh.total_area())).epsilon(1e-12));
  std::vector<StokesState> s(3, zero_state(d.V));
  CHECK(nrm(s, 0.1) == 0.0);
  s[2].u = lin;
  CHECK(nrm(s, 0.1) > nrm.h1(lin));
}

TEST_CASE("Picard local solve") {
  const Droplet& d = droplet();
  IterationConfig cfg;
  const auto z = picard_solve_local(d.V, Vector::Zero(d.V.nv()), cfg, kParams);
  CHECK(z.iterations.size() == 1);
  for (const auto& s : z.traj.states) {
    CHECK(s.u.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s.q.lpNorm<Eigen::Infinity>() == 0.0);
  }

  const Vector b = d.base();
  double prev_factor = 1.0;
  for (double eps : {0.2, 0.1, 0.05}) {
    const auto s = picard_solve_local(d.V, eps * b, cfg, kParams);
    double fmax = 0.0;
    for (const auto& r : s.iterations) fmax = std::max(fmax, r.factor);
    CHECK(fmax < 0.9);
    CHECK(fmax < prev_factor);
    prev_factor = fmax;
    CHECK(s.residual <= 10.0 * cfg.linear_tol);
    CHECK(s.horizon > cfg.dt);
    CHECK(s.in_ball);
    const auto rep = conservation_report(d.V, kParams, s.traj);
    CHECK(rep.energy_monotone);
    for (double r : rep.energy_residual) CHECK(r <= 1e-12);
  }

  const auto a1 = picard_solve_local(d.V, 0.1 * b, cfg, kParams);
  const auto a2 = picard_solve_local(d.V, 0.1 * b, cfg, kParams);
  REQUIRE(a1.traj.states.size() == a2.traj.states.size());
  for (size_t n = 0; n < a1.traj.states.size(); ++n) {
    CHECK((a1.traj.states[n].u - a2.traj.states[n].u).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a1.traj.states[n].q - a2.traj.states[n].q).lpNorm<Eigen::Infinity>() == 0.0);
  }

  // Constraint of the deformed configuration holds weakly after the map is applied.
  const PicardSolver solver(d.V, kParams, cfg);
  LagrangianMap m0(d.V);
  m0.J = m0.sites.jacobians(d.V, a1.traj.states[0].u);
  CHECK(solver.residual(a1.traj.states, m0) <= 10.0 * cfg.linear_tol);
}

TEST_CASE("Picard non-contraction") {
  const Droplet& d = droplet();
  IterationConfig cfg;
  cfg.max_iter = 4;
  cfg.horizon_floor = 0.4;
  CHECK_THROWS_AS(picard_solve_local(d.V, 6.0 * d.base(), cfg, kParams), Error);
}

TEST_CASE("compatibility of divergence data") {
  const Droplet& d = droplet();
  IterationConfig cfg;
  const auto s = picard_solve_local(d.V, 0.1 * d.base(), cfg, kParams);
  const QuadratureSites sites(d.V);
  DisplacementGradient C = zero_displacement(sites.size());
  auto J0 = sites.jacobians(d.V, s.traj.states[0].u);
  for (size_t n = 1; n < s.traj.states.size(); ++n) {
    const auto J1 = sites.jacobians(d.V, s.traj.states[n].u);
    C = accumulate_gradient(C, transpose_all(J0), transpose_all(J1), cfg.dt);
    J0 = J1;
  }
  const CofactorField A = neumann_cofactor(C);
  CHECK(compatibility_defect(d.V, sites, s.traj.states.back().u, A) <= 1e-2);
}

TEST_CASE("stability probe") {
  const Droplet& d = droplet();
  IterationConfig cfg;
  const Vector b = 0.1 * d.base();
  const auto same = stability_probe(d.V, b, b, cfg, kParams);
  CHECK(same.distance == 0.0);

  const Vector dir = project_out_rigid(project_divergence_free(d.V, kParams, d.V.interpolate([](const Vec2& x) {
                                         return Vec2(x.y() * x.y(), x.x());
                                       })), d.rb, d.M);
  std::vector<double> ratios;
  for (double a : {1e-4, 1e-6, 1e-8}) {
    const auto r = stability_probe(d.V, b, b + a * dir, cfg, kParams);
    CHECK(r.bounded);
    ratios.push_back(r.ratio);
  }
  for (double r : ratios) CHECK(std::abs(r / ratios[1] - 1.0) <= 1e-3);
}

TEST_CASE("global continuation") {
  const Droplet& d = droplet();
  IterationConfig cfg;
  cfg.T = 4.0;
  const auto z = global_continue(d.V, Vector::Zero(d.V.nv()), cfg, kParams);
  CHECK(z.completed);
  for (const auto& s : z.traj.states) CHECK(s.u.lpNorm<Eigen::Infinity>() == 0.0);

  const auto g = global_continue(d.V, 0.05 * d.base(), cfg, kParams);
  CHECK(g.completed);
  CHECK(g.decay_rate > 0.0);
  for (size_t i = 1; i < g.X.size(); ++i) CHECK(g.X[i] >= g.X[i - 1]);
  for (double x : g.X) CHECK(x <= g.bound);
  const auto rep = conservation_report(d.V, kParams, g.traj);
  for (const auto& m : rep.lagrangian_momentum)
    for (double v : m) CHECK(std::abs(v) <= 1e-4 * g.v0_norm);

  // A rigid component in the data is projected out before continuation.
  const auto gr = global_continue(d.V, 0.05 * d.base() + 0.01 * d.rb.p[0], cfg, kParams);
  CHECK(std::abs(d.rb.p[0].dot(d.M * gr.traj.states[0].u)) <= 1e-12);

  IterationConfig bad = cfg;
  bad.rho0_plus = 2.0;
  CHECK_THROWS_AS(global_continue(d.V, 0.05 * d.base(), bad, kParams), Error);
}

TEST_CASE("recursion fit") {
  std::vector<double> X;
  for (int i = 0; i < 10; ++i) {
    const double x = 0.01 * (1.0 - std::exp(-0.5 * i));
    X.push_back(x);
  }
  const RecursionFit f = fit_x_recursion(X);
  CHECK(f.a >= 0.0);
  CHECK(f.b >= 0.0);
  for (double x : X) CHECK(x <= f.a + f.b * (x * x + x * x * x) + 1e-15);
  CHECK(loglog_slope({1.0, 2.0, 4.0}, {3.0, 12.0, 48.0}) == doctest::Approx(2.0).epsilon(1e-12));
}
