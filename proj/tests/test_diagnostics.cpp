#include <cmath>
#include <random>

#include "doctest.h"
#include "lagstokes/diagnostics.hpp"

using namespace lagstokes;

namespace {

const MaterialParams kParams{1.0, 0.8, 0.1, 0.05};

Vector strain_field(const FESpace& V) {
  return project_divergence_free(V, kParams, V.interpolate([](const Vec2& x) {
    return Vec2(x.x() + 0.3 * x.y() * x.y(), -x.y());
  }));
}

}  // namespace

TEST_CASE("decay fit") {
  std::vector<double> t, y, c;
  for (int i = 0; i < 50; ++i) {
    t.push_back(0.2 * i);
    y.push_back(3.0 * std::exp(-0.5 * t.back()));
    c.push_back(2.0);
  }
  const DecayFit f = decay_fit(t, y);
  CHECK(std::abs(f.rate - 0.5) <= 1e-10);
  CHECK(f.half_width <= 1e-10);
  CHECK(f.used == 45);
  CHECK(std::abs(decay_fit(t, c).rate) <= 1e-12);

  y[10] = 0.0;
  CHECK_THROWS_AS(decay_fit(t, y), Error);
  std::vector<double> ts(t.begin(), t.begin() + 5), cs(c.begin(), c.begin() + 5);
  CHECK_THROWS_AS(decay_fit(ts, cs), Error);
}

TEST_CASE("energy budget") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  const FESpace V(m);
  const RigidBasis rb = build_rigid_basis(V, kParams);

  const StokesStepper st(V, kParams, 0.1);
  for (const auto& p : rb.p) {
    const auto rep = energy_budget(V, kParams, run_linear(st, p, 10));
    for (double d : rep.dissipation) CHECK(std::abs(d) <= 1e-14);
  }

  const Vector u0 = project_out_rigid(strain_field(V), rb, mass_matrix(V, kParams));
  std::vector<double> cumulative;
  for (double dt : {0.1, 0.05, 0.025}) {
    const StokesStepper s(V, kParams, dt);
    const auto rep = energy_budget(V, kParams, run_linear(s, u0, static_cast<int>(std::lround(1.0 / dt))));
    CHECK(rep.energy_monotone);
    CHECK(rep.time.size() == rep.energy.size());
    CHECK(rep.energy.size() == rep.dissipation.size());
    for (size_t i = 1; i < rep.energy.size(); ++i) CHECK(rep.energy[i] <= rep.energy[i - 1]);
    for (double r : rep.energy_residual) CHECK(r <= 1e-14);
    cumulative.push_back(std::abs(rep.cumulative_energy_residual));
  }
  for (size_t i = 1; i < cumulative.size(); ++i) {
    const double ratio = cumulative[i - 1] / cumulative[i];
    CHECK(ratio > 1.6);
    CHECK(ratio < 2.4);
  }
}

TEST_CASE("momentum and barycenter") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  const FESpace V(m);
  const StokesStepper st(V, kParams, 0.05);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n;
  Vector u(V.nv());
  for (int i = 0; i < u.size(); ++i) u[i] = n(rng);
  u = project_divergence_free(V, kParams, u);
  const int steps = 40;
  const auto rep = momentum_and_barycenter(V, kParams, run_linear(st, u, steps));
  CHECK(rep.max_momentum_drift <= st.tol() * steps * std::sqrt(u.dot(st.M() * u)));
  CHECK(rep.barycenter_residual <= 1e-12);

  const auto still = momentum_and_barycenter(V, kParams, run_linear(st, Vector::Zero(V.nv()), 10));
  for (const auto& b : still.barycenter) {
    CHECK(b.x() == still.barycenter.front().x());
    CHECK(b.y() == still.barycenter.front().y());
  }
}

TEST_CASE("discrete spectrum and decay coherence") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  const FESpace V(m);
  const SpectrumReport sp = discrete_spectrum(V, kParams, 8);
  CHECK(sp.converged);
  CHECK(sp.kernel_dim == 3);
  CHECK(sp.max_principal_angle <= 1e-8);
  CHECK(sp.smallest_nonzero_real > 0.0);
  for (size_t i = 1; i < sp.eigenvalues.size(); ++i)
    CHECK(sp.eigenvalues[i].real() >= sp.eigenvalues[i - 1].real());
  for (size_t i = sp.kernel_dim; i < sp.eigenvalues.size(); ++i) CHECK(sp.eigenvalues[i].real() > 0.0);
  CHECK_THROWS_AS(discrete_spectrum(V, kParams, 5), Error);

  const double dt = 0.05;
  const StokesStepper st(V, kParams, dt);
  const RigidBasis rb = build_rigid_basis(V, st.M());
  const Vector u0 = project_out_rigid(strain_field(V), rb, st.M());
  const auto rep = energy_budget(V, kParams, run_linear(st, u0, 200));
  const DecayFit f = decay_fit(rep.time, rep.energy);
  const double eps0 = 0.5 * f.rate;
  CHECK(eps0 > 0.0);
  CHECK(std::abs(eps0 / sp.smallest_nonzero_real - 1.0) <= 0.2);
}

TEST_CASE("bootstrap radius") {
  CHECK(bootstrap_rb(1.0).r == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(bootstrap_rb(3.0).r == doctest::Approx((std::sqrt(2.0) - 1.0) / 3.0).epsilon(1e-15));
  for (int i = 0; i <= 60; ++i) {
    const double b = std::pow(10.0, -3.0 + 0.1 * i);
    CHECK(std::abs(bootstrap_rb(b).fprime) <= 1e-12);
  }
  CHECK_THROWS_AS(bootstrap_rb(0.0), Error);
  CHECK_THROWS_AS(bootstrap_rb(-1.0), Error);
}

TEST_CASE("bootstrap verdicts") {
  using S = BootstrapVerdict::Status;
  const double b = 2.0;
  const double a = 0.9 * bootstrap_a_limit(b);
  std::vector<double> X;
  for (int i = 0; i <= 50; ++i) X.push_back(bootstrap_minimal_root(a * (0.2 + 0.016 * i), b));
  const auto v = bootstrap_check(a, b, X);
  CHECK(v.status == S::holds);
  CHECK(v.max_ratio <= 1.0);

  CHECK(bootstrap_check(1.01 * bootstrap_a_limit(b), b, X).status == S::hypothesis_failed);
  std::vector<double> big = X;
  big[0] = 1.01 * bootstrap_rb(b).r;
  const auto vb = bootstrap_check(a, b, big);
  CHECK(vb.status == S::hypothesis_failed);
  CHECK(vb.first_violation == 0);

  std::vector<double> jump = X;
  jump[20] += 0.05;
  CHECK(bootstrap_check(a, b, jump, 0.01).status == S::discontinuous);

  std::vector<double> bad = X;
  bad[30] = bootstrap_rb(b).r;  // between the two positive roots
  const auto vr = bootstrap_check(a, b, bad);
  CHECK(vr.status == S::recursion_violated);
  CHECK(vr.first_violation == 30);
}

TEST_CASE("bootstrap minimal root stays below 2a") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lb(-3.0, 3.0), fa(0.01, 0.999);
  for (int i = 0; i < 100; ++i) {
    const double b = std::pow(10.0, lb(rng));
    const double a = fa(rng) * bootstrap_a_limit(b);
    const double x0 = bootstrap_minimal_root(a, b);
    CHECK(std::abs(a + b * x0 * x0 + b * x0 * x0 * x0 - x0) <= 1e-12 * std::max(1.0, x0));
    CHECK(x0 <= 2.0 * a);
  }
}
