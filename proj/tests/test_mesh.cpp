#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lagstokes/fe.hpp"
#include "lagstokes/mesh.hpp"

using namespace lagstokes;

namespace {

int facet_at_angle(const RefMesh& m, const std::vector<int>& ids, double angle) {
  for (int id : ids) {
    const Vec2 c = facet_midpoint(m, id);
    if (std::abs(std::remainder(std::atan2(c.y(), c.x()) - angle, 2 * std::numbers::pi)) < 1e-12)
      return id;
  }
  return -1;
}

}  // namespace

TEST_CASE("interface facets sit on the inner circle") {
  const RefMesh m = build_two_phase_disk(2, 8, 0.5, 1.0);
  REQUIRE(!m.interface_facets.empty());
  for (int id : m.interface_facets)
    for (int n : m.facets[id].nodes) CHECK(std::abs(m.nodes[n].norm() - 0.5) < 1e-14);
  for (int id : m.outer_facets)
    for (int n : m.facets[id].nodes) CHECK(std::abs(m.nodes[n].norm() - 1.0) < 1e-14);
  CHECK(m.outer_config == OuterConfig::annulus_minus);
  CHECK(m.wall_facets.empty());
}

TEST_CASE("area equals the inscribed polygon and converges at second order") {
  double prev_err = 0.0;
  for (int level = 0; level < 3; ++level) {
    const int nr = 4 << level, na = 16 << level;
    const RefMesh m = build_two_phase_disk(nr, na, 0.5, 1.0);
    const double area = m.total_area();
    CHECK(std::abs(area - inscribed_polygon_area(na, 1.0)) < 1e-13);
    const double err = std::numbers::pi - area;
    CHECK(err > 0.0);
    if (level > 0) {
      CHECK(err < prev_err);
      CHECK(std::log2(prev_err / err) == doctest::Approx(2.0).epsilon(0.02));
    }
    prev_err = err;
  }
}

TEST_CASE("invalid construction parameters") {
  CHECK_THROWS_AS(build_two_phase_disk(1, 8, 0.5, 1.0), Error);
  CHECK_THROWS_AS(build_two_phase_disk(2, 7, 0.5, 1.0), Error);
  CHECK_THROWS_AS(build_two_phase_disk(2, 8, 1.0, 1.0), Error);
  CHECK_THROWS_AS(build_two_phase_disk(2, 8, 0.0, 1.0), Error);
  try {
    build_two_phase_disk(1, 8, 0.5, 1.0);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parameter);
  }
}

TEST_CASE("facet normals") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  const int g0 = facet_at_angle(m, m.interface_facets, 0.0);
  REQUIRE(g0 >= 0);
  CHECK((facet_normal(m, g0) - Vec2(1.0, 0.0)).norm() < 1e-14);
  const int o90 = facet_at_angle(m, m.outer_facets, std::numbers::pi / 2);
  REQUIRE(o90 >= 0);
  CHECK((facet_normal(m, o90) - Vec2(0.0, 1.0)).norm() < 1e-14);
  for (int id = 0; id < m.num_facets(); ++id) {
    CHECK(std::abs(facet_normal(m, id).norm() - 1.0) <= 1e-14);
    // interface normals point away from the plus cell, i.e. outward radially here
    CHECK(facet_normal(m, id).dot(facet_midpoint(m, id)) > 0.0);
  }
  CHECK_THROWS_AS(facet_normal(m, m.num_facets()), Error);
  CHECK_THROWS_AS(facet_normal(m, -1), Error);
}

TEST_CASE("normals are odd under reflection through the origin") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  const RefMesh r = transform_mesh(m, std::numbers::pi, Vec2::Zero());
  REQUIRE(r.num_facets() == m.num_facets());
  for (int id = 0; id < m.num_facets(); ++id)
    CHECK((facet_normal(r, id) + facet_normal(m, id)).norm() < 1e-14);
}

TEST_CASE("every interface facet has one cell per phase") {
  const RefMesh m = build_two_phase_disk(6, 24, 0.4, 1.0);
  for (int id : m.interface_facets) {
    const Facet& f = m.facets[id];
    CHECK(m.phase[f.cell_plus] == Phase::plus);
    CHECK(m.phase[f.cell_minus] == Phase::minus);
  }
  for (int id : m.outer_facets) CHECK(m.phase[m.facets[id].cell] == Phase::minus);
  int iface_nodes = 0;
  for (bool b : m.on_interface) iface_nodes += b;
  CHECK(m.num_pnodes() == m.num_nodes() + iface_nodes);
}

TEST_CASE("jump conventions") {
  const RefMesh m = build_two_phase_disk(4, 16, 0.5, 1.0);
  Field cont(m, 2), ind(m, 1), pc(m, 1);
  CHECK(cont.values.size() == m.num_pnodes() * 2);
  for (int pn = 0; pn < m.num_pnodes(); ++pn) {
    const Vec2 x = m.nodes[m.pnode_node[pn]];
    cont.at(pn, 0) = std::sin(3 * x.x()) + x.y();
    cont.at(pn, 1) = std::exp(x.x() * x.y());
    const bool plus = m.pnode_phase[pn] == Phase::plus;
    ind.at(pn, 0) = plus ? 1.0 : 0.0;
    pc.at(pn, 0) = plus ? 2.5 : -0.75;
  }
  for (int id : m.interface_facets) {
    const Vector jc = jump(cont, id);
    CHECK(jc[0] == 0.0);
    CHECK(jc[1] == 0.0);
    CHECK(jump(ind, id)[0] == 1.0);
    CHECK(jump(pc, id)[0] == doctest::Approx(3.25).epsilon(1e-15));
  }
  CHECK_THROWS_AS(jump(ind, m.outer_facets[0]), Error);
}

TEST_CASE("quadrature integrates monomials up to degree 6 exactly") {
  RefMesh m;
  m.nodes = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  m.cells = {{0, 1, 2}};
  m.phase = {Phase::plus};
  m.finalize();
  const FESpace V(m);
  auto fact = [](int n) {
    double f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  double wsum = 0.0;
  for (int q = 0; q < kQuad; ++q) wsum += triangle_rule().weight[q];
  CHECK(std::abs(wsum - 1.0) < 1e-14);
  for (int a = 0; a <= 6; ++a)
    for (int b = 0; a + b <= 6; ++b) {
      double s = 0.0;
      for (int q = 0; q < kQuad; ++q)
        s += V.cell(0).w[q] * std::pow(V.cell(0).x[q].x(), a) * std::pow(V.cell(0).x[q].y(), b);
      CHECK(s == doctest::Approx(fact(a) * fact(b) / fact(a + b + 2)).epsilon(1e-13));
    }
}
