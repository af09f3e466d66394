#include "lagstokes/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace lagstokes {

namespace {

Vec2 centroid(const RefMesh& m, int c) {
  const auto& t = m.cells[c];
  return (m.nodes[t[0]] + m.nodes[t[1]] + m.nodes[t[2]]) / 3.0;
}

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
  return 0.5 * ((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
}

}  // namespace

double RefMesh::cell_area(int c) const {
  const auto& t = cells[c];
  return signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
}

double RefMesh::total_area() const {
  double s = 0.0;
  for (int c = 0; c < num_cells(); ++c) s += cell_area(c);
  return s;
}

const Facet& RefMesh::facet(int id) const {
  if (id < 0 || id >= num_facets())
    throw Error(ErrorKind::lookup, "unknown facet id " + std::to_string(id));
  return facets[id];
}

void RefMesh::finalize() {
  const int nn = num_nodes();
  if (static_cast<int>(phase.size()) != num_cells())
    throw Error(ErrorKind::shape, "phase label count differs from cell count");

  pnode.assign(nn, {-1, -1});
  std::vector<std::array<bool, 2>> touched(nn, {false, false});
  for (int c = 0; c < num_cells(); ++c)
    for (int v : cells[c]) {
      if (v < 0 || v >= nn)
        throw Error(ErrorKind::shape, "cell " + std::to_string(c) + " references missing node");
      touched[v][phase_index(phase[c])] = true;
    }
  pnode_node.clear();
  pnode_phase.clear();
  for (int v = 0; v < nn; ++v)
    for (Phase p : {Phase::plus, Phase::minus})
      if (touched[v][phase_index(p)]) {
        pnode[v][phase_index(p)] = static_cast<int>(pnode_node.size());
        pnode_node.push_back(v);
        pnode_phase.push_back(p);
      }

  std::map<std::pair<int, int>, std::vector<int>> edge_cells;
  std::vector<std::pair<int, int>> edge_order;
  for (int c = 0; c < num_cells(); ++c)
    for (int k = 0; k < 3; ++k) {
      int a = cells[c][k], b = cells[c][(k + 1) % 3];
      auto key = std::minmax(a, b);
      auto [it, fresh] = edge_cells.try_emplace({key.first, key.second});
      if (fresh) edge_order.push_back({key.first, key.second});
      it->second.push_back(c);
    }

  facets.clear();
  interface_facets.clear();
  outer_facets.clear();
  on_interface.assign(nn, false);
  on_outer.assign(nn, false);
  bool any_plus = false, any_minus = false;
  for (const auto& key : edge_order) {
    const auto& cs = edge_cells[key];
    if (cs.size() > 2) throw Error(ErrorKind::geometry, "non-manifold edge");
    Facet f;
    f.nodes = {key.first, key.second};
    if (cs.size() == 1) {
      f.kind = FacetKind::outer;
      f.cell = cs[0];
      (phase[cs[0]] == Phase::plus ? any_plus : any_minus) = true;
      outer_facets.push_back(num_facets());
      on_outer[key.first] = on_outer[key.second] = true;
    } else if (phase[cs[0]] != phase[cs[1]]) {
      f.kind = FacetKind::interface;
      f.cell_plus = phase[cs[0]] == Phase::plus ? cs[0] : cs[1];
      f.cell_minus = phase[cs[0]] == Phase::plus ? cs[1] : cs[0];
      interface_facets.push_back(num_facets());
      on_interface[key.first] = on_interface[key.second] = true;
    } else {
      continue;
    }
    facets.push_back(f);
  }
  if (any_plus && any_minus)
    throw Error(ErrorKind::geometry, "outer boundary touches both phases");
  outer_config = any_plus ? OuterConfig::simple_plus : OuterConfig::annulus_minus;
  check();
}

void RefMesh::check() const {
  for (int c = 0; c < num_cells(); ++c)
    if (!(cell_area(c) > 0.0))
      throw Error(ErrorKind::geometry, "cell " + std::to_string(c) + " is not counter-clockwise");
  for (int id : interface_facets) {
    const Facet& f = facets[id];
    if (f.cell_plus < 0 || f.cell_minus < 0 || phase[f.cell_plus] != Phase::plus ||
        phase[f.cell_minus] != Phase::minus)
      throw Error(ErrorKind::geometry, "interface facet without one cell per phase");
  }
  const Phase outer_phase =
      outer_config == OuterConfig::simple_plus ? Phase::plus : Phase::minus;
  for (int id : outer_facets)
    if (phase[facets[id].cell] != outer_phase)
      throw Error(ErrorKind::geometry, "outer facet inconsistent with configuration");
  for (int id = 0; id < num_facets(); ++id)
    if (std::abs(facet_normal(*this, id).norm() - 1.0) > 1e-14)
      throw Error(ErrorKind::geometry, "facet normal not unit length");
}

RefMesh build_two_phase_disk(int n_radial, int n_angular, double r_inner,
                             double r_outer) {
  if (n_radial < 2) throw Error(ErrorKind::parameter, "n_radial must be >= 2");
  if (n_angular < 8) throw Error(ErrorKind::parameter, "n_angular must be >= 8");
  if (!(r_inner > 0.0) || !(r_outer > r_inner))
    throw Error(ErrorKind::parameter, "radii must satisfy 0 < r_inner < r_outer");

  int n_in = static_cast<int>(std::lround(n_radial * r_inner / r_outer));
  n_in = std::clamp(n_in, 1, n_radial - 1);
  const int n_out = n_radial - n_in;

  std::vector<double> radius(n_radial + 1, 0.0);
  for (int k = 1; k <= n_in; ++k) radius[k] = r_inner * k / n_in;
  for (int k = 1; k <= n_out; ++k)
    radius[n_in + k] = r_inner + (r_outer - r_inner) * k / n_out;

  std::vector<int> count(n_radial + 1, 1);
  for (int k = 1; k <= n_radial; ++k) {
    if (k == n_radial) {
      count[k] = n_angular;
      continue;
    }
    int m = 4 * static_cast<int>(std::lround(n_angular * radius[k] / (4.0 * r_outer)));
    count[k] = std::clamp(m, 8, n_angular);
  }

  RefMesh mesh;
  std::vector<std::vector<int>> ring(n_radial + 1);
  mesh.nodes.push_back(Vec2(0.0, 0.0));
  ring[0] = {0};
  const double two_pi = 2.0 * std::numbers::pi;
  for (int k = 1; k <= n_radial; ++k) {
    for (int j = 0; j < count[k]; ++j) {
      const double a = (j + 0.5) * two_pi / count[k];
      ring[k].push_back(mesh.num_nodes());
      mesh.nodes.push_back(Vec2(radius[k] * std::cos(a), radius[k] * std::sin(a)));
    }
  }

  auto add_cell = [&](int a, int b, int c, Phase p) {
    if (signed_area(mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]) < 0.0) std::swap(b, c);
    mesh.cells.push_back({a, b, c});
    mesh.phase.push_back(p);
  };

  for (int j = 0; j < count[1]; ++j)
    add_cell(0, ring[1][j], ring[1][(j + 1) % count[1]], Phase::plus);

  for (int k = 1; k < n_radial; ++k) {
    const Phase p = (k + 1 <= n_in) ? Phase::plus : Phase::minus;
    const int ma = count[k], mb = count[k + 1];
    auto angle = [&](int idx, int m) { return (idx + 0.5) * two_pi / m; };
    int i = 0, j = 0;
    while (i < ma || j < mb) {
      bool advance_inner;
      if (i == ma) advance_inner = false;
      else if (j == mb) advance_inner = true;
      else advance_inner = angle(i + 1, ma) <= angle(j + 1, mb);
      const int a = ring[k][i % ma], b = ring[k + 1][j % mb];
      if (advance_inner) {
        add_cell(a, ring[k][(i + 1) % ma], b, p);
        ++i;
      } else {
        add_cell(a, ring[k + 1][(j + 1) % mb], b, p);
        ++j;
      }
    }
  }
  mesh.finalize();
  return mesh;
}

RefMesh transform_mesh(const RefMesh& mesh, double angle, const Vec2& shift) {
  RefMesh out = mesh;
  Mat2 r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  for (auto& x : out.nodes) x = r * x + shift;
  out.finalize();
  return out;
}

double inscribed_polygon_area(int sides, double radius) {
  return 0.5 * sides * radius * radius * std::sin(2.0 * std::numbers::pi / sides);
}

Vec2 facet_normal(const RefMesh& mesh, int id) {
  const Facet& f = mesh.facet(id);
  const Vec2& a = mesh.nodes[f.nodes[0]];
  const Vec2& b = mesh.nodes[f.nodes[1]];
  Vec2 t = b - a;
  Vec2 n(t.y(), -t.x());
  n /= n.norm();
  const int inside = f.kind == FacetKind::interface ? f.cell_plus : f.cell;
  if (n.dot(0.5 * (a + b) - centroid(mesh, inside)) < 0.0) n = -n;
  return n;
}

Vec2 facet_midpoint(const RefMesh& mesh, int id) {
  const Facet& f = mesh.facet(id);
  return 0.5 * (mesh.nodes[f.nodes[0]] + mesh.nodes[f.nodes[1]]);
}

double facet_length(const RefMesh& mesh, int id) {
  const Facet& f = mesh.facet(id);
  return (mesh.nodes[f.nodes[1]] - mesh.nodes[f.nodes[0]]).norm();
}

Field::Field(const RefMesh& m, int components)
    : mesh(&m), ncomp(components), values(Vector::Zero(m.num_pnodes() * components)) {}

void Field::check_shape() const {
  if (!mesh || values.size() != mesh->num_pnodes() * ncomp)
    throw Error(ErrorKind::shape, "field length does not match phase-node count");
}

double Field::trace(int node, Phase side, int c) const {
  int pn = mesh->pnode[node][phase_index(side)];
  if (pn < 0)
    throw Error(ErrorKind::domain, "node " + std::to_string(node) + " has no trace from that phase");
  return at(pn, c);
}

Vector jump_at_node(const Field& field, int node) {
  Vector j(field.ncomp);
  for (int c = 0; c < field.ncomp; ++c)
    j[c] = field.trace(node, Phase::plus, c) - field.trace(node, Phase::minus, c);
  return j;
}

Vector jump(const Field& field, int id) {
  field.check_shape();
  const Facet& f = field.mesh->facet(id);
  if (f.kind != FacetKind::interface)
    throw Error(ErrorKind::domain, "jump requested on a facet that is not on the interface");
  return 0.5 * (jump_at_node(field, f.nodes[0]) + jump_at_node(field, f.nodes[1]));
}

}  // namespace lagstokes
