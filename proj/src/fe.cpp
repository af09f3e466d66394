#include "lagstokes/fe.hpp"

#include <cmath>

namespace lagstokes {

void MaterialParams::validate() const {
  if (!(eta_plus > 0.0) || !(eta_minus > 0.0))
    throw Error(ErrorKind::validation, "material: eta_plus and eta_minus must be > 0 (eta±>0)");
  if (!(mu_plus > 0.0) || !(mu_minus > 0.0))
    throw Error(ErrorKind::validation, "material: mu_plus and mu_minus must be > 0 (mu±>0)");
}

const TriangleRule& triangle_rule() {
  static const TriangleRule rule = [] {
    TriangleRule r{};
    int k = 0;
    auto orbit3 = [&](double a, double w) {
      const double b = 1.0 - 2.0 * a;
      for (auto p : {std::array<double, 3>{b, a, a}, {a, b, a}, {a, a, b}}) {
        r.bary[k] = p;
        r.weight[k++] = w;
      }
    };
    orbit3(0.063089014491502, 0.050844906370207);
    orbit3(0.249286745170910, 0.116786275726379);
    const double a = 0.053145049844817, b = 0.310352451033784, c = 1.0 - a - b;
    for (auto p : {std::array<double, 3>{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b},
                   {c, b, a}}) {
      r.bary[k] = p;
      r.weight[k++] = 0.082851075618374;
    }
    return r;
  }();
  return rule;
}

const LineRule& line_rule() {
  static const LineRule rule = [] {
    LineRule r{};
    const double s = 0.5 * std::sqrt(0.6);
    r.point = {0.5 - s, 0.5, 0.5 + s};
    r.weight = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    return r;
  }();
  return rule;
}

FESpace::FESpace(const RefMesh& mesh) : mesh_(&mesh) {
  const auto& rule = triangle_rule();
  cells_.resize(mesh.num_cells());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    CellCache& cc = cells_[c];
    const auto& t = mesh.cells[c];
    const Vec2 &p0 = mesh.nodes[t[0]], &p1 = mesh.nodes[t[1]], &p2 = mesh.nodes[t[2]];
    cc.area = mesh.cell_area(c);
    const double two_a = 2.0 * cc.area;
    cc.grad_lambda[0] = Vec2(p1.y() - p2.y(), p2.x() - p1.x()) / two_a;
    cc.grad_lambda[1] = Vec2(p2.y() - p0.y(), p0.x() - p2.x()) / two_a;
    cc.grad_lambda[2] = Vec2(p0.y() - p1.y(), p1.x() - p0.x()) / two_a;
    for (int q = 0; q < kQuad; ++q) {
      const auto& b = rule.bary[q];
      cc.w[q] = rule.weight[q] * cc.area;
      cc.x[q] = b[0] * p0 + b[1] * p1 + b[2] * p2;
    }
  }
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int q = 0; q < kQuad; ++q)
      fill_point(c, rule.bary[q], cells_[c].shape[q], cells_[c].grad[q]);

  const auto& line = line_rule();
  facet_pts_.resize(mesh.num_facets());
  for (int id = 0; id < mesh.num_facets(); ++id) {
    const Facet& f = mesh.facets[id];
    const double len = facet_length(mesh, id);
    const std::array<int, 2> sides =
        f.kind == FacetKind::interface ? std::array<int, 2>{f.cell_plus, f.cell_minus}
                                       : std::array<int, 2>{f.cell, -1};
    for (int s = 0; s < 2; ++s) {
      const int c = sides[s];
      if (c < 0) continue;
      const auto& t = mesh.cells[c];
      for (int g = 0; g < kLine; ++g) {
        std::array<double, 3> b{0.0, 0.0, 0.0};
        for (int k = 0; k < 3; ++k) {
          if (t[k] == f.nodes[0]) b[k] = 1.0 - line.point[g];
          if (t[k] == f.nodes[1]) b[k] = line.point[g];
        }
        FacetPoint& fp = facet_pts_[id][s][g];
        fp.cell = c;
        fp.w = line.weight[g] * len;
        fp.x = (1.0 - line.point[g]) * mesh.nodes[f.nodes[0]] +
               line.point[g] * mesh.nodes[f.nodes[1]];
        fill_point(c, b, fp.shape, fp.grad);
      }
    }
  }
}

void FESpace::fill_point(int cell, const std::array<double, 3>& b, std::array<double, 4>& s,
                         std::array<Vec2, 4>& g) const {
  const auto& gl = cells_[cell].grad_lambda;
  s = {b[0], b[1], b[2], 27.0 * b[0] * b[1] * b[2]};
  g[0] = gl[0];
  g[1] = gl[1];
  g[2] = gl[2];
  g[3] = 27.0 * (b[1] * b[2] * gl[0] + b[0] * b[2] * gl[1] + b[0] * b[1] * gl[2]);
}

const std::array<FacetPoint, kLine>& FESpace::facet_points(int facet, int side) const {
  return facet_pts_[facet][side];
}

std::array<int, kLocalV> FESpace::cell_vdofs(int cell) const {
  const auto& t = mesh_->cells[cell];
  std::array<int, kLocalV> d;
  for (int k = 0; k < 3; ++k)
    for (int c = 0; c < 2; ++c) d[2 * k + c] = node_dof(t[k], c);
  for (int c = 0; c < 2; ++c) d[6 + c] = bubble_dof(cell, c);
  return d;
}

std::array<int, 3> FESpace::cell_pdofs(int cell) const {
  const auto& t = mesh_->cells[cell];
  const int ph = phase_index(mesh_->phase[cell]);
  return {mesh_->pnode[t[0]][ph], mesh_->pnode[t[1]][ph], mesh_->pnode[t[2]][ph]};
}

namespace {

Vec2 eval_value(const FESpace& V, const Vector& u, int cell, const std::array<double, 4>& s) {
  const auto d = V.cell_vdofs(cell);
  Vec2 r = Vec2::Zero();
  for (int l = 0; l < kLocalV; ++l) r[local_comp(l)] += u[d[l]] * s[local_shape(l)];
  return r;
}

Mat2 eval_jac(const FESpace& V, const Vector& u, int cell, const std::array<Vec2, 4>& g) {
  const auto d = V.cell_vdofs(cell);
  Mat2 J = Mat2::Zero();
  for (int l = 0; l < kLocalV; ++l) J.row(local_comp(l)) += u[d[l]] * g[local_shape(l)].transpose();
  return J;
}

double eval_pressure(const FESpace& V, const Vector& q, int cell, const std::array<double, 4>& s) {
  const auto p = V.cell_pdofs(cell);
  return q[p[0]] * s[0] + q[p[1]] * s[1] + q[p[2]] * s[2];
}

}  // namespace

Vec2 FESpace::value(const Vector& u, int cell, int q) const {
  return eval_value(*this, u, cell, cells_[cell].shape[q]);
}
Mat2 FESpace::jacobian(const Vector& u, int cell, int q) const {
  return eval_jac(*this, u, cell, cells_[cell].grad[q]);
}
Vec2 FESpace::value_at(const Vector& u, const FacetPoint& fp) const {
  return eval_value(*this, u, fp.cell, fp.shape);
}
Mat2 FESpace::jacobian_at(const Vector& u, const FacetPoint& fp) const {
  return eval_jac(*this, u, fp.cell, fp.grad);
}
double FESpace::pressure(const Vector& q, int cell, int qp) const {
  return eval_pressure(*this, q, cell, cells_[cell].shape[qp]);
}
double FESpace::pressure_at(const Vector& q, const FacetPoint& fp) const {
  return eval_pressure(*this, q, fp.cell, fp.shape);
}

Vector FESpace::interpolate(const std::function<Vec2(const Vec2&)>& f) const {
  Vector u = Vector::Zero(nv());
  for (int n = 0; n < mesh_->num_nodes(); ++n) {
    const Vec2 v = f(mesh_->nodes[n]);
    u[node_dof(n, 0)] = v.x();
    u[node_dof(n, 1)] = v.y();
  }
  return u;
}

Vector FESpace::pressure_interpolate(const std::function<double(const Vec2&, Phase)>& f) const {
  Vector q(np());
  for (int pn = 0; pn < np(); ++pn)
    q[pn] = f(mesh_->nodes[mesh_->pnode_node[pn]], mesh_->pnode_phase[pn]);
  return q;
}

Mat2 sym_grad(const Mat2& J) { return J + J.transpose(); }

namespace {

template <class Local>
SpMat assemble_vv(const FESpace& V, Local local) {
  Triplets trip;
  trip.reserve(static_cast<size_t>(V.mesh().num_cells()) * kLocalV * kLocalV);
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    Eigen::Matrix<double, kLocalV, kLocalV> K = Eigen::Matrix<double, kLocalV, kLocalV>::Zero();
    local(c, K);
    const auto d = V.cell_vdofs(c);
    for (int a = 0; a < kLocalV; ++a)
      for (int b = 0; b < kLocalV; ++b)
        if (K(a, b) != 0.0) trip.emplace_back(d[a], d[b], K(a, b));
  }
  SpMat m(V.nv(), V.nv());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Mat2 basis_jac(const std::array<Vec2, 4>& g, int l) {
  Mat2 J = Mat2::Zero();
  J.row(local_comp(l)) = g[local_shape(l)].transpose();
  return J;
}

}  // namespace

SpMat mass_matrix(const FESpace& V, const MaterialParams& params) {
  return assemble_vv(V, [&](int c, auto& K) {
    const auto& cc = V.cell(c);
    const double eta = params.eta(V.mesh().phase[c]);
    for (int q = 0; q < kQuad; ++q)
      for (int a = 0; a < kLocalV; ++a)
        for (int b = 0; b < kLocalV; ++b)
          if (local_comp(a) == local_comp(b))
            K(a, b) += eta * cc.w[q] * cc.shape[q][local_shape(a)] * cc.shape[q][local_shape(b)];
  });
}

SpMat unit_mass_matrix(const FESpace& V) {
  MaterialParams one{1.0, 1.0, 1.0, 1.0};
  return mass_matrix(V, one);
}

SpMat viscous_matrix(const FESpace& V, const MaterialParams& params) {
  return assemble_vv(V, [&](int c, auto& K) {
    const auto& cc = V.cell(c);
    const double mu = params.mu(V.mesh().phase[c]);
    for (int q = 0; q < kQuad; ++q) {
      std::array<Mat2, kLocalV> D;
      for (int a = 0; a < kLocalV; ++a) D[a] = sym_grad(basis_jac(cc.grad[q], a));
      for (int a = 0; a < kLocalV; ++a)
        for (int b = 0; b < kLocalV; ++b)
          K(a, b) += 0.5 * mu * cc.w[q] * (D[a].cwiseProduct(D[b])).sum();
    }
  });
}

SpMat gradient_matrix(const FESpace& V) {
  return assemble_vv(V, [&](int c, auto& K) {
    const auto& cc = V.cell(c);
    for (int q = 0; q < kQuad; ++q)
      for (int a = 0; a < kLocalV; ++a)
        for (int b = 0; b < kLocalV; ++b)
          if (local_comp(a) == local_comp(b))
            K(a, b) += cc.w[q] * cc.grad[q][local_shape(a)].dot(cc.grad[q][local_shape(b)]);
  });
}

SpMat divergence_matrix(const FESpace& V) {
  Triplets trip;
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    const auto& cc = V.cell(c);
    const auto vd = V.cell_vdofs(c);
    const auto pd = V.cell_pdofs(c);
    for (int i = 0; i < 3; ++i)
      for (int l = 0; l < kLocalV; ++l) {
        double s = 0.0;
        for (int q = 0; q < kQuad; ++q)
          s += cc.w[q] * cc.shape[q][i] * cc.grad[q][local_shape(l)][local_comp(l)];
        if (s != 0.0) trip.emplace_back(pd[i], vd[l], s);
      }
  }
  SpMat d(V.np(), V.nv());
  d.setFromTriplets(trip.begin(), trip.end());
  return d;
}

SpMat pressure_mass_matrix(const FESpace& V) {
  Triplets trip;
  for (int c = 0; c < V.mesh().num_cells(); ++c) {
    const auto pd = V.cell_pdofs(c);
    const double a = V.cell(c).area;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(pd[i], pd[j], a * (i == j ? 2.0 : 1.0) / 12.0);
  }
  SpMat m(V.np(), V.np());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

Vector boundary_load(const FESpace& V, const Field* h, const Field* k) {
  const RefMesh& mesh = V.mesh();
  Vector b = Vector::Zero(V.nv());
  auto add = [&](int id, const Field& f, Phase side, double sign) {
    const Facet& fa = mesh.facets[id];
    const auto& pts = V.facet_points(id, 0);
    const int p0 = mesh.pnode[fa.nodes[0]][phase_index(side)];
    const int p1 = mesh.pnode[fa.nodes[1]][phase_index(side)];
    const auto& line = line_rule();
    for (int g = 0; g < kLine; ++g) {
      const double t = line.point[g];
      for (int c = 0; c < 2; ++c) {
        const double val = (1.0 - t) * f.at(p0, c) + t * f.at(p1, c);
        b[V.node_dof(fa.nodes[0], c)] += sign * pts[g].w * (1.0 - t) * val;
        b[V.node_dof(fa.nodes[1], c)] += sign * pts[g].w * t * val;
      }
    }
  };
  if (h) {
    h->check_shape();
    for (int id : mesh.interface_facets) {
      add(id, *h, Phase::plus, 1.0);
      add(id, *h, Phase::minus, -1.0);
    }
  }
  if (k) {
    k->check_shape();
    const Phase side = mesh.outer_config == OuterConfig::simple_plus ? Phase::plus : Phase::minus;
    for (int id : mesh.outer_facets) add(id, *k, side, 1.0);
  }
  return b;
}

Vector velocity_load(const FESpace& V, const MaterialParams& params, const Vector& f) {
  return mass_matrix(V, params) * f;
}

Vector pressure_load(const FESpace& V, const Field& g) {
  g.check_shape();
  return pressure_mass_matrix(V) * g.values;
}

Field velocity_to_field(const FESpace& V, const Vector& u) {
  const RefMesh& mesh = V.mesh();
  Field f(mesh, 2);
  for (int pn = 0; pn < mesh.num_pnodes(); ++pn)
    for (int c = 0; c < 2; ++c) f.at(pn, c) = u[V.node_dof(mesh.pnode_node[pn], c)];
  return f;
}

Vector field_to_velocity(const FESpace& V, const Field& f) {
  const RefMesh& mesh = V.mesh();
  Vector u = Vector::Zero(V.nv());
  std::vector<int> hits(mesh.num_nodes(), 0);
  for (int pn = 0; pn < mesh.num_pnodes(); ++pn) {
    const int n = mesh.pnode_node[pn];
    ++hits[n];
    for (int c = 0; c < 2; ++c) u[V.node_dof(n, c)] += f.at(pn, c);
  }
  for (int n = 0; n < mesh.num_nodes(); ++n)
    for (int c = 0; c < 2; ++c) u[V.node_dof(n, c)] /= hits[n];
  return u;
}

std::array<Vector, 3> rigid_modes(const FESpace& V) {
  return {V.interpolate([](const Vec2&) { return Vec2(1.0, 0.0); }),
          V.interpolate([](const Vec2&) { return Vec2(0.0, 1.0); }),
          V.interpolate([](const Vec2& x) { return Vec2(-x.y(), x.x()); })};
}

}  // namespace lagstokes
