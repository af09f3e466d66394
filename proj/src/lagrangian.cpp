#include "lagstokes/lagrangian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lagstokes {

DisplacementGradient zero_displacement(int sites) {
  DisplacementGradient d;
  d.C.assign(sites, Mat2::Zero());
  return d;
}

double max_site_norm(const std::vector<Mat2>& m) {
  double s = 0.0;
  for (const auto& a : m) s = std::max(s, spectral_norm(a));
  return s;
}

DisplacementGradient accumulate_gradient(const DisplacementGradient& C,
                                         const std::vector<Mat2>& grad_u, double dt) {
  return accumulate_gradient(C, grad_u, grad_u, dt);
}

DisplacementGradient accumulate_gradient(const DisplacementGradient& C,
                                         const std::vector<Mat2>& grad_prev,
                                         const std::vector<Mat2>& grad_next, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorKind::parameter, "dt must be > 0");
  if (grad_prev.size() != C.C.size() || grad_next.size() != C.C.size())
    throw Error(ErrorKind::shape, "gradient field does not match the displacement sites");
  DisplacementGradient out = C;
  const double h = 0.5 * dt;
  for (size_t i = 0; i < C.C.size(); ++i) out.C[i] += h * (grad_prev[i] + grad_next[i]);
  out.t += dt;
  out.norm_estimate += h * (max_site_norm(grad_prev) + max_site_norm(grad_next));
  return out;
}

Mat2 neumann_series(const Mat2& C, double tol, int max_order, int* order) {
  Mat2 sum = Mat2::Identity();
  Mat2 term = Mat2::Identity();
  int k = 0;
  for (;;) {
    Mat2 next = -term * C;
    if (spectral_norm(next) < tol) break;
    if (k + 1 > max_order)
      throw Error(ErrorKind::convergence, "Neumann series did not reach tolerance within max_order");
    term = next;
    sum += term;
    ++k;
  }
  if (order) *order = k;
  return sum;
}

CofactorField neumann_cofactor(const DisplacementGradient& C, const SeriesOptions& opts) {
  if (!(opts.kappa < 1.0))
    throw Error(ErrorKind::domain, "kappa must be < 1 for the cofactor series");
  CofactorField out;
  out.A.resize(C.C.size());
  out.kappa = max_site_norm(C.C);
  // small slack so that a bound met exactly in exact arithmetic is accepted
  if (out.kappa > opts.kappa * (1.0 + 1e-12))
    throw Error(ErrorKind::domain, "|C| = " + std::to_string(out.kappa) +
                                       " exceeds kappa; reduce the horizon");
  for (size_t i = 0; i < C.C.size(); ++i) {
    int k = 0;
    out.A[i] = neumann_series(C.C[i], opts.tol, opts.max_order, &k);
    out.order = std::max(out.order, k);
  }
  return out;
}

CofactorField direct_inverse_oracle(const DisplacementGradient& C) {
  CofactorField out;
  out.A.resize(C.C.size());
  out.kappa = max_site_norm(C.C);
  for (size_t i = 0; i < C.C.size(); ++i) {
    const Mat2 F = Mat2::Identity() + C.C[i];
    const double det = F(0, 0) * F(1, 1) - F(0, 1) * F(1, 0);
    if (std::abs(det) < 1e-300 || std::abs(det) < 1e-14 * F.squaredNorm())
      throw Error(ErrorKind::singular, "I + C singular at site " + std::to_string(i));
    Mat2 inv;
    inv << F(1, 1), -F(0, 1), -F(1, 0), F(0, 0);
    out.A[i] = inv / det;
  }
  return out;
}

std::vector<Mat2> delta_cofactor(const DisplacementGradient& C1, const DisplacementGradient& C2,
                                 const SeriesOptions& opts) {
  if (C1.C.size() != C2.C.size()) throw Error(ErrorKind::shape, "site counts differ");
  if (!(opts.kappa < 1.0))
    throw Error(ErrorKind::domain, "kappa must be < 1 for the cofactor series");
  const double k1 = max_site_norm(C1.C), k2 = max_site_norm(C2.C);
  if (std::max(k1, k2) > opts.kappa * (1.0 + 1e-12))
    throw Error(ErrorKind::domain, "|C| exceeds kappa in delta_cofactor");
  std::vector<Mat2> out(C1.C.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const Mat2& a = C1.C[i];
    const Mat2& b = C2.C[i];
    const Mat2 dC = b - a;
    const double kap = std::max(spectral_norm(a), spectral_norm(b));
    const double dn = spectral_norm(dC);
    // T_l = sum_{j<l} C2^{l-1-j} dC C1^j = C2 T_{l-1} + dC C1^{l-1}
    Mat2 T = dC, P1 = Mat2::Identity(), sum = -dC;
    int l = 1;
    for (;;) {
      const double bound = (l + 1) * std::pow(kap, l) * dn;
      if (bound < opts.tol) break;
      if (l + 1 > opts.max_order)
        throw Error(ErrorKind::convergence, "delta series did not reach tolerance");
      P1 = P1 * a;
      T = b * T + dC * P1;
      ++l;
      sum += ((l % 2) ? -1.0 : 1.0) * T;
    }
    out[i] = sum;
  }
  return out;
}

Vec2 pushforward(const Mat2& A, const Vec2& n) {
  const Vec2 an = A * n;
  const double len = an.norm();
  if (len < 1e-12) throw Error(ErrorKind::geometry, "degenerate transformed normal |A n| < 1e-12");
  return an / len;
}

TransformedNormal pushforward_normal(const CofactorField& A, const RefMesh& mesh) {
  if (A.size() != mesh.num_pnodes())
    throw Error(ErrorKind::shape, "cofactor field is not on phase-nodes");
  TransformedNormal out;
  auto facet_value = [&](int id, Phase side) {
    const Facet& f = mesh.facets[id];
    const int ph = phase_index(side);
    return Mat2(0.5 * (A.A[mesh.pnode[f.nodes[0]][ph]] + A.A[mesh.pnode[f.nodes[1]][ph]]));
  };
  for (int id : mesh.interface_facets)
    out.interface.push_back(pushforward(facet_value(id, Phase::plus), facet_normal(mesh, id)));
  const Phase outer =
      mesh.outer_config == OuterConfig::simple_plus ? Phase::plus : Phase::minus;
  for (int id : mesh.outer_facets)
    out.outer.push_back(pushforward(facet_value(id, outer), facet_normal(mesh, id)));
  return out;
}

DeformationTensors deformation_tensors(const Mat2& J, const Mat2& A) {
  const Mat2 I = Mat2::Identity();
  return {J + J.transpose(), J * A.transpose() + A * J.transpose(),
          J * (I - A.transpose()) + (I - A) * J.transpose()};
}

std::vector<DeformationTensors> deformation_tensors(const std::vector<Mat2>& J,
                                                    const CofactorField& A) {
  if (J.size() != A.A.size()) throw Error(ErrorKind::shape, "site counts differ");
  std::vector<DeformationTensors> out;
  out.reserve(J.size());
  for (size_t i = 0; i < J.size(); ++i) out.push_back(deformation_tensors(J[i], A.A[i]));
  return out;
}

std::vector<Mat2> recover_nodal_jacobian(const FESpace& V, const Vector& u) {
  const RefMesh& mesh = V.mesh();
  std::vector<Mat2> J(mesh.num_pnodes(), Mat2::Zero());
  std::vector<double> wsum(mesh.num_pnodes(), 0.0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cc = V.cell(c);
    Mat2 mean = Mat2::Zero();
    for (int q = 0; q < kQuad; ++q) mean += cc.w[q] * V.jacobian(u, c, q);
    const auto pd = V.cell_pdofs(c);
    for (int p : pd) {
      J[p] += mean;
      wsum[p] += cc.area;
    }
  }
  for (size_t p = 0; p < J.size(); ++p) J[p] /= wsum[p];
  return J;
}

std::vector<Mat2> transpose_all(const std::vector<Mat2>& m) {
  std::vector<Mat2> out(m.size());
  for (size_t i = 0; i < m.size(); ++i) out[i] = m[i].transpose();
  return out;
}

QuadratureSites::QuadratureSites(const FESpace& V) {
  const RefMesh& mesh = V.mesh();
  iface0_ = mesh.num_cells() * kQuad;
  outer0_ = iface0_ + static_cast<int>(mesh.interface_facets.size()) * 2 * kLine;
  total_ = outer0_ + static_cast<int>(mesh.outer_facets.size()) * kLine;
}

std::vector<Mat2> QuadratureSites::jacobians(const FESpace& V, const Vector& u) const {
  const RefMesh& mesh = V.mesh();
  std::vector<Mat2> J(total_);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int q = 0; q < kQuad; ++q) J[cell_site(c, q)] = V.jacobian(u, c, q);
  for (size_t k = 0; k < mesh.interface_facets.size(); ++k)
    for (int s = 0; s < 2; ++s) {
      const auto& pts = V.facet_points(mesh.interface_facets[k], s);
      for (int g = 0; g < kLine; ++g) J[interface_site(k, s, g)] = V.jacobian_at(u, pts[g]);
    }
  for (size_t k = 0; k < mesh.outer_facets.size(); ++k) {
    const auto& pts = V.facet_points(mesh.outer_facets[k], 0);
    for (int g = 0; g < kLine; ++g) J[outer_site(k, g)] = V.jacobian_at(u, pts[g]);
  }
  return J;
}

std::vector<Vec2> QuadratureSites::values(const FESpace& V, const Vector& u) const {
  const RefMesh& mesh = V.mesh();
  std::vector<Vec2> out(total_);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int q = 0; q < kQuad; ++q) out[cell_site(c, q)] = V.value(u, c, q);
  for (size_t k = 0; k < mesh.interface_facets.size(); ++k)
    for (int s = 0; s < 2; ++s) {
      const auto& pts = V.facet_points(mesh.interface_facets[k], s);
      for (int g = 0; g < kLine; ++g) out[interface_site(k, s, g)] = V.value_at(u, pts[g]);
    }
  for (size_t k = 0; k < mesh.outer_facets.size(); ++k) {
    const auto& pts = V.facet_points(mesh.outer_facets[k], 0);
    for (int g = 0; g < kLine; ++g) out[outer_site(k, g)] = V.value_at(u, pts[g]);
  }
  return out;
}

std::vector<double> QuadratureSites::pressures(const FESpace& V, const Vector& q) const {
  const RefMesh& mesh = V.mesh();
  std::vector<double> out(total_);
  for (int c = 0; c < mesh.num_cells(); ++c)
    for (int k = 0; k < kQuad; ++k) out[cell_site(c, k)] = V.pressure(q, c, k);
  for (size_t k = 0; k < mesh.interface_facets.size(); ++k)
    for (int s = 0; s < 2; ++s) {
      const auto& pts = V.facet_points(mesh.interface_facets[k], s);
      for (int g = 0; g < kLine; ++g) out[interface_site(k, s, g)] = V.pressure_at(q, pts[g]);
    }
  for (size_t k = 0; k < mesh.outer_facets.size(); ++k) {
    const auto& pts = V.facet_points(mesh.outer_facets[k], 0);
    for (int g = 0; g < kLine; ++g) out[outer_site(k, g)] = V.pressure_at(q, pts[g]);
  }
  return out;
}

}  // namespace lagstokes
