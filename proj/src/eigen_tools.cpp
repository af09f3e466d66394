#include "lagstokes/eigen_tools.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lagstokes {

int b_orthonormalize(Eigen::MatrixXd& X, const SpMat& B) {
  int kept = 0;
  for (int j = 0; j < X.cols(); ++j) {
    Eigen::VectorXd v = X.col(j);
    const double n0 = std::sqrt(std::max(0.0, v.dot(B * v)));
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < kept; ++i) v -= X.col(i).dot(B * v) * X.col(i);
    const double n1 = std::sqrt(std::max(0.0, v.dot(B * v)));
    if (!(n1 > 1e-12 * n0) || n1 == 0.0) continue;
    X.col(kept++) = v / n1;
  }
  X.conservativeResize(Eigen::NoChange, kept);
  return kept;
}

RitzResult subspace_iteration(const BlockOp& op, const SpMat& B, int n, int block, int wanted,
                              double tol, int max_iter, std::uint64_t seed) {
  block = std::min(block, n);
  wanted = std::min(wanted, block);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd X(n, block);
  for (int j = 0; j < block; ++j)
    for (int i = 0; i < n; ++i) X(i, j) = normal(rng);
  X = op(X);

  RitzResult r;
  for (int it = 1; it <= max_iter; ++it) {
    b_orthonormalize(X, B);
    const Eigen::MatrixXd Y = op(X);
    const Eigen::MatrixXd BX = B * X;
    const Eigen::MatrixXd H = BX.transpose() * Y;
    Eigen::EigenSolver<Eigen::MatrixXd> es(H);
    if (es.info() != Eigen::Success) throw Error(ErrorKind::numeric, "Ritz eigensolve failed");
    const Eigen::VectorXcd th = es.eigenvalues();
    const Eigen::MatrixXcd S = es.eigenvectors();
    std::vector<int> order(th.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return std::abs(th[a]) > std::abs(th[b]); });

    const int m = static_cast<int>(X.cols());
    r.theta.resize(m);
    r.vectors.resize(n, m);
    r.residual.resize(m);
    const Eigen::MatrixXcd Xc = X.cast<std::complex<double>>();
    const Eigen::MatrixXcd Yc = Y.cast<std::complex<double>>();
    for (int k = 0; k < m; ++k) {
      const int j = order[k];
      Eigen::VectorXcd z = Xc * S.col(j);
      Eigen::VectorXcd oz = Yc * S.col(j);
      const Eigen::VectorXcd res = oz - th[j] * z;
      auto bnorm = [&](const Eigen::VectorXcd& v) {
        const double re = v.real().dot(B * v.real()), im = v.imag().dot(B * v.imag());
        return std::sqrt(std::max(0.0, re + im));
      };
      const double zn = bnorm(z);
      r.theta[k] = th[j];
      r.vectors.col(k) = z / zn;
      r.residual[k] = bnorm(res) / (zn * std::max(std::abs(th[j]), 1e-300));
    }
    r.iterations = it;
    r.converged = r.residual.head(std::min(wanted, m)).maxCoeff() < tol;
    if (r.converged) break;
    X = Y;
  }
  return r;
}

}  // namespace lagstokes
