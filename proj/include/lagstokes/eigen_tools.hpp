#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>

#include "lagstokes/fe.hpp"

namespace lagstokes {

using BlockOp = std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>;

struct RitzResult {
  Eigen::VectorXcd theta;     // Ritz values of the operator, |theta| descending
  Eigen::MatrixXcd vectors;   // corresponding Ritz vectors, B-normalized
  Eigen::VectorXd residual;   // |op z - theta z|_B / |theta|
  int iterations = 0;
  bool converged = false;
};

// Orthogonal iteration with Rayleigh-Ritz in the B inner product; the first
// `wanted` Ritz pairs must reach `tol`. Columns of the start block come from
// a seeded normal generator and are passed through `op` once.
RitzResult subspace_iteration(const BlockOp& op, const SpMat& B, int n, int block, int wanted,
                              double tol, int max_iter, std::uint64_t seed);

// B-orthonormalize the columns of X in place (two passes of modified
// Gram-Schmidt); returns the number of retained columns.
int b_orthonormalize(Eigen::MatrixXd& X, const SpMat& B);

}  // namespace lagstokes
