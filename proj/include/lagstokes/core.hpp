#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lagstokes {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
  parameter,
  lookup,
  domain,
  shape,
  singular,
  solver,
  data,
  convergence,
  geometry,
  numeric,
  validation,
  io,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Largest singular value of a 2x2 matrix (closed form).
double spectral_norm(const Mat2& m);

}  // namespace lagstokes
