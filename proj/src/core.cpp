#include "lagstokes/core.hpp"

#include <cmath>

namespace lagstokes {

const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::domain: return "domain";
    case ErrorKind::shape: return "shape";
    case ErrorKind::singular: return "singular";
    case ErrorKind::solver: return "solver";
    case ErrorKind::data: return "data";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::geometry: return "geometry";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::validation: return "validation";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

double spectral_norm(const Mat2& m) {
  // sigma_max^2 is the larger eigenvalue of m^T m
  const double a = m.squaredNorm();
  const double d = m.determinant();
  const double disc = std::max(0.0, a * a - 4.0 * d * d);
  return std::sqrt(0.5 * (a + std::sqrt(disc)));
}

}  // namespace lagstokes
