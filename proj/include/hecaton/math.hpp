#pragma once

// Shared elementwise math: exact (erf-based) GeLU and a numerically stable
// row-wise softmax, used identically by the dense reference and the
// distributed engine so that only data movement can make them differ.

#include <cmath>
#include <cstdint>
#include <numbers>

#include "hecaton/tiling.hpp"

namespace hecaton {

inline double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

inline double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline Matrix gelu(const Matrix& x) { return x.unaryExpr(&gelu_scalar); }
inline Matrix gelu_grad(const Matrix& x) { return x.unaryExpr(&gelu_grad_scalar); }

/// Numerically stable row-wise softmax.
inline Matrix softmax_rows(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double m = s.row(r).maxCoeff();
    Eigen::ArrayXd e = (s.row(r).array() - m).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  return out;
}

inline double default_softmax_scale(std::int64_t hidden, std::int64_t heads) {
  return 1.0 / std::sqrt(static_cast<double>(hidden) / heads);
}

}  // namespace hecaton
