#include "fflocal/numerics.hpp"

#include "fflocal/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace fflocal {

std::string shape_string(const Matrix& m) {
  return fmt::format("{}x{}", m.rows(), m.cols());
}

double softplus(double u) noexcept {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

double sigmoid(double u) noexcept {
  if (u >= 0.0) {
    return 1.0 / (1.0 + std::exp(-u));
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

Matrix affine_forward(const Matrix& x, const Matrix& weights, const Vector& bias) {
  if (x.cols() != weights.rows()) {
    throw DimensionError(fmt::format("affine_forward: input {} incompatible with weights {}",
                                     shape_string(x), shape_string(weights)));
  }
  if (bias.size() != weights.cols()) {
    throw DimensionError(fmt::format("affine_forward: bias of length {} incompatible with weights {}",
                                     bias.size(), shape_string(weights)));
  }
  Matrix y = x * weights;
  y.rowwise() += bias.transpose();
  return y;
}

Matrix l2_normalize_rows(const Matrix& x, double eps) {
  Matrix y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double n = y.row(r).norm();
    y.row(r) /= std::max(n, eps);
  }
  return y;
}

Vector finite_diff_grad(const ScalarFunction& f, const Vector& params, double h) {
  Vector grad(params.size());
  Vector p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double fp = f(p);
    p[i] = orig - h;
    const double fm = f(p);
    p[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

GradCheckReport compare_gradients(const Vector& analytic, const Vector& numeric, double floor) {
  if (analytic.size() != numeric.size()) {
    throw DimensionError(fmt::format("compare_gradients: lengths {} and {} differ",
                                     analytic.size(), numeric.size()));
  }
  GradCheckReport report;
  report.param_count = static_cast<std::size_t>(analytic.size());
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double b = numeric[i];
    const double abs_err = std::abs(a - b);
    const double denom = std::max({std::abs(a), std::abs(b), floor});
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    report.max_rel_err = std::max(report.max_rel_err, abs_err / denom);
  }
  return report;
}

GradCheckReport check_gradient(const ScalarFunction& f, const Vector& analytic,
                               const Vector& params, double h) {
  return compare_gradients(analytic, finite_diff_grad(f, params, h));
}

bool all_finite(const Matrix& m) noexcept { return m.allFinite(); }
bool all_finite(const Vector& v) noexcept { return v.allFinite(); }

}  // namespace fflocal
