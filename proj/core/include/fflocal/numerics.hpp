#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>

namespace fflocal {

/// Dense row-major matrix of 64-bit reals. One row per example.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

std::string shape_string(const Matrix& m);

/// log(1 + e^u), evaluated as max(u, 0) + log1p(e^{-|u|}) so that it never
/// overflows.
double softplus(double u) noexcept;

/// 1 / (1 + e^{-u}), stable on both tails.
double sigmoid(double u) noexcept;

/// y = x W + b. Throws DimensionError naming both shapes on mismatch.
Matrix affine_forward(const Matrix& x, const Matrix& weights, const Vector& bias);

/// Divides each row by max(||row||_2, eps).
Matrix l2_normalize_rows(const Matrix& x, double eps = 1e-12);

using ScalarFunction = std::function<double(const Vector&)>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h.
Vector finite_diff_grad(const ScalarFunction& f, const Vector& params, double h = 1e-4);

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t param_count = 0;

  bool passed(double rel_tol) const { return max_rel_err <= rel_tol; }
};

/// Elementwise comparison with denominator max(|a|, |b|, floor).
GradCheckReport compare_gradients(const Vector& analytic, const Vector& numeric,
                                  double floor = 1e-8);

/// Convenience: finite-difference check of an analytic gradient at `params`.
GradCheckReport check_gradient(const ScalarFunction& f, const Vector& analytic,
                               const Vector& params, double h = 1e-4);

bool all_finite(const Matrix& m) noexcept;
bool all_finite(const Vector& v) noexcept;

}  // namespace fflocal
