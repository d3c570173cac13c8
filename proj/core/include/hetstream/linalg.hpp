#pragma once

// Dense linear algebra for the small symmetric systems used throughout the
// engine. Storage is Eigen; factorizations carry their own pivot tolerance so
// rank deficiency is reported instead of silently producing garbage.

#include <Eigen/Dense>

namespace hetstream {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace linalg {

// Relative pivot tolerance: a pivot is rejected when it falls below
// kPivotTolerance * max(diag(a)).
inline constexpr double kPivotTolerance = 1e-12;

// (a + aᵀ)/2.
Mat symmetrize(const Mat& a);

// Lower-triangular L with L·Lᵀ = a. Throws NotPositiveDefinite when a pivot is
// at or below the tolerance, DimensionMismatch for non-square input.
Mat cholesky(const Mat& a, double tolerance = kPivotTolerance);

// Solve a·x = b for symmetric positive definite a. The input is symmetrized
// first. Throws SingularMatrix on a rejected pivot.
Vec solve_spd(const Mat& a, const Vec& b, double tolerance = kPivotTolerance);
Mat solve_spd(const Mat& a, const Mat& b, double tolerance = kPivotTolerance);

// Inverse of an SPD matrix through its Cholesky factor.
Mat inverse_spd(const Mat& a, double tolerance = kPivotTolerance);

// Square, not necessarily symmetric systems (the bordered homogenized
// system). Full-pivot LU; throws SingularMatrix when numerically rank
// deficient.
Vec solve_general(const Mat& a, const Vec& b, double tolerance = kPivotTolerance);
Mat solve_general(const Mat& a, const Mat& b, double tolerance = kPivotTolerance);

// vᵀ·a·v.
double quad_form(const Mat& a, const Vec& v);

// Symmetric Toeplitz matrix with entries base^{|i-j|}.
Mat ar1_matrix(Eigen::Index dim, double base);

bool all_finite(const Mat& a);
bool all_finite(const Vec& v);

}  // namespace linalg
}  // namespace hetstream
