#include "hetstream/linalg.hpp"

#include <cmath>
#include <string>

#include "hetstream/error.hpp"

namespace hetstream::linalg {

namespace {

void require_square(const Mat& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionMismatch(std::string(what) + ": expected a non-empty square matrix, got " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

void require_rows(const Mat& a, Eigen::Index rows, const char* what) {
  if (a.rows() != rows) {
    throw DimensionMismatch(std::string(what) + ": right-hand side has " +
                            std::to_string(a.rows()) + " rows, system has " +
                            std::to_string(rows));
  }
}

// Returns the pivot index that failed, or -1 on success. On success `l` holds
// the factor in its lower triangle.
Eigen::Index factor_in_place(Mat& l, double tolerance) {
  const Eigen::Index n = l.rows();
  const double scale = l.diagonal().cwiseAbs().maxCoeff();
  const double floor = tolerance * scale;
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = l(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > floor) || scale == 0.0) return j;
    const double root = std::sqrt(d);
    l(j, j) = root;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = l(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / root;
    }
  }
  l.triangularView<Eigen::StrictlyUpper>().setZero();
  return -1;
}

template <typename Rhs>
Rhs cholesky_solve(const Mat& a, const Rhs& b, double tolerance) {
  require_square(a, "solve_spd");
  require_rows(b, a.rows(), "solve_spd");
  Mat l = symmetrize(a);
  if (const auto bad = factor_in_place(l, tolerance); bad >= 0) {
    throw SingularMatrix("solve_spd: pivot " + std::to_string(bad) +
                         " below tolerance; system is rank deficient");
  }
  Rhs y = l.triangularView<Eigen::Lower>().solve(b);
  return l.transpose().triangularView<Eigen::Upper>().solve(y);
}

template <typename Rhs>
Rhs lu_solve(const Mat& a, const Rhs& b, double tolerance) {
  require_square(a, "solve_general");
  require_rows(b, a.rows(), "solve_general");
  Eigen::FullPivLU<Mat> lu(a);
  lu.setThreshold(tolerance);
  if (!lu.isInvertible()) {
    throw SingularMatrix("solve_general: matrix is numerically singular (rank " +
                         std::to_string(lu.rank()) + " of " + std::to_string(a.rows()) + ")");
  }
  return lu.solve(b);
}

}  // namespace

Mat symmetrize(const Mat& a) {
  require_square(a, "symmetrize");
  return 0.5 * (a + a.transpose());
}

Mat cholesky(const Mat& a, double tolerance) {
  require_square(a, "cholesky");
  Mat l = symmetrize(a);
  if (const auto bad = factor_in_place(l, tolerance); bad >= 0) {
    throw NotPositiveDefinite("cholesky: pivot " + std::to_string(bad) +
                              " is not positive within tolerance");
  }
  return l;
}

Vec solve_spd(const Mat& a, const Vec& b, double tolerance) {
  return cholesky_solve(a, b, tolerance);
}

Mat solve_spd(const Mat& a, const Mat& b, double tolerance) {
  return cholesky_solve(a, b, tolerance);
}

Mat inverse_spd(const Mat& a, double tolerance) {
  require_square(a, "inverse_spd");
  return symmetrize(cholesky_solve(a, Mat(Mat::Identity(a.rows(), a.cols())), tolerance));
}

Vec solve_general(const Mat& a, const Vec& b, double tolerance) {
  return lu_solve(a, b, tolerance);
}

Mat solve_general(const Mat& a, const Mat& b, double tolerance) {
  return lu_solve(a, b, tolerance);
}

double quad_form(const Mat& a, const Vec& v) {
  if (a.rows() != a.cols() || a.cols() != v.size()) {
    throw DimensionMismatch("quad_form: matrix is " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + ", vector has " +
                            std::to_string(v.size()) + " entries");
  }
  return v.dot(a * v);
}

Mat ar1_matrix(Eigen::Index dim, double base) {
  Mat m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      m(i, j) = std::pow(base, static_cast<double>(std::abs(i - j)));
    }
  }
  return m;
}

bool all_finite(const Mat& a) { return a.allFinite(); }
bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace hetstream::linalg
