#include "psel/linalg.hpp"

#include <cmath>
#include <limits>

namespace psel {

namespace {

constexpr double kMaxCondition = 1e12;

void guard(const Matrix& A, ErrorCode code) {
  if (!A.allFinite()) fail(code, "matrix has non-finite entries");
  const double cond = condition_number(A);
  if (!(cond <= kMaxCondition)) fail(code, "matrix is singular or ill-conditioned");
}

}  // namespace

double condition_number(const Matrix& A) {
  const Matrix S = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S, Eigen::EigenvaluesOnly);
  const Vector ev = eig.eigenvalues().cwiseAbs();
  const double lo = ev.minCoeff();
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / lo;
}

Matrix symmetric_inverse(const Matrix& A, ErrorCode code) {
  guard(A, code);
  if (A.rows() == 2) {
    const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
    Matrix inv(2, 2);
    inv << A(1, 1) / det, -A(0, 1) / det, -A(1, 0) / det, A(0, 0) / det;
    return inv;
  }
  return A.fullPivLu().inverse();
}

Vector solve_checked(const Matrix& A, const Vector& b, ErrorCode code) {
  return symmetric_inverse(A, code) * b;
}

}  // namespace psel
