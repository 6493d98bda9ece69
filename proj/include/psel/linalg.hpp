#pragma once

#include "psel/errors.hpp"
#include "psel/model.hpp"

namespace psel {

/// Ratio of largest to smallest absolute eigenvalue of a symmetric matrix.
double condition_number(const Matrix& A);

/// Inverse of a symmetric matrix. Direct formula for 2×2, LU otherwise.
/// Throws `code` when the condition number exceeds 1e12.
Matrix symmetric_inverse(const Matrix& A, ErrorCode code);

/// x solving A x = b with the same singularity guard.
Vector solve_checked(const Matrix& A, const Vector& b, ErrorCode code);

}  // namespace psel
