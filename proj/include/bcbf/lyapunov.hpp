#pragma once

#include "bcbf/types.hpp"

namespace bcbf {

// Result of solving  A^T P + P A = -Q  for symmetric positive definite P.
struct CtleSolution {
  Mat P;
  double residual = 0.0;  // ||A^T P + P A + Q||_F
  double min_eigenvalue = 0.0;
};

// True iff every eigenvalue of A has real part < -1e-12.
bool is_hurwitz(const Mat& A);

// Solves A^T P + P A = -Q. Preconditions: A Hurwitz, Q symmetric positive
// definite. Direct Kronecker vectorization for n <= 8; Schur elimination
// above that. The result is symmetrized and checked:
// residual < 1e-10 * (1 + ||Q||_F) and min eig(P) > 0.
CtleSolution solve_ctle(const Mat& A, const Mat& Q);

// (x - center)^T P (x - center)
double quadratic_level_value(const Mat& P, const Vec& center, const Vec& x);

}  // namespace bcbf
