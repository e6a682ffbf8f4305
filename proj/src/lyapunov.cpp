#include "bcbf/lyapunov.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <complex>

namespace bcbf {

namespace {

constexpr double kHurwitzMargin = 1e-12;

Mat kron(const Mat& A, const Mat& B) {
  Mat K(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

// Direct vectorization: (I (x) A^T + A^T (x) I) vec(P) = -vec(Q).
Mat solve_by_vectorization(const Mat& A, const Mat& Q) {
  const int n = static_cast<int>(A.rows());
  const Mat At = A.transpose();
  const Mat I = Mat::Identity(n, n);
  Mat M = kron(I, At) + kron(At, I);
  Vec q(Eigen::Map<const Vec>(Q.data(), n * n));
  Vec p = M.partialPivLu().solve(-q);
  return Eigen::Map<const Mat>(p.data(), n, n);
}

// Schur elimination for larger n: with A = U T U^H the equation becomes
// T^H Y + Y T = -U^H Q U, solved column by column by lower-triangular
// substitution since T^H + T(k,k) I is lower triangular.
Mat solve_by_schur(const Mat& A, const Mat& Q) {
  using CMat = Eigen::MatrixXcd;
  const int n = static_cast<int>(A.rows());
  Eigen::ComplexSchur<Mat> schur(A);
  if (schur.info() != Eigen::Success)
    throw NumericalError("Schur decomposition failed");
  const CMat U = schur.matrixU();
  const CMat T = schur.matrixT();
  const CMat F = U.adjoint() * Q * U;
  CMat Y = CMat::Zero(n, n);
  const CMat Th = T.adjoint();
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXcd rhs = -F.col(k);
    for (int j = 0; j < k; ++j) rhs -= T(j, k) * Y.col(j);
    CMat L = Th + T(k, k) * CMat::Identity(n, n);
    Y.col(k) = L.triangularView<Eigen::Lower>().solve(rhs);
  }
  return (U * Y * U.adjoint()).real();
}

}  // namespace

bool is_hurwitz(const Mat& A) {
  if (A.rows() != A.cols() || A.rows() == 0) return false;
  if (!A.allFinite()) return false;
  Eigen::EigenSolver<Mat> es(A, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) return false;
  return (es.eigenvalues().real().array() < -kHurwitzMargin).all();
}

CtleSolution solve_ctle(const Mat& A, const Mat& Q) {
  if (A.rows() != A.cols())
    throw ConfigError("A must be square");
  if (Q.rows() != A.rows() || Q.cols() != A.cols())
    throw ConfigError("Q must match the dimension of A");
  if ((Q - Q.transpose()).norm() > 1e-12 * (1.0 + Q.norm()))
    throw PreconditionError("Q must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> qe(Q, Eigen::EigenvaluesOnly);
  if (qe.info() != Eigen::Success || qe.eigenvalues().minCoeff() <= 0.0)
    throw PreconditionError("Q must be positive definite");
  if (!is_hurwitz(A))
    throw PreconditionError("A must be Hurwitz");

  Mat P = A.rows() <= 8 ? solve_by_vectorization(A, Q) : solve_by_schur(A, Q);
  P = ((P + P.transpose()) / 2.0).eval();

  CtleSolution sol;
  sol.P = P;
  sol.residual = (A.transpose() * P + P * A + Q).norm();
  Eigen::SelfAdjointEigenSolver<Mat> pe(P, Eigen::EigenvaluesOnly);
  sol.min_eigenvalue = pe.eigenvalues().minCoeff();
  if (!(sol.residual < 1e-10 * (1.0 + Q.norm())))
    throw NumericalError("Lyapunov equation residual check failed");
  if (!(sol.min_eigenvalue > 0.0))
    throw NumericalError("Lyapunov solution is not positive definite");
  return sol;
}

double quadratic_level_value(const Mat& P, const Vec& center, const Vec& x) {
  if (P.rows() != P.cols() || center.size() != P.rows() ||
      x.size() != P.rows())
    throw ConfigError("quadratic level value: dimension mismatch");
  const Vec d = x - center;
  return d.dot(P * d);
}

}  // namespace bcbf
