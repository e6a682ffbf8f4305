#pragma once

#include <vector>

#include "bcbf/core.hpp"

namespace bcbf {

// min ||u - u_d||^2  subject to  box.u_min <= u <= box.u_max
// and  A.row(i) . u >= b[i]  for every general row i.
struct QpProblem {
  Vec u_d;
  InputBox box;
  Mat A;  // K x m, may have zero rows when K == 0
  Vec b;  // K
};

enum class QpStatus { optimal, infeasible };

// active_set holds row indices: 0..K-1 the general rows, K+j the lower
// bound of component j, K+m+j the upper bound of component j.
struct QpSolution {
  Vec u;
  QpStatus status = QpStatus::optimal;
  double kkt_residual = 0.0;
  std::vector<int> active_set;
  int iterations = 0;
};

// Dual active-set solver. Rows are normalized to unit gradient norm
// internally, so solutions are invariant to row rescaling. Infeasibility
// is only declared with a verified Farkas certificate (no point of the box
// satisfies all rows within 1e-7); an unverifiable ray raises
// NumericalError, as does tripping the 10*(m+K) cycling guard.
QpSolution solve_qp(const QpProblem& problem);

}  // namespace bcbf
