#include "bcbf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bcbf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNullStepTol = 1e-10;   // ||z|| below this is a dual-only step
constexpr double kDualDropTol = 1e-12;   // r_k above this can block
constexpr double kInfeasTol = 1e-7;      // certificate margin

struct Rows {
  Mat C;                 // normalized constraint gradients, one per row
  Vec d;                 // normalized right-hand sides
  std::vector<int> ids;  // reported index of each kept row
};

// General rows are scaled to unit gradient norm; box bounds enter as
// +/- e_j rows so the dual method sees one homogeneous system.
Rows assemble(const QpProblem& p) {
  const int m = static_cast<int>(p.u_d.size());
  const int K = static_cast<int>(p.A.rows());
  Rows rows;
  rows.C.resize(K + 2 * m, m);
  rows.d.resize(K + 2 * m);
  int kept = 0;
  for (int i = 0; i < K; ++i) {
    const double norm = p.A.row(i).norm();
    if (norm <= 1e-14) {
      // A u-independent row: satisfied iff b <= 0 (within tolerance).
      if (p.b[i] > kInfeasTol)
        throw PreconditionError("zero-gradient row with positive bound");
      continue;
    }
    rows.C.row(kept) = p.A.row(i) / norm;
    rows.d[kept] = p.b[i] / norm;
    rows.ids.push_back(i);
    ++kept;
  }
  for (int j = 0; j < m; ++j) {
    rows.C.row(kept).setZero();
    rows.C(kept, j) = 1.0;
    rows.d[kept] = p.box.u_min[j];
    rows.ids.push_back(K + j);
    ++kept;
  }
  for (int j = 0; j < m; ++j) {
    rows.C.row(kept).setZero();
    rows.C(kept, j) = -1.0;
    rows.d[kept] = -p.box.u_max[j];
    rows.ids.push_back(K + m + j);
    ++kept;
  }
  rows.C.conservativeResize(kept, m);
  rows.d.conservativeResize(kept);
  return rows;
}

void validate(const QpProblem& p) {
  const int m = static_cast<int>(p.u_d.size());
  if (m == 0 || !p.u_d.allFinite())
    throw ConfigError("QP target must be nonempty and finite");
  if (p.box.dim() != m)
    throw ConfigError("QP box dimension does not match the target");
  if (p.A.rows() != p.b.size())
    throw ConfigError("QP rows and bounds have mismatched counts");
  if (p.A.rows() > 0 && p.A.cols() != m)
    throw ConfigError("QP row width does not match the target");
  if (p.A.size() > 0 && !p.A.allFinite())
    throw ConfigError("QP rows must be finite");
  if (p.b.size() > 0 && !p.b.allFinite())
    throw ConfigError("QP bounds must be finite");
}

}  // namespace

QpSolution solve_qp(const QpProblem& problem) {
  validate(problem);
  const int m = static_cast<int>(problem.u_d.size());
  Rows rows = assemble(problem);
  const int total = static_cast<int>(rows.C.rows());
  const int guard =
      10 * (m + static_cast<int>(problem.A.rows()) + 2 * m) + 10;

  Vec x = problem.u_d;
  std::vector<int> W;          // active row indices (into rows.C)
  std::vector<double> lambda;  // matching nonnegative multipliers
  int iterations = 0;

  auto normal_matrix = [&]() {
    Mat N(static_cast<int>(W.size()), m);
    for (size_t k = 0; k < W.size(); ++k) N.row(static_cast<int>(k)) = rows.C.row(W[k]);
    return N;
  };

  QpSolution sol;
  while (true) {
    // Most violated inactive row.
    int p = -1;
    double worst = 0.0;
    for (int i = 0; i < total; ++i) {
      if (std::find(W.begin(), W.end(), i) != W.end()) continue;
      const double s = rows.C.row(i).dot(x) - rows.d[i];
      const double tol = 1e-11 * (1.0 + std::abs(rows.d[i]));
      if (s < -tol && s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) break;  // primal feasible => optimal

    const Vec cp = rows.C.row(p).transpose();
    double lambda_p = 0.0;
    while (true) {
      if (++iterations > guard)
        throw NumericalError("QP active-set cycling guard tripped");
      const double sp = cp.dot(x) - rows.d[p];
      Mat N = normal_matrix();
      Vec r;
      Vec z = cp;
      if (!W.empty()) {
        Mat G = N * N.transpose();
        r = G.ldlt().solve(N * cp);
        z = cp - N.transpose() * r;
      }

      double t2 = kInf;
      if (z.norm() > kNullStepTol) t2 = -sp / z.squaredNorm();
      double t1 = kInf;
      int block = -1;
      for (size_t k = 0; k < W.size(); ++k) {
        if (r.size() == 0) break;
        if (r[static_cast<int>(k)] > kDualDropTol) {
          const double ratio = lambda[k] / r[static_cast<int>(k)];
          if (ratio < t1) {
            t1 = ratio;
            block = static_cast<int>(k);
          }
        }
      }
      const double t = std::min(t1, t2);

      if (!std::isfinite(t)) {
        // Dual ray: cp = sum r_k c_k with r <= 0 and the violation sp < 0,
        // so y >= 0 with sum y_i c_i ~ 0 and sum y_i d_i > 0 certifies that
        // no point of the box satisfies every row.
        Vec y = Vec::Zero(total);
        y[p] = 1.0;
        for (size_t k = 0; k < W.size(); ++k)
          y[W[k]] = std::max(0.0, -r[static_cast<int>(k)]);
        const double gamma = -sp + z.dot(x);
        double reach = 0.0;
        for (int j = 0; j < m; ++j)
          reach += std::abs(z[j]) * std::max(std::abs(problem.box.u_min[j]),
                                             std::abs(problem.box.u_max[j]));
        if (gamma - reach <= kInfeasTol * (1.0 + y.lpNorm<1>()))
          throw NumericalError("QP infeasibility certificate is inconclusive");
        sol.u = problem.box.clamp(x);
        sol.status = QpStatus::infeasible;
        sol.kkt_residual = std::numeric_limits<double>::quiet_NaN();
        for (int w : W) sol.active_set.push_back(rows.ids[w]);
        sol.iterations = iterations;
        return sol;
      }

      if (t2 == kInf) {
        // Dual-only step: shrink the active set and retry.
        for (size_t k = 0; k < W.size(); ++k)
          lambda[k] -= t * r[static_cast<int>(k)];
        lambda_p += t;
        W.erase(W.begin() + block);
        lambda.erase(lambda.begin() + block);
        continue;
      }

      x += t * z;
      for (size_t k = 0; k < W.size(); ++k)
        lambda[k] -= t * r[static_cast<int>(k)];
      lambda_p += t;
      if (t == t2) {
        W.push_back(p);
        lambda.push_back(lambda_p);
        break;
      }
      W.erase(W.begin() + block);
      lambda.erase(lambda.begin() + block);
    }
  }

  // Recompute the multipliers from scratch for the KKT report: the exact
  // projection satisfies x - u_d = sum lambda_i c_i with lambda >= 0.
  Vec final_lambda = Vec::Zero(static_cast<int>(W.size()));
  if (!W.empty()) {
    Mat N = normal_matrix();
    final_lambda = (N * N.transpose()).ldlt().solve(N * (x - problem.u_d));
    final_lambda = final_lambda.cwiseMax(0.0);
  }

  sol.u = problem.box.clamp(x);
  sol.status = QpStatus::optimal;
  Vec stationarity = 2.0 * (sol.u - problem.u_d);
  double comp = 0.0;
  for (size_t k = 0; k < W.size(); ++k) {
    stationarity -= 2.0 * final_lambda[static_cast<int>(k)] *
                    rows.C.row(W[k]).transpose();
    comp = std::max(comp, std::abs(final_lambda[static_cast<int>(k)] *
                                   (rows.C.row(W[k]).dot(sol.u) - rows.d[W[k]])));
  }
  double violation = 0.0;
  for (int i = 0; i < total; ++i)
    violation = std::max(violation, rows.d[i] - rows.C.row(i).dot(sol.u));
  sol.kkt_residual = stationarity.lpNorm<Eigen::Infinity>() + comp +
                     std::max(0.0, violation);
  for (int w : W) sol.active_set.push_back(rows.ids[w]);
  std::sort(sol.active_set.begin(), sol.active_set.end());
  sol.iterations = iterations;
  return sol;
}

}  // namespace bcbf
