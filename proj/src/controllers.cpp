#include "bcbf/controllers.hpp"

#include <cmath>
#include <limits>

#include "bcbf/flow.hpp"

namespace bcbf {
namespace {

constexpr double kZeroRowTol = 1e-13;
constexpr double kRowSlackTol = 1e-9;

// Smallest achievable value of a.dot(u) over the box. Used both to decide
// whether a gradient-free row is satisfiable and to prune rows that no
// admissible input could activate.
double box_row_infimum(const Vec& a, const InputBox& box) {
  double lo = 0.0;
  for (int j = 0; j < a.size(); ++j) {
    lo += std::min(a(j) * box.u_min(j), a(j) * box.u_max(j));
  }
  return lo;
}

}  // namespace

FilterStep cbf_qp(const ControlAffineSystem& sys, const ConstraintFunction& cf,
                  const ClassKappa& alpha, const StateFn& k_d,
                  const InputBox& box, BoxMode mode, const Vec& x) {
  sys.check_state(x);
  FilterStep step;
  step.u_desired = k_d(x);
  sys.check_input(step.u_desired);
  step.h_value = cf.h(x);
  step.h_b_at_end = std::numeric_limits<double>::quiet_NaN();

  const Vec grad = cf.grad_h(x);
  const Vec f = sys.f(x);
  const Mat g = sys.g(x);
  Vec a = g.transpose() * grad;       // row: a.dot(u) >= b
  const double b = -alpha(step.h_value) - grad.dot(f);

  if (mode == BoxMode::in_qp) {
    QpProblem problem;
    problem.u_d = step.u_desired;
    problem.box = box;
    problem.A = a.transpose();
    problem.b = Vec::Constant(1, b);
    QpSolution sol = solve_qp(problem);
    step.qp_status = sol.status;
    step.u = sol.u;
    step.active_constraints = static_cast<int>(sol.active_set.size());
    return step;
  }

  if (a.norm() <= kZeroRowTol) {
    // The input cannot influence the constraint rate at this state.
    step.u = step.u_desired;
    if (b > kRowSlackTol * (1.0 + std::abs(b))) {
      step.qp_status = QpStatus::infeasible;
    }
  } else {
    const double violation = b - a.dot(step.u_desired);
    step.u = step.u_desired;
    if (violation > 0.0) {
      step.u += (violation / a.squaredNorm()) * a;
      step.active_constraints = 1;
    }
  }
  if (mode == BoxMode::clamp_after) step.u = box.clamp(step.u);
  return step;
}

FilterStep backup_cbf_qp(const ControlAffineSystem& sys,
                         const ConstraintFunction& cf, const BackupPair& pair,
                         const FilterConfig& config, const StateFn& k_d,
                         const Vec& x) {
  sys.check_state(x);
  if (config.nodes < 1) throw ConfigError("filter nodes must be >= 1");
  if (config.horizon < 0.0 || !std::isfinite(config.horizon)) {
    throw ConfigError("filter horizon must be finite and >= 0");
  }
  if (config.horizon > 0.0 && config.nodes < 2) {
    throw ConfigError("filter with positive horizon needs >= 2 nodes");
  }

  FilterStep step;
  step.u_desired = k_d(x);
  sys.check_input(step.u_desired);
  step.h_value = cf.h(x);
  step.h_b_at_end = std::numeric_limits<double>::quiet_NaN();

  const auto fallback_input = [&]() {
    step.used_fallback = true;
    step.qp_status = QpStatus::infeasible;
    if (config.fallback == Fallback::backup_controller) {
      step.u = pair.box.clamp(pair.kb(x));
    } else {
      step.u = pair.box.clamp(step.u_desired);
    }
  };

  FlowRollout roll;
  try {
    roll = rollout(sys, pair.law(), x, config.horizon, config.nodes, true);
  } catch (const DivergenceError&) {
    step.rollout_diverged = true;
    fallback_input();
    return step;
  }
  const int n_nodes = static_cast<int>(roll.states.size());
  step.h_b_at_end = pair.h_b(roll.states.back());

  const Vec f = sys.f(x);
  const Mat g = sys.g(x);
  std::vector<Vec> rows;
  std::vector<double> bounds;
  rows.reserve(n_nodes + 1);
  bounds.reserve(n_nodes + 1);

  const auto push_row = [&](const Vec& grad_at_node, const Mat& phi,
                            double alpha_of_value, bool prunable) -> bool {
    const Vec w = phi.transpose() * grad_at_node;
    Vec a = g.transpose() * w;
    const double b = -alpha_of_value - w.dot(f);
    if (a.norm() <= kZeroRowTol) {
      // No input dependence: either vacuous or unconditionally violated.
      return b <= kRowSlackTol * (1.0 + std::abs(b));
    }
    if (prunable && config.prune_interior_rows &&
        box_row_infimum(a, pair.box) >= b + kRowSlackTol * (1.0 + std::abs(b))) {
      return true;
    }
    rows.push_back(std::move(a));
    bounds.push_back(b);
    return true;
  };

  bool feasible_rows = true;
  for (int k = 0; k < n_nodes && feasible_rows; ++k) {
    const Vec& phi_k = roll.states[static_cast<std::size_t>(k)];
    const Mat& sens = roll.sensitivities[static_cast<std::size_t>(k)];
    feasible_rows = push_row(cf.grad_h(phi_k), sens,
                             config.alpha(cf.h(phi_k)), true);
  }
  if (feasible_rows) {
    const Vec& phi_end = roll.states.back();
    const Mat& sens_end = roll.sensitivities.back();
    feasible_rows = push_row(pair.grad_h_b(phi_end), sens_end,
                             config.alpha_b(step.h_b_at_end), false);
  }
  if (!feasible_rows) {
    fallback_input();
    return step;
  }

  QpProblem problem;
  problem.u_d = step.u_desired;
  problem.box = pair.box;
  problem.A.resize(static_cast<Eigen::Index>(rows.size()), sys.m);
  problem.b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    problem.A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    problem.b(static_cast<Eigen::Index>(i)) = bounds[i];
  }

  QpSolution sol;
  try {
    sol = solve_qp(problem);
  } catch (const NumericalError&) {
    // Cycling guard or an inconclusive infeasibility certificate: treat as
    // unresolved and hand control to the fallback rather than aborting.
    fallback_input();
    return step;
  }
  if (sol.status == QpStatus::infeasible) {
    fallback_input();
    return step;
  }
  step.qp_status = QpStatus::optimal;
  step.u = sol.u;
  step.active_constraints = static_cast<int>(sol.active_set.size());
  return step;
}

StateFn select_high(const InputBox& box) {
  const Vec full = box.u_min;
  return [full](const Vec&) { return full; };
}

}  // namespace bcbf
