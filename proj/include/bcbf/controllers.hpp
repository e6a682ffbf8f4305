#pragma once

#include "bcbf/core.hpp"
#include "bcbf/qp.hpp"
#include "bcbf/synthesis.hpp"

namespace bcbf {

// How the input box enters the pointwise CBF-QP: not at all, as QP
// constraints, or as a clamp applied to the unconstrained minimizer (the
// "saturated" baseline).
enum class BoxMode { none, in_qp, clamp_after };

// Action taken when the filter QP has no feasible point.
enum class Fallback { backup_controller, hold_desired };

struct FilterConfig {
  double horizon = 0.0;  // rollout length T; 0 collapses to one node
  int nodes = 1;         // constraint nodes, also the integration grid
  ClassKappa alpha{1.0};
  ClassKappa alpha_b{1.0};
  Fallback fallback = Fallback::backup_controller;
  // Drops rollout rows that no box input could ever activate. Exact: the
  // row's best achievable left-hand side is compared against its bound.
  bool prune_interior_rows = false;
};

struct FilterStep {
  Vec u;
  Vec u_desired;
  QpStatus qp_status = QpStatus::optimal;
  bool used_fallback = false;
  bool rollout_diverged = false;
  double h_value = 0.0;
  double h_b_at_end = 0.0;  // terminal rollout barrier; NaN for cbf_qp
  int active_constraints = 0;
};

// Pointwise CBF-QP: min ||u - k_d(x)||^2 s.t. dh(x,u) >= -alpha(h(x)).
// Without the box (or with clamp_after) the one-row projection is closed
// form; infeasibility can then only arise on rows independent of u.
FilterStep cbf_qp(const ControlAffineSystem& sys, const ConstraintFunction& cf,
                  const ClassKappa& alpha, const StateFn& k_d,
                  const InputBox& box, BoxMode mode, const Vec& x);

// Rollout-based filter: one constraint row per rollout node on h plus a
// terminal row on the pair's h_b, all under the input box. Infeasible or
// numerically inconclusive QPs and diverging rollouts fall back to the
// configured safe input.
FilterStep backup_cbf_qp(const ControlAffineSystem& sys,
                         const ConstraintFunction& cf, const BackupPair& pair,
                         const FilterConfig& config, const StateFn& k_d,
                         const Vec& x);

// Constant full-demand selector: always returns the lower input bounds.
StateFn select_high(const InputBox& box);

}  // namespace bcbf
