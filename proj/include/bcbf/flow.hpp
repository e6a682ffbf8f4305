#pragma once

#include <vector>

#include "bcbf/core.hpp"

namespace bcbf {

// The closed-loop law a rollout integrates: the (saturated) input, its
// piecewise state Jacobian (rows of saturated components are zero), and
// the per-component saturation flags.
struct BackupLaw {
  StateFn input;
  StateMatFn jacobian;
  std::function<std::vector<bool>(const Vec&)> saturation;
};

// Nodes of one backup-flow integration: states phi(theta_k, x) and
// sensitivities d phi / d x as n-by-n matrices, on the uniform grid
// theta_k = k * T / (nodes - 1).
struct FlowRollout {
  Vec thetas;
  std::vector<Vec> states;
  std::vector<Mat> sensitivities;
  std::vector<std::vector<bool>> saturation_flags;
};

// Fixed-step RK4 on the augmented (state, sensitivity) system. T = 0
// requires nodes == 1 and returns (x, identity); otherwise nodes >= 2.
// Integration aborts with DivergenceError when a node state leaves
// ||x|| <= 1e6 or turns non-finite. with_sensitivities=false skips the
// variational part (used by set-membership rasters).
FlowRollout rollout(const ControlAffineSystem& sys, const BackupLaw& law,
                    const Vec& x0, double T, int nodes,
                    bool with_sensitivities = true);

// Test oracle: max over nodes and matrix entries of
// |Phi_analytic - Phi_fd| / (1 + |Phi_analytic|), where Phi_fd is a
// central finite difference of the flow map with per-coordinate step
// eps * max(1, |x0_i|).
double sensitivity_vs_finite_difference(const ControlAffineSystem& sys,
                                        const BackupLaw& law, const Vec& x0,
                                        double T, int nodes,
                                        double eps = 1e-5);

}  // namespace bcbf
