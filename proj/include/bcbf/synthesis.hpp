#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bcbf/core.hpp"
#include "bcbf/flow.hpp"
#include "bcbf/lyapunov.hpp"
#include "bcbf/parallel.hpp"

namespace bcbf {

// Output y with uniform relative degree r. lie[i] evaluates L_f^{i+1} y,
// decoupling evaluates L_g L_f^{r-1} y (p-by-m), and lie_jacobians[i]
// evaluates the state Jacobian of L_f^i y (p-by-n, index 0 is the
// Jacobian of y itself). The Jacobians feed the barrier gradient.
struct OutputMap {
  int p = 0;
  int r = 1;
  StateFn y;
  std::vector<StateFn> lie;
  StateMatFn decoupling;
  std::vector<StateMatFn> lie_jacobians;
};

struct SaturationResult {
  Vec u;
  std::vector<bool> flags;  // strict: true only when the raw value exceeds a bound
};

// Componentwise clamp. Values exactly at a bound are reported unsaturated.
SaturationResult saturate(const Vec& u, const InputBox& box);

// Smooth drop-in: mid + hw * z / (1 + |z|^kappa)^(1/kappa) per component
// with z = (u - mid)/hw. Strictly inside the box, slope 1 at the center,
// approaches the hard clamp as kappa grows.
Vec saturate_smooth(const Vec& u, const InputBox& box, double kappa);
double saturate_smooth_slope(double z, double kappa);

// Block-companion matrix of the output error dynamics: identity on the
// superdiagonal blocks, [-K_1 ... -K_r] in the last block row. Each gain
// is p-by-p; the result is (r*p)-by-(r*p).
Mat assemble_A(const std::vector<Mat>& gains, int p);
Mat assemble_A(const std::vector<double>& gains);  // p = 1

//  u = g(x)^{-1} (-f(x) + A (x - x_star)),  for square invertible g.
Vec feedback_lin_full_state(const ControlAffineSystem& sys, const Mat& A,
                            const Vec& x_star, const Vec& x);

//  u = D(x)^{-1} (-L_f^r y - sum_i K_i eta_i)  with eta_1 = y - y(x_star).
Vec feedback_lin_output(const ControlAffineSystem& sys, const OutputMap& map,
                        const std::vector<Mat>& gains, const Vec& x_star,
                        const Vec& x);

struct EquilibriumReport {
  Vec u_star;
  double h_at_center = 0.0;
  double residual = 0.0;     // ||f + g u_star|| after the least-squares solve
  double box_margin = 0.0;   // min distance of u_star to the box faces
  bool inside_safe_set = false;
  bool inside_box = false;
  bool valid() const { return inside_safe_set && inside_box; }
};

// Solves g(x*) u = -f(x*) in the least-squares sense; throws
// SynthesisError when no equilibrium input exists at x_star.
EquilibriumReport validate_equilibrium(const ControlAffineSystem& sys,
                                       const ConstraintFunction& cf,
                                       const InputBox& box, const Vec& x_star);

// A backup controller u = sat(k_fl) together with its certified-invariant
// level set {x : h_b(x) >= 0}, h_b(x) = c - eta(x)^T P eta(x). eta
// vanishes at the center; embed_eta maps an eta-space point to a
// representative state for boundary sampling (identity-like for the
// reference systems, a fixed-speed section for the vehicle).
struct BackupPair {
  int eta_dim = 0;
  Vec x_star;
  Vec u_star;
  Mat A;
  Mat P;
  Mat Q;
  double c = 0.0;
  StateFn eta;
  StateMatFn eta_jac;
  StateFn embed_eta;
  StateFn k_fl;
  StateMatFn k_fl_jac;
  InputBox box;
  bool smooth_sat = false;
  double smooth_kappa = 20.0;

  Vec kb(const Vec& x) const;
  Mat kb_jac(const Vec& x) const;  // saturated rows zero (boundary included)
  std::vector<bool> sat_flags(const Vec& x) const;
  double h_b(const Vec& x) const;
  Vec grad_h_b(const Vec& x) const;
  BackupLaw law() const;
};

// {x : h_b(x) >= 0} as a ConstraintFunction with analytic gradient.
ConstraintFunction build_hb(const BackupPair& pair);

// Full-state pair (square invertible g): solves the Lyapunov equation for
// A, wires eta = x - x_star and the analytic controller Jacobian.
BackupPair make_full_state_pair(const ControlAffineSystem& sys, const Mat& A,
                                const Vec& x_star, const InputBox& box,
                                double c, const Mat& Q);

// Output-linearization pair for p == m. embed_eta must invert the eta
// coordinates when boundary sampling is wanted; k_fl_jac falls back to
// finite differences when not supplied.
BackupPair make_output_pair(const ControlAffineSystem& sys,
                            const OutputMap& map,
                            const std::vector<Mat>& gains, const Vec& x_star,
                            const InputBox& box, double c, const Mat& Q,
                            std::optional<StateMatFn> k_fl_jac = {},
                            std::optional<StateFn> embed_eta = {});

struct ValidityCheckConfig {
  int boundary_samples = 10000;
  int region_samples = 10000;
  std::uint64_t seed = 12345;
  Vec region_lo;  // sampling box for the input-bound check; defaults to
  Vec region_hi;  // the states reached by embedding 2x the level set
  Exec exec = Exec::serial;
};

struct ValidityReport {
  bool c1_safe_subset = false;    // h >= 0 on the sampled level-set boundary
  bool c2_inputs_in_box = false;  // kb(x) in U over the sampling region
  bool c3_invariant = false;      // hb_dot >= -1e-9 on the boundary
  bool no_saturation = false;     // k_fl strictly inside the box on the boundary
  double worst_h = 0.0;
  double worst_hb_dot = 0.0;
  double worst_saturation_margin = 0.0;
  double worst_input_margin = 0.0;
  Vec worst_h_point;
  Vec worst_hb_dot_point;
  bool valid() const { return c1_safe_subset && c2_inputs_in_box && c3_invariant; }
};

ValidityReport verify_validity(const ControlAffineSystem& sys,
                               const BackupPair& pair,
                               const ConstraintFunction& cf,
                               const ValidityCheckConfig& cfg);

// True iff every sampled boundary point of {eta^T P eta = c} has h > 0
// and a strictly unsaturated k_fl.
bool accepts_level(const BackupPair& pair, const ConstraintFunction& cf,
                   double c, const ValidityCheckConfig& cfg);

// Largest accepted level, found by doubling then bisection, scaled by a
// 0.95 safety factor.
double max_c(const BackupPair& pair, const ConstraintFunction& cf,
             const ValidityCheckConfig& cfg, double rel_tol = 1e-3);

}  // namespace bcbf
