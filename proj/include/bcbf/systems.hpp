#pragma once

#include "bcbf/core.hpp"
#include "bcbf/synthesis.hpp"

namespace bcbf {

// ---------------------------------------------------------------------------
// Cubically unstable scalar benchmark: x' = x^3 + u.

struct ScalarParams {
  double gain = 0.5;  // linearized backup pole at -gain
  double c = 0.05;
  double x_star = 0.0;
  double u_min = -0.5;
  double u_max = 0.75;
  InputBox input_box() const { return InputBox(u_min, u_max); }
};

ControlAffineSystem scalar_system();
ConstraintFunction scalar_constraint();  // h = 1 - x^2
BackupPair scalar_backup_pair(const ScalarParams& params = {});

// ---------------------------------------------------------------------------
// Torque-limited inverted pendulum: x1' = x2, x2' = sin x1 + u.

struct PendulumParams {
  double k_slope = 0.15;  // velocity coupling inside the constraint
  double k1 = 1.0;
  double k2 = 1.0;
  double c = 0.1;
  double x1_star = 0.0;
  double u_min = -0.75;
  double u_max = 1.25;
  double mu() const { return (1.0 - k_slope * k_slope) / 2.0; }
  InputBox input_box() const { return InputBox(u_min, u_max); }
};

ControlAffineSystem pendulum_system();
// h = (pi/2)^2 - x1^2 - (x2 + k x1)^2 / (2 mu)
ConstraintFunction pendulum_constraint(const PendulumParams& params = {});
OutputMap pendulum_output_map();
BackupPair pendulum_backup_pair(const PendulumParams& params = {});
// Closed form for A = [[0,1],[-k1,-k2]], Q = I.
Mat pendulum_closed_form_P(double k1, double k2);

// ---------------------------------------------------------------------------
// Planar four-wheel vehicle braking on a split-friction surface.
// Dynamic state [v_x, beta, omega]; the extended simulation state appends
// the road-frame pose [x_E, y_E, psi]. Inputs are the four longitudinal
// tire forces [fl, fr, rl, rr], each limited to [-f_max_ij, 0].

struct VehicleParams {
  double mass = 8850.0;        // kg
  double inertia_z = 36950.0;  // kg m^2
  double half_track = 1.5;     // m
  double a_front = 1.4;        // m, axle distance to the center of mass
  double a_rear = 1.6;         // m
  double c_front = 130e3;      // N/rad cornering stiffness per axle side
  double c_rear = 175e3;       // N/rad
  double v_x0 = 25.0;          // m/s initial speed
  double f_max_fl = 12e3;      // N force bounds per wheel
  double f_max_fr = 4e3;
  double f_max_rl = 6e3;
  double f_max_rr = 2e3;
  double k_lane = 0.2;         // rad/m lane-keeping feedback
  double k_heading = 0.4;      // heading feedback
  double beta_cr = 0.04;       // rad side-slip limit
  double omega_cr = 0.08;      // rad/s yaw-rate limit
  double beta_d = 0.016;       // rad design offset of the zero-force locus
  double p_beta = 1.0;         // barrier weight on side slip
  double k_omega = 1.0;        // 1/s yaw backup gain
  double c = 5e-5;             // barrier level
  double v_stop = 0.5;         // m/s speed treated as stopped

  InputBox input_box() const;
  // Positive sizes and bounds, and the oversteer margin
  // c_rear * a_rear > c_front * a_front the braking target relies on.
  void validate() const;
};

// Dynamics at a frozen steering angle; throws SingularityError when the
// longitudinal speed is not positive.
ControlAffineSystem vehicle_system(const VehicleParams& params, double delta);
// Slip angles [fl, fr, rl, rr] from the velocity triangle at each wheel.
Vec tire_slip_angles(const VehicleParams& params, double delta, const Vec& x);
double driver_steering(const VehicleParams& params, double y_e, double psi);
// h = 1 - (beta/beta_cr)^2 - (omega/omega_cr)^2 over the dynamic state.
ConstraintFunction vehicle_constraint(const VehicleParams& params);

// Deceleration target of the braking backup law.
double vehicle_decel_target(const VehicleParams& params, double delta);
// Steady-state side slip the backup set is centered on; must stay below
// beta_cr for the pair to make sense.
double vehicle_beta_star(const VehicleParams& params, double delta);

// Backup pair at a frozen steering angle. Front forces are the virtual
// inputs; rear forces follow with fixed ratios f_max_r/f_max_f. The
// barrier lives over (beta, omega); boundary sampling embeds points at
// the given section speed.
BackupPair vehicle_backup_pair(const VehicleParams& params, double delta,
                               double v_x_section);

// Full simulation right-hand side: dynamic state plus pose kinematics,
// steering taken from the lane-keeping driver inside the call.
Vec vehicle_extended_rhs(const VehicleParams& params, const Vec& x6,
                         const Vec& u4);

}  // namespace bcbf
