#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "bcbf/controllers.hpp"
#include "bcbf/systems.hpp"
#include "doctest.h"

using namespace bcbf;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

StateFn constant_input(double value) {
  return [value](const Vec&) { return Vec::Constant(1, value); };
}

// Closed-loop simulation under the backup filter; returns true when the
// constraint never drops below -1e-6. Bails out early once clearly lost.
bool kept_safe(const ControlAffineSystem& sys, const ConstraintFunction& cf,
               const BackupPair& pair, const FilterConfig& config,
               const StateFn& k_d, Vec x, double sim_time, double dt) {
  const int steps = static_cast<int>(sim_time / dt);
  for (int i = 0; i < steps; ++i) {
    if (cf.h(x) < -1e-6) return false;
    if (cf.h(x) < -0.5) return false;
    FilterStep step = backup_cbf_qp(sys, cf, pair, config, k_d, x);
    x += dt * (sys.f(x) + sys.g(x) * step.u);
    if (!x.allFinite()) return false;
  }
  return cf.h(x) >= -1e-6;
}

}  // namespace

TEST_CASE("plain filter passes the desired input through when slack") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  ScalarParams params;
  ClassKappa alpha = ClassKappa::linear(0.5);

  for (BoxMode mode : {BoxMode::none, BoxMode::in_qp, BoxMode::clamp_after}) {
    FilterStep step = cbf_qp(sys, cf, alpha, constant_input(0.0),
                             params.input_box(), mode, v1(0.1));
    CHECK(step.u[0] == doctest::Approx(0.0));
    CHECK(step.h_value == doctest::Approx(0.99));
    CHECK(std::isnan(step.h_b_at_end));
    CHECK_FALSE(step.used_fallback);
  }
}

TEST_CASE("plain filter projection near the boundary") {
  // At x = 0.9: the row -2x (x^3 + u) >= -0.5 h demands
  // u <= 0.5 * 0.19 / 1.8 - 0.729 = -0.6762222...
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  ScalarParams params;
  ClassKappa alpha = ClassKappa::linear(0.5);
  const double expected = 0.5 * 0.19 / 1.8 - 0.729;

  FilterStep unclamped = cbf_qp(sys, cf, alpha, constant_input(0.0),
                                params.input_box(), BoxMode::none, v1(0.9));
  CHECK(unclamped.u[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(unclamped.active_constraints == 1);

  FilterStep clamped = cbf_qp(sys, cf, alpha, constant_input(0.0),
                              params.input_box(), BoxMode::clamp_after,
                              v1(0.9));
  CHECK(clamped.u[0] == doctest::Approx(-0.5));

  // The box cannot reach the demanded rate, so the boxed QP reports it.
  FilterStep boxed = cbf_qp(sys, cf, alpha, constant_input(0.0),
                            params.input_box(), BoxMode::in_qp, v1(0.9));
  CHECK(boxed.qp_status == QpStatus::infeasible);
}

TEST_CASE("degenerate backup filter reduces to a one-state boxed QP") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();

  FilterConfig config;  // horizon 0, a single node
  config.alpha = ClassKappa::linear(0.5);
  config.alpha_b = ClassKappa::linear(0.25);

  ConstraintFunction hb_cf;
  hb_cf.h = [&pair](const Vec& s) { return pair.h_b(s); };
  hb_cf.grad_h = [&pair](const Vec& s) { return pair.grad_h_b(s); };

  StateFn k_d = constant_input(0.75);
  Vec x = v1(0.3);
  FilterStep filt = backup_cbf_qp(sys, cf, pair, config, k_d, x);
  FilterStep direct = cbf_qp(sys, hb_cf, ClassKappa::linear(0.25), k_d,
                             pair.box, BoxMode::in_qp, x);
  // Only the backup-set row binds here, so both solve the same projection:
  // -0.6 (0.027 + u) >= -0.25 h_b = 0.01, i.e. u <= -0.0436666...
  CHECK(filt.u[0] == doctest::Approx(direct.u[0]).epsilon(1e-9));
  CHECK(filt.u[0] == doctest::Approx(-(0.01 / 0.6) - 0.027).epsilon(1e-10));
  CHECK(filt.qp_status == QpStatus::optimal);
  CHECK(filt.h_b_at_end == doctest::Approx(pair.h_b(x)));
}

TEST_CASE("interior-row pruning never changes the solution") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();

  FilterConfig config;
  config.horizon = 4.0;
  config.nodes = 41;
  config.alpha = ClassKappa::linear(0.5);
  config.alpha_b = ClassKappa::linear(0.25);

  FilterConfig pruned = config;
  pruned.prune_interior_rows = true;

  for (double x0 : {-0.6, -0.2, 0.1, 0.5, 0.7}) {
    for (double demand : {-0.5, 0.0, 0.75}) {
      StateFn k_d = constant_input(demand);
      FilterStep a = backup_cbf_qp(sys, cf, pair, config, k_d, v1(x0));
      FilterStep b = backup_cbf_qp(sys, cf, pair, pruned, k_d, v1(x0));
      CHECK(a.u[0] == b.u[0]);
      CHECK(a.qp_status == b.qp_status);
    }
  }
}

TEST_CASE("fallback paths when the rollout leaves the solvable regime") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();

  FilterConfig config;
  config.horizon = 4.0;
  config.nodes = 41;
  config.alpha = ClassKappa::linear(0.5);
  config.alpha_b = ClassKappa::linear(0.25);

  // From x = 2 the cubic escapes in finite time even at full braking.
  FilterStep backup = backup_cbf_qp(sys, cf, pair, config,
                                    constant_input(0.75), v1(2.0));
  CHECK(backup.rollout_diverged);
  CHECK(backup.used_fallback);
  CHECK(backup.qp_status == QpStatus::infeasible);
  CHECK(backup.u[0] == doctest::Approx(-0.5));  // clamped backup command

  FilterConfig hold = config;
  hold.fallback = Fallback::hold_desired;
  FilterStep held = backup_cbf_qp(sys, cf, pair, hold,
                                  constant_input(0.75), v1(2.0));
  CHECK(held.used_fallback);
  CHECK(held.u[0] == doctest::Approx(0.75));
}

TEST_CASE("filter configuration validation") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();
  StateFn k_d = constant_input(0.0);

  FilterConfig bad;
  bad.nodes = 0;
  CHECK_THROWS_AS(backup_cbf_qp(sys, cf, pair, bad, k_d, v1(0.0)),
                  ConfigError);
  bad.nodes = 1;
  bad.horizon = -1.0;
  CHECK_THROWS_AS(backup_cbf_qp(sys, cf, pair, bad, k_d, v1(0.0)),
                  ConfigError);
  bad.horizon = 2.0;  // positive horizon with a single node
  CHECK_THROWS_AS(backup_cbf_qp(sys, cf, pair, bad, k_d, v1(0.0)),
                  ConfigError);
}

TEST_CASE("filter output always lands in the input box") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();

  FilterConfig config;
  config.horizon = 4.0;
  config.nodes = 41;
  config.alpha = ClassKappa::linear(0.5);
  config.alpha_b = ClassKappa::linear(0.25);

  for (double demand : {-0.5, 0.3, 0.75}) {
    StateFn k_d = constant_input(demand);
    for (int i = 0; i <= 28; ++i) {
      Vec x = v1(-0.7 + 0.05 * i);
      FilterStep step = backup_cbf_qp(sys, cf, pair, config, k_d, x);
      CHECK(pair.box.contains(step.u));
    }
  }
}

TEST_CASE("filter input is locally continuous off active-set changes") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();

  FilterConfig config;
  config.horizon = 4.0;
  config.nodes = 41;
  config.alpha = ClassKappa::linear(0.5);
  config.alpha_b = ClassKappa::linear(0.25);
  StateFn k_d = constant_input(0.75);

  for (double x0 : {0.2, 0.6, 0.74}) {
    FilterStep a = backup_cbf_qp(sys, cf, pair, config, k_d, v1(x0));
    FilterStep b = backup_cbf_qp(sys, cf, pair, config, k_d, v1(x0 + 1e-8));
    CHECK(std::abs(a.u[0] - b.u[0]) < 1e-5);
  }
}

TEST_CASE("kept-safe set grows with the filter horizon") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();
  BackupPair pair = scalar_backup_pair();
  StateFn adversary = constant_input(0.75);

  const double horizons[3] = {1.0, 2.0, 4.0};
  const int node_counts[3] = {11, 21, 41};
  int counts[3] = {0, 0, 0};
  std::vector<std::vector<bool>> safe(3, std::vector<bool>(41, false));

  for (int t = 0; t < 3; ++t) {
    FilterConfig config;
    config.horizon = horizons[t];
    config.nodes = node_counts[t];
    config.alpha = ClassKappa::linear(0.5);
    config.alpha_b = ClassKappa::linear(0.25);
    config.fallback = Fallback::hold_desired;
    for (int i = 0; i < 41; ++i) {
      Vec x0 = v1(-0.95 + 0.0475 * i);
      bool ok = kept_safe(sys, cf, pair, config, adversary, x0, 2.5, 5e-3);
      safe[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = ok;
      if (ok) ++counts[t];
    }
  }

  CHECK(counts[0] <= counts[1]);
  CHECK(counts[1] <= counts[2]);
  // A longer horizon never loses a state a shorter one kept.
  for (int i = 0; i < 41; ++i) {
    if (safe[0][static_cast<std::size_t>(i)])
      CHECK(safe[2][static_cast<std::size_t>(i)]);
  }
  // Both classes are populated: the interior survives, the far edge escapes.
  CHECK(counts[0] >= 20);
  CHECK(counts[2] <= 40);
  CHECK(safe[0][20]);        // x = 0, trivially held
  CHECK_FALSE(safe[2][40]);  // x = 0.95, beyond every capturable set
}

TEST_CASE("select_high commands the most negative admissible input") {
  ScalarParams scalar;
  StateFn high = select_high(scalar.input_box());
  CHECK(high(v1(0.3))[0] == doctest::Approx(-0.5));

  VehicleParams vehicle;
  Vec forces = select_high(vehicle.input_box())(Vec::Zero(3));
  CHECK(forces[0] == doctest::Approx(-12e3));
  CHECK(forces[1] == doctest::Approx(-4e3));
  CHECK(forces[2] == doctest::Approx(-6e3));
  CHECK(forces[3] == doctest::Approx(-2e3));
}
