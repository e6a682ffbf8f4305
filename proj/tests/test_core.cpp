#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "bcbf/core.hpp"
#include "bcbf/systems.hpp"
#include "doctest.h"

using namespace bcbf;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

Vec v2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

// Relative mismatch between an analytic Jacobian and its finite-difference
// counterpart, normalized entrywise by 1 + |analytic|.
double jac_mismatch(const Mat& analytic, const Mat& fd) {
  return ((analytic - fd).cwiseAbs().array() /
          (1.0 + analytic.cwiseAbs().array()))
      .maxCoeff();
}

}  // namespace

TEST_CASE("closed loop rhs combines drift and input channel") {
  ControlAffineSystem sys = scalar_system();

  // Zero input leaves the pure drift x^3.
  StateFn zero = [](const Vec&) { return v1(0.0); };
  CHECK(closed_loop_rhs(sys, zero, v1(2.0))[0] == doctest::Approx(8.0));

  // A cancelling law produces an exact equilibrium everywhere.
  StateFn cancel = [](const Vec& x) { return v1(-x[0] * x[0] * x[0]); };
  CHECK(closed_loop_rhs(sys, cancel, v1(2.0))[0] == doctest::Approx(0.0));

  ControlAffineSystem pend = pendulum_system();
  StateFn zero2 = [](const Vec&) { return v1(0.0); };
  Vec rhs = closed_loop_rhs(pend, zero2, v2(M_PI / 2.0, 0.0));
  CHECK(rhs[0] == doctest::Approx(0.0));
  CHECK(rhs[1] == doctest::Approx(1.0));
}

TEST_CASE("closed loop rhs validates dimensions") {
  ControlAffineSystem sys = scalar_system();
  StateFn zero = [](const Vec&) { return v1(0.0); };
  CHECK_THROWS_AS(closed_loop_rhs(sys, zero, v2(0.0, 0.0)), ConfigError);
  StateFn bad = [](const Vec&) { return v2(0.0, 0.0); };
  CHECK_THROWS_AS(closed_loop_rhs(sys, bad, v1(0.0)), ConfigError);
}

TEST_CASE("constraint rate h_dot evaluates the chain rule") {
  ControlAffineSystem sys = scalar_system();
  ConstraintFunction cf = scalar_constraint();

  // Gradient of 1 - x^2 vanishes at the origin, so any input gives rate 0.
  CHECK(h_dot(cf, sys, v1(0.0), v1(3.0)) == doctest::Approx(0.0));
  // d/dt (1 - x^2) = -2 x (x^3 + u): hand-evaluated at x = 0.5.
  CHECK(h_dot(cf, sys, v1(0.5), v1(0.0)) == doctest::Approx(-0.125));
  CHECK(h_dot(cf, sys, v1(0.5), v1(-0.125)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("h_dot is affine in the input") {
  ControlAffineSystem sys = pendulum_system();
  ConstraintFunction cf = pendulum_constraint();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec x = v2(dist(rng), dist(rng));
    Vec ua = v1(dist(rng)), ub = v1(dist(rng));
    double lam = 0.5 * (dist(rng) + 1.0);
    double mixed = h_dot(cf, sys, x, lam * ua + (1.0 - lam) * ub);
    double split =
        lam * h_dot(cf, sys, x, ua) + (1.0 - lam) * h_dot(cf, sys, x, ub);
    CHECK(mixed == doctest::Approx(split).epsilon(1e-12));
  }
}

TEST_CASE("analytic jacobians match central differences") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);

  ControlAffineSystem scalar = scalar_system();
  ControlAffineSystem pend = pendulum_system();
  for (int trial = 0; trial < 100; ++trial) {
    Vec xs = v1(dist(rng));
    CHECK(jac_mismatch(scalar.jac_f(xs), fd_jacobian(scalar.f, xs)) < 1e-5);

    Vec xp = v2(dist(rng), dist(rng));
    CHECK(jac_mismatch(pend.jac_f(xp), fd_jacobian(pend.f, xp)) < 1e-5);
    for (int j = 0; j < pend.m; ++j) {
      Mat fd = fd_jacobian(
          [&pend, j](const Vec& y) -> Vec { return pend.g(y).col(j); }, xp);
      CHECK(jac_mismatch(pend.jac_g_cols[j](xp), fd) < 1e-5);
    }
  }
}

TEST_CASE("constraint gradients match central differences") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> dist(-1.2, 1.2);
  ConstraintFunction sc = scalar_constraint();
  ConstraintFunction pc = pendulum_constraint();
  for (int trial = 0; trial < 100; ++trial) {
    Vec xs = v1(dist(rng));
    CHECK((sc.grad_h(xs) - fd_gradient(sc.h, xs)).cwiseAbs().maxCoeff() < 1e-5);
    Vec xp = v2(dist(rng), dist(rng));
    CHECK((pc.grad_h(xp) - fd_gradient(pc.h, xp)).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("finite-difference fallback wrapper reproduces analytic jacobians") {
  ControlAffineSystem pend = pendulum_system();
  ControlAffineSystem wrapped = with_fd_jacobians(2, 1, pend.f, pend.g);
  Vec x = v2(0.3, -0.4);
  CHECK(jac_mismatch(pend.jac_f(x), wrapped.jac_f(x)) < 1e-8);
  CHECK(jac_mismatch(pend.jac_g_cols[0](x), wrapped.jac_g_cols[0](x)) < 1e-8);
}

TEST_CASE("input box validates bounds") {
  CHECK_THROWS_AS(InputBox(1.0, -1.0), ConfigError);
  CHECK_THROWS_AS(InputBox(0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(InputBox(v1(0.0), v2(1.0, 1.0)), ConfigError);
  Vec inf_hi = v1(std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(InputBox(v1(0.0), inf_hi), ConfigError);
}

TEST_CASE("input box clamp and membership") {
  InputBox box(v2(-0.5, -1.0), v2(0.75, 2.0));
  CHECK(box.contains(v2(0.0, 0.0)));
  CHECK(box.contains(v2(-0.5, 2.0)));  // faces count as inside
  CHECK(!box.contains(v2(-0.6, 0.0)));
  CHECK(box.contains(v2(-0.6, 0.0), 0.2));

  Vec clamped = box.clamp(v2(5.0, -5.0));
  CHECK(clamped[0] == doctest::Approx(0.75));
  CHECK(clamped[1] == doctest::Approx(-1.0));
  // Interior points pass through unchanged.
  CHECK((box.clamp(v2(0.1, 0.2)) - v2(0.1, 0.2)).norm() == 0.0);
}

TEST_CASE("linear class-kappa vanishes at zero and increases strictly") {
  ClassKappa alpha = ClassKappa::linear(0.5);
  CHECK(alpha(0.0) == 0.0);
  CHECK(alpha(0.2) == doctest::Approx(0.1));
  CHECK(alpha(0.2) > alpha(0.1));
  // Extended sense: negative arguments map through the same slope.
  CHECK(alpha(-0.2) == doctest::Approx(-0.1));
  CHECK_THROWS_AS(ClassKappa::linear(0.0), ConfigError);
  CHECK_THROWS_AS(ClassKappa::linear(-1.0), ConfigError);
}
