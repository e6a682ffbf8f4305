#pragma once

#include <functional>
#include <vector>

#include "bcbf/types.hpp"

namespace bcbf {

using StateFn = std::function<Vec(const Vec&)>;
using StateMatFn = std::function<Mat(const Vec&)>;
using ScalarFn = std::function<double(const Vec&)>;

// Control-affine dynamics  x' = f(x) + g(x) u  with analytic Jacobians.
// jac_g_cols[j](x) is the n-by-n Jacobian of the j-th column of g.
struct ControlAffineSystem {
  int n = 0;
  int m = 0;
  StateFn f;
  StateMatFn g;
  StateMatFn jac_f;
  std::vector<StateMatFn> jac_g_cols;

  void check_state(const Vec& x) const;
  void check_input(const Vec& u) const;
};

// Componentwise input bounds u_min < u_max.
struct InputBox {
  Vec u_min;
  Vec u_max;

  InputBox() = default;
  InputBox(Vec lo, Vec hi);
  InputBox(double lo, double hi);  // one-dimensional convenience

  int dim() const { return static_cast<int>(u_min.size()); }
  bool contains(const Vec& u, double tol = 0.0) const;
  Vec clamp(const Vec& u) const;
};

// Scalar state constraint h with analytic gradient; the safe set is
// {x : h(x) >= 0}.
struct ConstraintFunction {
  ScalarFn h;
  StateFn grad_h;
};

// Extended class-kappa comparison function. Only the linear family
// alpha(v) = coefficient * v is supported; it is applied to negative
// arguments unchanged (extended sense).
struct ClassKappa {
  double coefficient = 1.0;

  static ClassKappa linear(double coefficient);
  double operator()(double value) const { return coefficient * value; }
};

// f(x) + g(x) k(x)
Vec closed_loop_rhs(const ControlAffineSystem& sys, const StateFn& k,
                    const Vec& x);
// A raw input vector is not a control law. Without this guard Eigen's
// indexed-view operator() lets a Vec bind to the StateFn slot and compile.
Vec closed_loop_rhs(const ControlAffineSystem&, const Vec&, const Vec&) =
    delete;

// grad_h(x) . (f(x) + g(x) u)
double h_dot(const ConstraintFunction& cf, const ControlAffineSystem& sys,
             const Vec& x, const Vec& u);

// Central finite differences with per-coordinate step
// eps * max(1, |x_i|). Used as a test oracle and as the fallback when a
// user-supplied system lacks analytic Jacobians.
Mat fd_jacobian(const StateFn& fn, const Vec& x, double eps = 1e-6);
Vec fd_gradient(const ScalarFn& fn, const Vec& x, double eps = 1e-6);

// Wraps (f, g) with finite-difference jac_f / jac_g_cols. Lower accuracy
// than analytic Jacobians; reference systems ship analytic ones.
ControlAffineSystem with_fd_jacobians(int n, int m, StateFn f, StateMatFn g);

}  // namespace bcbf
