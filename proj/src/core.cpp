#include "bcbf/core.hpp"

#include <cmath>
#include <string>

namespace bcbf {

void ControlAffineSystem::check_state(const Vec& x) const {
  if (x.size() != n)
    throw ConfigError("state has dimension " + std::to_string(x.size()) +
                      ", system expects " + std::to_string(n));
}

void ControlAffineSystem::check_input(const Vec& u) const {
  if (u.size() != m)
    throw ConfigError("input has dimension " + std::to_string(u.size()) +
                      ", system expects " + std::to_string(m));
}

InputBox::InputBox(Vec lo, Vec hi) : u_min(std::move(lo)), u_max(std::move(hi)) {
  if (u_min.size() != u_max.size())
    throw ConfigError("input box bounds have mismatched dimensions");
  if (u_min.size() == 0) throw ConfigError("input box is empty");
  for (int i = 0; i < u_min.size(); ++i) {
    if (!std::isfinite(u_min[i]) || !std::isfinite(u_max[i]))
      throw ConfigError("input box bounds must be finite");
    if (!(u_min[i] < u_max[i]))
      throw ConfigError("input box requires u_min < u_max componentwise");
  }
}

InputBox::InputBox(double lo, double hi)
    : InputBox(Vec::Constant(1, lo), Vec::Constant(1, hi)) {}

bool InputBox::contains(const Vec& u, double tol) const {
  if (u.size() != u_min.size()) return false;
  for (int i = 0; i < u.size(); ++i)
    if (u[i] < u_min[i] - tol || u[i] > u_max[i] + tol) return false;
  return true;
}

Vec InputBox::clamp(const Vec& u) const {
  return u.cwiseMax(u_min).cwiseMin(u_max);
}

ClassKappa ClassKappa::linear(double coefficient) {
  if (!(coefficient > 0.0) || !std::isfinite(coefficient))
    throw ConfigError("class-kappa coefficient must be positive and finite");
  return ClassKappa{coefficient};
}

Vec closed_loop_rhs(const ControlAffineSystem& sys, const StateFn& k,
                    const Vec& x) {
  sys.check_state(x);
  Vec u = k(x);
  sys.check_input(u);
  return sys.f(x) + sys.g(x) * u;
}

double h_dot(const ConstraintFunction& cf, const ControlAffineSystem& sys,
             const Vec& x, const Vec& u) {
  sys.check_state(x);
  sys.check_input(u);
  return cf.grad_h(x).dot(sys.f(x) + sys.g(x) * u);
}

Mat fd_jacobian(const StateFn& fn, const Vec& x, double eps) {
  const Vec fx = fn(x);
  Mat J(fx.size(), x.size());
  Vec xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double step = eps * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    J.col(i) = (fn(xp) - fn(xm)) / (2.0 * step);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return J;
}

Vec fd_gradient(const ScalarFn& fn, const Vec& x, double eps) {
  Vec grad(x.size());
  Vec xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double step = eps * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + step;
    xm[i] = x[i] - step;
    grad[i] = (fn(xp) - fn(xm)) / (2.0 * step);
    xp[i] = x[i];
    xm[i] = x[i];
  }
  return grad;
}

ControlAffineSystem with_fd_jacobians(int n, int m, StateFn f, StateMatFn g) {
  ControlAffineSystem sys;
  sys.n = n;
  sys.m = m;
  sys.f = f;
  sys.g = g;
  sys.jac_f = [f](const Vec& x) { return fd_jacobian(f, x); };
  sys.jac_g_cols.reserve(m);
  for (int j = 0; j < m; ++j) {
    sys.jac_g_cols.push_back([g, j](const Vec& x) {
      return fd_jacobian([&g, j](const Vec& y) -> Vec { return g(y).col(j); },
                         x);
    });
  }
  return sys;
}

}  // namespace bcbf
