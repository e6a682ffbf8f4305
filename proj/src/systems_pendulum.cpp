#include "bcbf/systems.hpp"

#include <cmath>

namespace bcbf {

ControlAffineSystem pendulum_system() {
  ControlAffineSystem sys;
  sys.n = 2;
  sys.m = 1;
  sys.f = [](const Vec& x) -> Vec {
    Vec dx(2);
    dx << x[1], std::sin(x[0]);
    return dx;
  };
  sys.g = [](const Vec&) -> Mat {
    Mat g(2, 1);
    g << 0.0, 1.0;
    return g;
  };
  sys.jac_f = [](const Vec& x) -> Mat {
    Mat J(2, 2);
    J << 0.0, 1.0, std::cos(x[0]), 0.0;
    return J;
  };
  sys.jac_g_cols = {[](const Vec&) -> Mat { return Mat::Zero(2, 2); }};
  return sys;
}

ConstraintFunction pendulum_constraint(const PendulumParams& params) {
  const double k = params.k_slope;
  const double mu = params.mu();
  ConstraintFunction cf;
  const double bound = M_PI / 2.0;
  cf.h = [k, mu, bound](const Vec& x) {
    const double s = x[1] + k * x[0];
    return bound * bound - x[0] * x[0] - s * s / (2.0 * mu);
  };
  cf.grad_h = [k, mu](const Vec& x) -> Vec {
    const double s = x[1] + k * x[0];
    Vec g(2);
    g << -2.0 * x[0] - (k / mu) * s, -s / mu;
    return g;
  };
  return cf;
}

OutputMap pendulum_output_map() {
  OutputMap map;
  map.p = 1;
  map.r = 2;
  map.y = [](const Vec& x) -> Vec { return x.head(1); };
  map.lie = {
      [](const Vec& x) -> Vec { return x.tail(1); },
      [](const Vec& x) -> Vec { return Vec::Constant(1, std::sin(x[0])); },
  };
  map.decoupling = [](const Vec&) -> Mat { return Mat::Constant(1, 1, 1.0); };
  map.lie_jacobians = {
      [](const Vec&) -> Mat {
        Mat J(1, 2);
        J << 1.0, 0.0;
        return J;
      },
      [](const Vec&) -> Mat {
        Mat J(1, 2);
        J << 0.0, 1.0;
        return J;
      },
  };
  return map;
}

Mat pendulum_closed_form_P(double k1, double k2) {
  Mat P(2, 2);
  P << (k1 * (k1 + 1.0) + k2 * k2) / (2.0 * k1 * k2), 1.0 / (2.0 * k1),
      1.0 / (2.0 * k1), (k1 + 1.0) / (2.0 * k1 * k2);
  return P;
}

BackupPair pendulum_backup_pair(const PendulumParams& params) {
  Vec x_star(2);
  x_star << params.x1_star, 0.0;
  const double k1 = params.k1;
  const double k2 = params.k2;
  const double x1s = params.x1_star;
  StateMatFn k_fl_jac = [k1, k2](const Vec& x) -> Mat {
    Mat J(1, 2);
    J << -std::cos(x[0]) - k1, -k2;
    return J;
  };
  StateFn embed = [x1s](const Vec& e) -> Vec {
    Vec x(2);
    x << x1s + e[0], e[1];
    return x;
  };
  std::vector<Mat> gains = {Mat::Constant(1, 1, k1), Mat::Constant(1, 1, k2)};
  return make_output_pair(pendulum_system(), pendulum_output_map(), gains,
                          x_star, params.input_box(), params.c,
                          Mat::Identity(2, 2), k_fl_jac, embed);
}

}  // namespace bcbf
