#include "bcbf/systems.hpp"

namespace bcbf {

ControlAffineSystem scalar_system() {
  ControlAffineSystem sys;
  sys.n = 1;
  sys.m = 1;
  sys.f = [](const Vec& x) -> Vec { return Vec::Constant(1, x[0] * x[0] * x[0]); };
  sys.g = [](const Vec&) -> Mat { return Mat::Constant(1, 1, 1.0); };
  sys.jac_f = [](const Vec& x) -> Mat {
    return Mat::Constant(1, 1, 3.0 * x[0] * x[0]);
  };
  sys.jac_g_cols = {[](const Vec&) -> Mat { return Mat::Zero(1, 1); }};
  return sys;
}

ConstraintFunction scalar_constraint() {
  ConstraintFunction cf;
  cf.h = [](const Vec& x) { return 1.0 - x[0] * x[0]; };
  cf.grad_h = [](const Vec& x) -> Vec { return Vec::Constant(1, -2.0 * x[0]); };
  return cf;
}

BackupPair scalar_backup_pair(const ScalarParams& params) {
  const Mat A = Mat::Constant(1, 1, -params.gain);
  const Vec x_star = Vec::Constant(1, params.x_star);
  return make_full_state_pair(scalar_system(), A, x_star, params.input_box(),
                              params.c, Mat::Identity(1, 1));
}

}  // namespace bcbf
