#include <array>
#include <cmath>

#include "bcbf/systems.hpp"

namespace bcbf {

namespace {

struct Dyn {
  Vec f{3};
  Mat g{3, 4};
  Mat jf{3, 3};
  std::array<Mat, 4> jg;
};

// Forces and force partials share the slip-angle chain rule, so the whole
// dynamics block is evaluated in one place.
Dyn eval_dynamics(const VehicleParams& p, double delta, const Vec& x,
                  bool with_jacobians) {
  const double vx = x[0], beta = x[1], omega = x[2];
  if (!(vx > 1e-3))
    throw SingularityError("vehicle dynamics need positive forward speed");

  const double m = p.mass, izz = p.inertia_z, w = p.half_track;
  const double af = p.a_front, ar = p.a_rear, cf = p.c_front, cr = p.c_rear;
  const double t = std::tan(beta), sec2 = 1.0 + t * t;
  const double vy = vx * t;
  const double cd = std::cos(delta), sd = std::sin(delta);
  const double cb = std::cos(beta), sb = std::sin(beta);
  const double nf = vy + af * omega, nr = vy - ar * omega;
  const double dl = vx - w * omega, dr = vx + w * omega;

  const double a_fl = std::atan(nf / dl) - delta;
  const double a_fr = std::atan(nf / dr) - delta;
  const double a_rl = std::atan(nr / dl);
  const double a_rr = std::atan(nr / dr);
  const double f_fl = -cf * a_fl, f_fr = -cf * a_fr;
  const double f_rl = -cr * a_rl, f_rr = -cr * a_rr;
  const double sum_f = f_fl + f_fr, sum_r = f_rl + f_rr, dif_f = f_fl - f_fr;

  const double bf = std::cos(delta - beta);
  const double e = cb / (m * vx);

  Dyn d;
  d.f << omega * vx * t - sd * sum_f / m,
      -omega + e * (sum_f * bf + sum_r * cb),
      (dif_f * w * sd + sum_f * af * cd - sum_r * ar) / izz;

  const double g1 = cb * std::sin(delta - beta) / (m * vx);
  const double g2 = -cb * sb / (m * vx);
  const double g3 = (af * sd - w * cd) / izz;
  const double g4 = (af * sd + w * cd) / izz;
  d.g << cd / m, cd / m, 1.0 / m, 1.0 / m,
      g1, g1, g2, g2,
      g3, g4, -w / izz, w / izz;

  if (!with_jacobians) return d;

  // d alpha / d(vx, beta, omega) for atan(N/D) with N' and D' in omega.
  auto slip_partials = [&](double n, double dd, double dn_domega,
                           double dd_domega) -> Eigen::Vector3d {
    const double denom = dd * dd + n * n;
    return {(dd * t - n) / denom, dd * vx * sec2 / denom,
            (dd * dn_domega - n * dd_domega) / denom};
  };
  const Eigen::Vector3d dfl = -cf * slip_partials(nf, dl, af, -w);
  const Eigen::Vector3d dfr = -cf * slip_partials(nf, dr, af, w);
  const Eigen::Vector3d drl = -cr * slip_partials(nr, dl, -ar, -w);
  const Eigen::Vector3d drr = -cr * slip_partials(nr, dr, -ar, w);
  const Eigen::Vector3d dsum_f = dfl + dfr;
  const Eigen::Vector3d dsum_r = drl + drr;
  const Eigen::Vector3d ddif_f = dfl - dfr;

  d.jf.row(0) << omega * t - sd * dsum_f[0] / m,
      omega * vx * sec2 - sd * dsum_f[1] / m,
      vx * t - sd * dsum_f[2] / m;

  const double big_t = sum_f * bf + sum_r * cb;
  Eigen::Vector3d dbig_t = dsum_f * bf + dsum_r * cb;
  dbig_t[1] += sum_f * std::sin(delta - beta) - sum_r * sb;
  d.jf.row(1) << -e / vx * big_t + e * dbig_t[0],
      -sb / (m * vx) * big_t + e * dbig_t[1],
      -1.0 + e * dbig_t[2];

  d.jf.row(2) = ((ddif_f * w * sd + dsum_f * af * cd - dsum_r * ar) / izz)
                    .transpose();

  Mat jg_front = Mat::Zero(3, 3);
  jg_front(1, 0) = -g1 / vx;
  jg_front(1, 1) = -std::cos(delta - 2.0 * beta) / (m * vx);
  Mat jg_rear = Mat::Zero(3, 3);
  jg_rear(1, 0) = -g2 / vx;
  jg_rear(1, 1) = -std::cos(2.0 * beta) / (m * vx);
  d.jg = {jg_front, jg_front, jg_rear, jg_rear};
  return d;
}

}  // namespace

InputBox VehicleParams::input_box() const {
  Vec lo(4), hi(4);
  lo << -f_max_fl, -f_max_fr, -f_max_rl, -f_max_rr;
  hi.setZero();
  return InputBox(lo, hi);
}

void VehicleParams::validate() const {
  if (!(mass > 0.0 && inertia_z > 0.0 && half_track > 0.0 && a_front > 0.0 &&
        a_rear > 0.0 && c_front > 0.0 && c_rear > 0.0))
    throw ConfigError("vehicle geometry and stiffness must be positive");
  if (!(f_max_fl > 0.0 && f_max_fr > 0.0 && f_max_rl > 0.0 && f_max_rr > 0.0))
    throw ConfigError("vehicle force bounds must be positive");
  if (!(beta_cr > 0.0 && omega_cr > 0.0 && v_stop > 0.0 && v_x0 > v_stop))
    throw ConfigError("vehicle limits must be positive with v_x0 above v_stop");
  if (!(p_beta > 0.0 && k_omega > 0.0 && c > 0.0))
    throw ConfigError("vehicle backup weights must be positive");
  if (!(c_rear * a_rear > c_front * a_front))
    throw ConfigError(
        "braking target needs c_rear * a_rear > c_front * a_front");
}

ControlAffineSystem vehicle_system(const VehicleParams& params, double delta) {
  params.validate();
  VehicleParams p = params;
  ControlAffineSystem sys;
  sys.n = 3;
  sys.m = 4;
  sys.f = [p, delta](const Vec& x) -> Vec {
    return eval_dynamics(p, delta, x, false).f;
  };
  sys.g = [p, delta](const Vec& x) -> Mat {
    return eval_dynamics(p, delta, x, false).g;
  };
  sys.jac_f = [p, delta](const Vec& x) -> Mat {
    return eval_dynamics(p, delta, x, true).jf;
  };
  for (int j = 0; j < 4; ++j)
    sys.jac_g_cols.push_back([p, delta, j](const Vec& x) -> Mat {
      return eval_dynamics(p, delta, x, true).jg[j];
    });
  return sys;
}

Vec tire_slip_angles(const VehicleParams& params, double delta, const Vec& x) {
  const double vx = x[0], beta = x[1], omega = x[2];
  if (!(vx > 1e-3))
    throw SingularityError("slip angles need positive forward speed");
  const double vy = vx * std::tan(beta);
  const double dl = vx - params.half_track * omega;
  const double dr = vx + params.half_track * omega;
  Vec a(4);
  a << std::atan((vy + params.a_front * omega) / dl) - delta,
      std::atan((vy + params.a_front * omega) / dr) - delta,
      std::atan((vy - params.a_rear * omega) / dl),
      std::atan((vy - params.a_rear * omega) / dr);
  return a;
}

double driver_steering(const VehicleParams& params, double y_e, double psi) {
  return -params.k_lane * y_e - params.k_heading * psi;
}

ConstraintFunction vehicle_constraint(const VehicleParams& params) {
  const double bc = params.beta_cr, oc = params.omega_cr;
  ConstraintFunction cf;
  cf.h = [bc, oc](const Vec& x) {
    const double b = x[1] / bc, o = x[2] / oc;
    return 1.0 - b * b - o * o;
  };
  cf.grad_h = [bc, oc](const Vec& x) -> Vec {
    Vec g(3);
    g << 0.0, -2.0 * x[1] / (bc * bc), -2.0 * x[2] / (oc * oc);
    return g;
  };
  return cf;
}

double vehicle_decel_target(const VehicleParams& p, double delta) {
  const double axle_gain =
      (p.a_front + p.a_rear) / (1.0 / p.c_front + 1.0 / p.c_rear);
  return 2.0 / (p.mass * p.half_track) *
         (axle_gain * std::abs(delta) +
          (p.c_rear * p.a_rear - p.c_front * p.a_front) * p.beta_d);
}

double vehicle_beta_star(const VehicleParams& p, double delta) {
  const double b = p.c_front * delta / (p.c_front + p.c_rear);
  if (!(std::abs(b) < p.beta_cr))
    throw SynthesisError("backup center side slip exceeds its critical value");
  return b;
}

BackupPair vehicle_backup_pair(const VehicleParams& params, double delta,
                               double v_x_section) {
  params.validate();
  VehicleParams p = params;
  const double beta_star = vehicle_beta_star(p, delta);
  const double ax = vehicle_decel_target(p, delta);
  const double rl = p.f_max_rl / p.f_max_fl;
  const double rr = p.f_max_rr / p.f_max_fr;

  // Virtual two-input decoupling matrix: rows are the (v_x, omega)
  // components of g compressed onto the front forces with proportional
  // rear allocation.
  const double cd = std::cos(delta), sd = std::sin(delta);
  const double g3 = (p.a_front * sd - p.half_track * cd) / p.inertia_z;
  const double g4 = (p.a_front * sd + p.half_track * cd) / p.inertia_z;
  Mat M(2, 2);
  M << (cd + rl) / p.mass, (cd + rr) / p.mass,
      g3 - rl * p.half_track / p.inertia_z, g4 + rr * p.half_track / p.inertia_z;
  if (std::abs(M.determinant()) < 1e-12)
    throw SingularityError("virtual input matrix is singular");
  const Mat minv = M.inverse();

  BackupPair pair;
  pair.eta_dim = 2;
  pair.box = p.input_box();
  pair.c = p.c;
  pair.A = (Mat(2, 2) << 0.0, 0.0, 0.0, -p.k_omega).finished();
  pair.P = (Mat(2, 2) << p.p_beta, 0.0, 0.0, 1.0 / (2.0 * p.k_omega)).finished();
  pair.Q = Mat::Identity(2, 2);
  pair.x_star = (Vec(3) << v_x_section, beta_star, 0.0).finished();

  pair.eta = [beta_star](const Vec& x) -> Vec {
    Vec e(2);
    e << x[1] - beta_star, x[2];
    return e;
  };
  Mat ej = Mat::Zero(2, 3);
  ej(0, 1) = 1.0;
  ej(1, 2) = 1.0;
  pair.eta_jac = [ej](const Vec&) { return ej; };
  pair.embed_eta = [v_x_section, beta_star](const Vec& e) -> Vec {
    Vec x(3);
    x << v_x_section, beta_star + e[0], e[1];
    return x;
  };

  const double k_omega = p.k_omega;
  pair.k_fl = [p, delta, minv, ax, k_omega, rl, rr](const Vec& x) -> Vec {
    const Dyn d = eval_dynamics(p, delta, x, false);
    Vec v(2);
    v << -d.f[0] - ax, -d.f[2] - k_omega * x[2];
    const Vec front = minv * v;
    Vec u(4);
    u << front[0], front[1], rl * front[0], rr * front[1];
    return u;
  };
  pair.k_fl_jac = [p, delta, minv, k_omega, rl, rr](const Vec& x) -> Mat {
    const Dyn d = eval_dynamics(p, delta, x, true);
    Mat rows(2, 3);
    rows.row(0) = -d.jf.row(0);
    rows.row(1) = -d.jf.row(2);
    rows(1, 2) -= k_omega;
    const Mat front = minv * rows;
    Mat J(4, 3);
    J.row(0) = front.row(0);
    J.row(1) = front.row(1);
    J.row(2) = rl * front.row(0);
    J.row(3) = rr * front.row(1);
    return J;
  };
  pair.u_star = pair.kb(pair.x_star);
  return pair;
}

Vec vehicle_extended_rhs(const VehicleParams& params, const Vec& x6,
                         const Vec& u4) {
  if (x6.size() != 6 || u4.size() != 4)
    throw ConfigError("extended vehicle state is 6-dimensional with 4 inputs");
  const double delta = driver_steering(params, x6[4], x6[5]);
  const Dyn d = eval_dynamics(params, delta, x6.head(3), false);
  const Vec dyn = d.f + d.g * u4;
  const double vx = x6[0], psi = x6[5];
  const double vy = vx * std::tan(x6[1]);
  Vec dx(6);
  dx << dyn[0], dyn[1], dyn[2],
      vx * std::cos(psi) - vy * std::sin(psi),
      vx * std::sin(psi) + vy * std::cos(psi),
      x6[2];
  return dx;
}

}  // namespace bcbf
