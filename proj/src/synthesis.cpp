#include "bcbf/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace bcbf {

namespace {

constexpr double kInvarianceTol = 1e-9;  // slack on hb_dot at the boundary

Vec solve_square(const Mat& M, const Vec& rhs, const char* what) {
  Vec sol = M.partialPivLu().solve(rhs);
  if (!sol.allFinite() || (M * sol - rhs).norm() > 1e-8 * (1.0 + rhs.norm()))
    throw SingularityError(what);
  return sol;
}

}  // namespace

SaturationResult saturate(const Vec& u, const InputBox& box) {
  if (u.size() != box.dim())
    throw ConfigError("saturate: input dimension does not match the box");
  SaturationResult out;
  out.u = u;
  out.flags.assign(u.size(), false);
  for (int i = 0; i < u.size(); ++i) {
    if (u[i] > box.u_max[i]) {
      out.u[i] = box.u_max[i];
      out.flags[i] = true;
    } else if (u[i] < box.u_min[i]) {
      out.u[i] = box.u_min[i];
      out.flags[i] = true;
    }
  }
  return out;
}

// (1 + |z|^kappa)^power with |z|^kappa factored out when |z| > 1, so large
// sharpness never overflows the intermediate power.
static double smooth_denominator(double z, double kappa, double power) {
  const double az = std::abs(z);
  if (az <= 1.0) return std::pow(1.0 + std::pow(az, kappa), power);
  return std::pow(az, kappa * power) *
         std::pow(1.0 + std::pow(1.0 / az, kappa), power);
}

double saturate_smooth_slope(double z, double kappa) {
  return smooth_denominator(z, kappa, -(kappa + 1.0) / kappa);
}

Vec saturate_smooth(const Vec& u, const InputBox& box, double kappa) {
  if (u.size() != box.dim())
    throw ConfigError("saturate_smooth: input dimension does not match the box");
  if (!(kappa > 1.0))
    throw ConfigError("saturate_smooth: sharpness must exceed 1");
  Vec out(u.size());
  for (int i = 0; i < u.size(); ++i) {
    const double mid = 0.5 * (box.u_min[i] + box.u_max[i]);
    const double hw = 0.5 * (box.u_max[i] - box.u_min[i]);
    const double z = (u[i] - mid) / hw;
    const double blended = mid + hw * z * smooth_denominator(z, kappa, -1.0 / kappa);
    // One ulp of rounding in the |z| > 1 branch may cross the bound.
    out[i] = std::min(std::max(blended, box.u_min[i]), box.u_max[i]);
  }
  return out;
}

Mat assemble_A(const std::vector<Mat>& gains, int p) {
  const int r = static_cast<int>(gains.size());
  if (r < 1 || p < 1) throw ConfigError("assemble_A: need r >= 1 gains, p >= 1");
  for (const Mat& K : gains)
    if (K.rows() != p || K.cols() != p)
      throw ConfigError("assemble_A: every gain must be p-by-p");
  Mat A = Mat::Zero(r * p, r * p);
  for (int i = 0; i + 1 < r; ++i)
    A.block(i * p, (i + 1) * p, p, p) = Mat::Identity(p, p);
  for (int j = 0; j < r; ++j)
    A.block((r - 1) * p, j * p, p, p) = -gains[j];
  return A;
}

Mat assemble_A(const std::vector<double>& gains) {
  std::vector<Mat> blocks;
  blocks.reserve(gains.size());
  for (double k : gains) blocks.push_back(Mat::Constant(1, 1, k));
  return assemble_A(blocks, 1);
}

Vec feedback_lin_full_state(const ControlAffineSystem& sys, const Mat& A,
                            const Vec& x_star, const Vec& x) {
  sys.check_state(x);
  if (sys.n != sys.m)
    throw ConfigError("full-state linearization needs square g");
  if (A.rows() != sys.n || A.cols() != sys.n || x_star.size() != sys.n)
    throw ConfigError("full-state linearization: dimension mismatch");
  return solve_square(sys.g(x), -sys.f(x) + A * (x - x_star),
                      "g(x) is singular at the evaluation point");
}

Vec feedback_lin_output(const ControlAffineSystem& sys, const OutputMap& map,
                        const std::vector<Mat>& gains, const Vec& x_star,
                        const Vec& x) {
  sys.check_state(x);
  if (map.p != sys.m)
    throw ConfigError("output linearization needs as many outputs as inputs");
  if (static_cast<int>(gains.size()) != map.r)
    throw ConfigError("output linearization needs one gain per derivative order");
  Vec v = -map.lie[map.r - 1](x);
  v -= gains[0] * (map.y(x) - map.y(x_star));
  for (int i = 1; i < map.r; ++i) v -= gains[i] * map.lie[i - 1](x);
  return solve_square(map.decoupling(x), v,
                      "decoupling matrix is singular at the evaluation point");
}

EquilibriumReport validate_equilibrium(const ControlAffineSystem& sys,
                                       const ConstraintFunction& cf,
                                       const InputBox& box,
                                       const Vec& x_star) {
  sys.check_state(x_star);
  const Vec fx = sys.f(x_star);
  const Mat gx = sys.g(x_star);
  EquilibriumReport rep;
  rep.u_star = gx.colPivHouseholderQr().solve(-fx);
  rep.residual = (fx + gx * rep.u_star).norm();
  if (rep.residual > 1e-8 * (1.0 + fx.norm()))
    throw SynthesisError("no input holds the candidate center stationary");
  rep.h_at_center = cf.h(x_star);
  rep.inside_safe_set = rep.h_at_center > 0.0;
  double margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < box.dim(); ++i)
    margin = std::min({margin, rep.u_star[i] - box.u_min[i],
                       box.u_max[i] - rep.u_star[i]});
  rep.box_margin = margin;
  rep.inside_box = margin > 0.0;
  return rep;
}

Vec BackupPair::kb(const Vec& x) const {
  const Vec raw = k_fl(x);
  return smooth_sat ? saturate_smooth(raw, box, smooth_kappa)
                    : saturate(raw, box).u;
}

std::vector<bool> BackupPair::sat_flags(const Vec& x) const {
  return saturate(k_fl(x), box).flags;
}

Mat BackupPair::kb_jac(const Vec& x) const {
  const Vec raw = k_fl(x);
  Mat J = k_fl_jac(x);
  if (smooth_sat) {
    for (int i = 0; i < raw.size(); ++i) {
      const double mid = 0.5 * (box.u_min[i] + box.u_max[i]);
      const double hw = 0.5 * (box.u_max[i] - box.u_min[i]);
      J.row(i) *= saturate_smooth_slope((raw[i] - mid) / hw, smooth_kappa);
    }
    return J;
  }
  // Hard clamp: a component sitting exactly on a bound takes the
  // saturated-side (zero) derivative.
  for (int i = 0; i < raw.size(); ++i)
    if (raw[i] >= box.u_max[i] || raw[i] <= box.u_min[i]) J.row(i).setZero();
  return J;
}

double BackupPair::h_b(const Vec& x) const {
  const Vec e = eta(x);
  return c - e.dot(P * e);
}

Vec BackupPair::grad_h_b(const Vec& x) const {
  return -2.0 * (eta_jac(x).transpose() * (P * eta(x)));
}

BackupLaw BackupPair::law() const {
  BackupPair self = *this;
  BackupLaw law;
  law.input = [self](const Vec& x) { return self.kb(x); };
  law.jacobian = [self](const Vec& x) { return self.kb_jac(x); };
  law.saturation = [self](const Vec& x) { return self.sat_flags(x); };
  return law;
}

ConstraintFunction build_hb(const BackupPair& pair) {
  BackupPair self = pair;
  ConstraintFunction cf;
  cf.h = [self](const Vec& x) { return self.h_b(x); };
  cf.grad_h = [self](const Vec& x) { return self.grad_h_b(x); };
  return cf;
}

BackupPair make_full_state_pair(const ControlAffineSystem& sys, const Mat& A,
                                const Vec& x_star, const InputBox& box,
                                double c, const Mat& Q) {
  if (sys.n != sys.m)
    throw ConfigError("full-state pair needs square g");
  if (!(c > 0.0)) throw ConfigError("level c must be positive");
  CtleSolution ctle = solve_ctle(A, Q);

  BackupPair pair;
  pair.eta_dim = sys.n;
  pair.x_star = x_star;
  pair.A = A;
  pair.P = ctle.P;
  pair.Q = Q;
  pair.c = c;
  pair.box = box;
  pair.u_star = solve_square(sys.g(x_star), -sys.f(x_star),
                             "g is singular at the center");

  pair.eta = [x_star](const Vec& x) -> Vec { return x - x_star; };
  const Mat I = Mat::Identity(sys.n, sys.n);
  pair.eta_jac = [I](const Vec&) { return I; };
  pair.embed_eta = [x_star](const Vec& e) -> Vec { return x_star + e; };

  ControlAffineSystem s = sys;
  Vec xs = x_star;
  pair.k_fl = [s, A, xs](const Vec& x) {
    return feedback_lin_full_state(s, A, xs, x);
  };
  // Differentiate g(x) k(x) = -f(x) + A (x - x*):
  // grad k = g^{-1} (A - jac_f - sum_b k_b * jac_g_cols[b]).
  pair.k_fl_jac = [s, A, xs](const Vec& x) -> Mat {
    const Vec u = feedback_lin_full_state(s, A, xs, x);
    Mat rhs = A - s.jac_f(x);
    for (int b = 0; b < s.m; ++b) rhs -= u[b] * s.jac_g_cols[b](x);
    return s.g(x).partialPivLu().solve(rhs);
  };
  return pair;
}

BackupPair make_output_pair(const ControlAffineSystem& sys,
                            const OutputMap& map,
                            const std::vector<Mat>& gains, const Vec& x_star,
                            const InputBox& box, double c, const Mat& Q,
                            std::optional<StateMatFn> k_fl_jac,
                            std::optional<StateFn> embed_eta) {
  if (map.p != sys.m)
    throw ConfigError("output pair needs as many outputs as inputs");
  if (static_cast<int>(map.lie.size()) != map.r ||
      static_cast<int>(map.lie_jacobians.size()) != map.r)
    throw ConfigError("output map must list r Lie derivatives and r Jacobians");
  if (!(c > 0.0)) throw ConfigError("level c must be positive");
  const Mat A = assemble_A(gains, map.p);
  CtleSolution ctle = solve_ctle(A, Q);

  BackupPair pair;
  pair.eta_dim = map.p * map.r;
  pair.x_star = x_star;
  pair.A = A;
  pair.P = ctle.P;
  pair.Q = Q;
  pair.c = c;
  pair.box = box;

  const Vec fx = sys.f(x_star);
  const Mat gx = sys.g(x_star);
  pair.u_star = gx.colPivHouseholderQr().solve(-fx);
  if ((fx + gx * pair.u_star).norm() > 1e-8 * (1.0 + fx.norm()))
    throw SynthesisError("no input holds the candidate center stationary");

  OutputMap m = map;
  Vec xs = x_star;
  pair.eta = [m, xs](const Vec& x) -> Vec {
    Vec e(m.p * m.r);
    e.head(m.p) = m.y(x) - m.y(xs);
    for (int i = 1; i < m.r; ++i) e.segment(i * m.p, m.p) = m.lie[i - 1](x);
    return e;
  };
  pair.eta_jac = [m](const Vec& x) -> Mat {
    Mat J(m.p * m.r, x.size());
    for (int i = 0; i < m.r; ++i)
      J.middleRows(i * m.p, m.p) = m.lie_jacobians[i](x);
    return J;
  };
  if (pair.eta(x_star).norm() > 1e-9)
    throw SynthesisError("output coordinates do not vanish at the center");

  ControlAffineSystem s = sys;
  std::vector<Mat> ks = gains;
  pair.k_fl = [s, m, ks, xs](const Vec& x) {
    return feedback_lin_output(s, m, ks, xs, x);
  };
  if (k_fl_jac) {
    pair.k_fl_jac = *k_fl_jac;
  } else {
    StateFn kf = pair.k_fl;
    pair.k_fl_jac = [kf](const Vec& x) { return fd_jacobian(kf, x); };
  }
  if (embed_eta) pair.embed_eta = *embed_eta;
  return pair;
}

namespace {

// Deterministic direction set on the unit sphere of the eta space; the
// one-dimensional "sphere" alternates between its two points.
std::vector<Vec> sphere_directions(int dim, int count, std::uint64_t seed) {
  std::vector<Vec> dirs;
  dirs.reserve(count);
  if (dim == 1) {
    for (int i = 0; i < count; ++i)
      dirs.push_back(Vec::Constant(1, i % 2 == 0 ? 1.0 : -1.0));
    return dirs;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  while (static_cast<int>(dirs.size()) < count) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    const double norm = v.norm();
    if (norm > 1e-12) dirs.push_back(v / norm);
  }
  return dirs;
}

// Boundary states of {eta : eta^T P eta = c}: unit directions mapped
// through the inverse transposed Cholesky factor of P, scaled by sqrt(c),
// then embedded into the state space.
std::vector<Vec> boundary_states(const BackupPair& pair, double c,
                                 const std::vector<Vec>& dirs) {
  if (!pair.embed_eta)
    throw SynthesisError("pair lacks an eta-space embedding for sampling");
  Eigen::LLT<Mat> llt(pair.P);
  if (llt.info() != Eigen::Success)
    throw PreconditionError("barrier weight matrix is not positive definite");
  const Mat L = llt.matrixL();
  std::vector<Vec> states;
  states.reserve(dirs.size());
  for (const Vec& s : dirs) {
    Vec eta = L.transpose().triangularView<Eigen::Upper>().solve(s);
    eta *= std::sqrt(c);
    states.push_back(pair.embed_eta(eta));
  }
  return states;
}

double min_box_margin(const Vec& u, const InputBox& box) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < box.dim(); ++i)
    m = std::min({m, u[i] - box.u_min[i], box.u_max[i] - u[i]});
  return m;
}

int argmin(const Vec& v) {
  int idx = 0;
  v.minCoeff(&idx);
  return idx;
}

}  // namespace

ValidityReport verify_validity(const ControlAffineSystem& sys,
                               const BackupPair& pair,
                               const ConstraintFunction& cf,
                               const ValidityCheckConfig& cfg) {
  const auto dirs =
      sphere_directions(pair.eta_dim, cfg.boundary_samples, cfg.seed);
  const auto states = boundary_states(pair, pair.c, dirs);
  const int nb = static_cast<int>(states.size());

  Vec h_vals(nb), hbdot_vals(nb), sat_margins(nb);
  for_each_index(nb, cfg.exec, [&](std::ptrdiff_t i) {
    const Vec& x = states[i];
    h_vals[i] = cf.h(x);
    sat_margins[i] = min_box_margin(pair.k_fl(x), pair.box);
    const Vec u = pair.kb(x);
    hbdot_vals[i] = pair.grad_h_b(x).dot(sys.f(x) + sys.g(x) * u);
  });

  // Input-bound check over a sampled region: by default the box spanned by
  // the states embedded from twice the level set, inflated by 10%.
  Vec lo = cfg.region_lo, hi = cfg.region_hi;
  if (lo.size() == 0 || hi.size() == 0) {
    const auto wide = boundary_states(pair, 4.0 * pair.c, dirs);
    lo = wide.front();
    hi = wide.front();
    for (const Vec& x : wide) {
      lo = lo.cwiseMin(x);
      hi = hi.cwiseMax(x);
    }
    const Vec span = (hi - lo) * 0.05;
    lo -= span;
    hi += span;
  }
  std::mt19937_64 rng(cfg.seed + 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Vec> region(cfg.region_samples);
  for (auto& x : region) {
    x.resize(lo.size());
    for (int i = 0; i < lo.size(); ++i)
      x[i] = lo[i] + (hi[i] - lo[i]) * unit(rng);
  }
  Vec input_margins(cfg.region_samples);
  for_each_index(cfg.region_samples, cfg.exec, [&](std::ptrdiff_t i) {
    input_margins[i] = min_box_margin(pair.kb(region[i]), pair.box);
  });

  ValidityReport rep;
  rep.worst_h = h_vals.minCoeff();
  rep.worst_hb_dot = hbdot_vals.minCoeff();
  rep.worst_saturation_margin = sat_margins.minCoeff();
  rep.worst_input_margin = input_margins.minCoeff();
  rep.worst_h_point = states[argmin(h_vals)];
  rep.worst_hb_dot_point = states[argmin(hbdot_vals)];
  rep.c1_safe_subset = rep.worst_h >= 0.0;
  rep.c2_inputs_in_box = rep.worst_input_margin >= 0.0;
  rep.c3_invariant = rep.worst_hb_dot >= -kInvarianceTol;
  rep.no_saturation = rep.worst_saturation_margin > 0.0;
  return rep;
}

bool accepts_level(const BackupPair& pair, const ConstraintFunction& cf,
                   double c, const ValidityCheckConfig& cfg) {
  if (!(c >= 0.0)) throw ConfigError("level must be nonnegative");
  const auto dirs =
      sphere_directions(pair.eta_dim, cfg.boundary_samples, cfg.seed);
  const auto states = boundary_states(pair, c, dirs);
  const int nb = static_cast<int>(states.size());
  Vec margins(nb);
  for_each_index(nb, cfg.exec, [&](std::ptrdiff_t i) {
    const Vec& x = states[i];
    const double h = cf.h(x);
    const double sat = min_box_margin(pair.k_fl(x), pair.box);
    // Positive iff h > 0 and k_fl strictly inside the box.
    margins[i] = std::min(h, sat);
  });
  return margins.minCoeff() > 0.0;
}

double max_c(const BackupPair& pair, const ConstraintFunction& cf,
             const ValidityCheckConfig& cfg, double rel_tol) {
  double lo = std::max(pair.c, 1e-6);
  if (!accepts_level(pair, cf, lo, cfg)) {
    // The candidate level itself fails; search below it.
    double hi = lo;
    lo = 0.0;
    for (int i = 0; i < 60 && hi > 1e-12; ++i) {
      const double mid = hi / 2.0;
      if (accepts_level(pair, cf, mid, cfg)) {
        lo = mid;
        break;
      }
      hi = mid;
    }
    if (lo == 0.0) throw SynthesisError("no positive level is admissible");
    double bad = hi;
    while (bad - lo > rel_tol * bad) {
      const double mid = 0.5 * (lo + bad);
      (accepts_level(pair, cf, mid, cfg) ? lo : bad) = mid;
    }
    return 0.95 * lo;
  }
  double hi = lo;
  for (int i = 0; i < 60; ++i) {
    if (!accepts_level(pair, cf, hi * 2.0, cfg)) break;
    hi *= 2.0;
    if (hi > 1e12)
      throw SynthesisError("level search did not find a rejecting bound");
  }
  double bad = hi * 2.0;
  while (bad - hi > rel_tol * bad) {
    const double mid = 0.5 * (hi + bad);
    (accepts_level(pair, cf, mid, cfg) ? hi : bad) = mid;
  }
  return 0.95 * hi;
}

}  // namespace bcbf
