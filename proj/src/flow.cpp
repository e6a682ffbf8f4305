#include "bcbf/flow.hpp"

#include <cmath>

namespace bcbf {

namespace {

constexpr double kDivergenceNorm = 1e6;

struct Stage {
  Vec dx;
  Mat dphi;
};

Stage closed_loop(const ControlAffineSystem& sys, const BackupLaw& law,
                  const Vec& x, const Mat& phi, bool with_sens) {
  Stage s;
  const Vec u = law.input(x);
  const Mat g = sys.g(x);
  s.dx = sys.f(x) + g * u;
  if (with_sens) {
    Mat J = sys.jac_f(x);
    for (int j = 0; j < sys.m; ++j) J += sys.jac_g_cols[j](x) * u[j];
    J += g * law.jacobian(x);
    s.dphi = J * phi;
  }
  return s;
}

}  // namespace

FlowRollout rollout(const ControlAffineSystem& sys, const BackupLaw& law,
                    const Vec& x0, double T, int nodes,
                    bool with_sensitivities) {
  sys.check_state(x0);
  if (T < 0.0 || !std::isfinite(T))
    throw ConfigError("rollout horizon must be finite and nonnegative");
  if (T == 0.0 && nodes != 1)
    throw ConfigError("a zero-horizon rollout has exactly one node");
  if (T > 0.0 && nodes < 2)
    throw ConfigError("a positive-horizon rollout needs at least two nodes");

  FlowRollout out;
  out.thetas.resize(nodes);
  out.states.reserve(nodes);
  out.sensitivities.reserve(nodes);
  out.saturation_flags.reserve(nodes);

  Vec x = x0;
  Mat phi = Mat::Identity(sys.n, sys.n);
  const double dtheta = nodes > 1 ? T / (nodes - 1) : 0.0;
  for (int k = 0; k < nodes; ++k) {
    const double theta = k * dtheta;
    out.thetas[k] = theta;
    if (!x.allFinite() || x.norm() > kDivergenceNorm)
      throw DivergenceError("backup flow diverged", theta);
    out.states.push_back(x);
    out.sensitivities.push_back(with_sensitivities ? phi : Mat());
    out.saturation_flags.push_back(law.saturation(x));
    if (k + 1 == nodes) break;

    const double h = dtheta;
    try {
      Stage s1 = closed_loop(sys, law, x, phi, with_sensitivities);
      Stage s2 = closed_loop(sys, law, x + 0.5 * h * s1.dx,
                             with_sensitivities ? (phi + 0.5 * h * s1.dphi) : phi,
                             with_sensitivities);
      Stage s3 = closed_loop(sys, law, x + 0.5 * h * s2.dx,
                             with_sensitivities ? (phi + 0.5 * h * s2.dphi) : phi,
                             with_sensitivities);
      Stage s4 = closed_loop(sys, law, x + h * s3.dx,
                             with_sensitivities ? (phi + h * s3.dphi) : phi,
                             with_sensitivities);
      x += (h / 6.0) * (s1.dx + 2.0 * s2.dx + 2.0 * s3.dx + s4.dx);
      if (with_sensitivities)
        phi += (h / 6.0) * (s1.dphi + 2.0 * s2.dphi + 2.0 * s3.dphi + s4.dphi);
    } catch (const SingularityError&) {
      // A stage left the domain where the closed loop is defined (for
      // example an overflowing drift); that is a divergence of the flow
      // somewhere before the node being integrated toward.
      throw DivergenceError("backup flow left the model domain",
                            theta + dtheta);
    }
  }
  return out;
}

double sensitivity_vs_finite_difference(const ControlAffineSystem& sys,
                                        const BackupLaw& law, const Vec& x0,
                                        double T, int nodes, double eps) {
  FlowRollout base = rollout(sys, law, x0, T, nodes, true);
  double worst = 0.0;
  for (int i = 0; i < sys.n; ++i) {
    const double step = eps * std::max(1.0, std::abs(x0[i]));
    Vec xp = x0, xm = x0;
    xp[i] += step;
    xm[i] -= step;
    FlowRollout plus = rollout(sys, law, xp, T, nodes, false);
    FlowRollout minus = rollout(sys, law, xm, T, nodes, false);
    for (int k = 0; k < nodes; ++k) {
      const Vec col_fd = (plus.states[k] - minus.states[k]) / (2.0 * step);
      for (int r = 0; r < sys.n; ++r) {
        const double an = base.sensitivities[k](r, i);
        const double err = std::abs(an - col_fd[r]) / (1.0 + std::abs(an));
        worst = std::max(worst, err);
      }
    }
  }
  return worst;
}

}  // namespace bcbf
