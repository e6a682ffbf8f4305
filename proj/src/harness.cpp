#include "bcbf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bcbf/flow.hpp"

namespace bcbf {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) throw Error("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot move '" + tmp + "' to '" + path + "'");
  }
}

void apply_saturation_options(BackupPair& pair, const ScenarioConfig& config) {
  pair.smooth_sat = config.smooth_saturation;
  pair.smooth_kappa = config.smooth_kappa;
}

// One zero-order-hold interval: RK4 on the plant at dt/10 with frozen input.
template <typename Rhs>
void integrate_hold(Vec& x, double dt, const Rhs& rhs) {
  const int substeps = 10;
  const double h = dt / substeps;
  for (int s = 0; s < substeps; ++s) {
    const Vec k1 = rhs(x);
    const Vec k2 = rhs(x + 0.5 * h * k1);
    const Vec k3 = rhs(x + 0.5 * h * k2);
    const Vec k4 = rhs(x + h * k3);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
}

void check_plant_state(const Vec& x) {
  if (!x.allFinite() || x.norm() > 1e6) {
    throw DivergenceError("plant state diverged", 0.0);
  }
}

struct StepOutcome {
  Vec u;
  int qp_status = 0;  // 0 optimal, 1 infeasible
  int fallback = 0;
};

StepOutcome controller_step(ControllerId id, const ControlAffineSystem& sys,
                            const ConstraintFunction& cf,
                            const BackupPair& pair, const FilterConfig& filter,
                            const StateFn& k_d, const InputBox& box,
                            const Vec& x) {
  StepOutcome out;
  switch (id) {
    case ControllerId::select_high:
      out.u = box.u_min;
      return out;
    case ControllerId::desired:
      out.u = box.clamp(k_d(x));
      return out;
    case ControllerId::cbf_qp_saturated: {
      const FilterStep s =
          cbf_qp(sys, cf, filter.alpha, k_d, box, BoxMode::clamp_after, x);
      out.u = s.u;
      out.qp_status = s.qp_status == QpStatus::optimal ? 0 : 1;
      return out;
    }
    case ControllerId::backup_cbf_qp: {
      const FilterStep s = backup_cbf_qp(sys, cf, pair, filter, k_d, x);
      out.u = s.u;
      out.qp_status = s.qp_status == QpStatus::optimal ? 0 : 1;
      out.fallback = s.used_fallback ? 1 : 0;
      return out;
    }
    case ControllerId::backup_direct:
      out.u = box.clamp(pair.kb(x));
      return out;
  }
  throw ConfigError("unhandled controller id");
}

TrajectoryLog run_fixed_system(const ScenarioConfig& config) {
  ScenarioPieces pieces = make_pieces(config);
  const InputBox box = config.system == SystemId::scalar
                           ? config.scalar.input_box()
                           : config.pendulum.input_box();
  const int n = pieces.sys.n;
  const int m = pieces.sys.m;

  TrajectoryLog log;
  log.columns.push_back("t");
  for (int i = 0; i < n; ++i) log.columns.push_back("x" + std::to_string(i + 1));
  for (int j = 0; j < m; ++j) log.columns.push_back("u" + std::to_string(j + 1));
  log.columns.insert(log.columns.end(), {"h", "h_b", "qp_status", "fallback"});

  Vec x = config.initial_state;
  Vec last_u = Vec::Zero(m);
  const long long max_steps = std::llround(config.max_time / config.dt);

  const auto push_row = [&](double t, const Vec& u, int status, int fb) {
    std::vector<double> row;
    row.reserve(log.columns.size());
    row.push_back(t);
    for (int i = 0; i < n; ++i) row.push_back(x(i));
    for (int j = 0; j < m; ++j) row.push_back(u(j));
    const double h = pieces.cf.h(x);
    const double hb = pieces.pair.h_b(x);
    row.push_back(h);
    row.push_back(hb);
    row.push_back(static_cast<double>(status));
    row.push_back(static_cast<double>(fb));
    log.rows.push_back(std::move(row));
    log.min_h = std::min(log.min_h, h);
    log.min_h_b = std::min(log.min_h_b, hb);
    log.final_time = t;
  };

  for (long long k = 0; k <= max_steps; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    if (k == max_steps) {
      push_row(t, last_u, 0, 0);
      break;
    }
    StepOutcome step;
    try {
      step = controller_step(config.controller, pieces.sys, pieces.cf,
                             pieces.pair, config.filter, pieces.k_d, box, x);
    } catch (const Error& err) {
      log.error = std::string("control step failed at t=") + fmt(t) + ": " +
                  err.what();
      break;
    }
    last_u = step.u;
    log.infeasible_steps += step.qp_status;
    log.fallback_steps += step.fallback;
    push_row(t, step.u, step.qp_status, step.fallback);

    const Vec u_held = step.u;
    try {
      integrate_hold(x, config.dt, [&](const Vec& s) {
        return Vec(pieces.sys.f(s) + pieces.sys.g(s) * u_held);
      });
      check_plant_state(x);
    } catch (const Error& err) {
      log.diverged = true;
      log.error = std::string("plant diverged at t=") + fmt(t) + ": " +
                  err.what();
      break;
    }
  }
  return log;
}

TrajectoryLog run_vehicle_system(const ScenarioConfig& config) {
  const VehicleParams& p = config.vehicle;
  p.validate();
  const InputBox box = p.input_box();
  const ConstraintFunction cf = vehicle_constraint(p);
  const StateFn k_d = select_high(box);
  const bool backup_based = config.controller == ControllerId::backup_cbf_qp ||
                            config.controller == ControllerId::backup_direct;

  TrajectoryLog log;
  log.columns = {"t",    "v_x",  "beta", "omega",    "x_e",      "y_e",
                 "psi",  "delta", "u_fl", "u_fr",     "u_rl",     "u_rr",
                 "h",    "h_b",   "qp_status", "fallback"};
  log.max_abs_beta = 0.0;
  log.max_abs_omega = 0.0;

  Vec x = config.initial_state;  // [v_x, beta, omega, x_e, y_e, psi]
  Vec last_u = Vec::Zero(4);
  double last_decel = 0.0;
  const long long max_steps = std::llround(config.max_time / config.dt);

  const auto push_row = [&](double t, double delta, const Vec& u, int status,
                            int fb, const BackupPair* pair) {
    const Vec x3 = x.head(3);
    const double h = cf.h(x3);
    const double hb = pair != nullptr
                          ? pair->h_b(x3)
                          : std::numeric_limits<double>::quiet_NaN();
    std::vector<double> row = {t,    x(0), x(1), x(2),
                               x(3), x(4), x(5), delta,
                               u(0), u(1), u(2), u(3),
                               h,    hb,   static_cast<double>(status),
                               static_cast<double>(fb)};
    log.rows.push_back(std::move(row));
    log.min_h = std::min(log.min_h, h);
    if (std::isfinite(hb)) log.min_h_b = std::min(log.min_h_b, hb);
    log.max_abs_beta = std::max(log.max_abs_beta, std::abs(x(1)));
    log.max_abs_omega = std::max(log.max_abs_omega, std::abs(x(2)));
    log.final_time = t;
  };

  const auto finish_stopping = [&]() {
    const double v = x(0);
    double dist = x(3);
    if (last_decel > 1e-9) dist += v * v / (2.0 * last_decel);
    log.stopping_distance = dist;
  };

  double last_delta = 0.0;
  for (long long k = 0; k <= max_steps; ++k) {
    const double t = static_cast<double>(k) * config.dt;
    const bool stopped = x(0) <= p.v_stop;
    if (k == max_steps || stopped) {
      BackupPair* terminal_pair = nullptr;
      BackupPair tp;
      try {
        tp = vehicle_backup_pair(p, last_delta, p.v_x0);
        apply_saturation_options(tp, config);
        terminal_pair = &tp;
      } catch (const Error&) {
        terminal_pair = nullptr;
      }
      push_row(t, last_delta, last_u, 0, 0, terminal_pair);
      if (stopped) finish_stopping();
      break;
    }

    const double delta = driver_steering(p, x(4), x(5));
    last_delta = delta;
    StepOutcome step;
    // The pair is parameterized by the steering angle; its boundary samples
    // embed at the design speed. Baseline controllers keep running when the
    // steering leaves the synthesis envelope (h_b is then unavailable).
    bool have_pair = true;
    BackupPair pair;
    try {
      pair = vehicle_backup_pair(p, delta, p.v_x0);
      apply_saturation_options(pair, config);
    } catch (const Error& err) {
      have_pair = false;
      if (backup_based) {
        log.error = std::string("control step failed at t=") + fmt(t) + ": " +
                    err.what();
        break;
      }
    }
    try {
      const ControlAffineSystem sys = vehicle_system(p, delta);
      step = controller_step(config.controller, sys, cf, pair, config.filter,
                             k_d, box, x.head(3));
      if (backup_based) {
        const double margin = vehicle_backup_boundary_margin(sys, cf, pair);
        log.worst_backup_margin = std::min(log.worst_backup_margin, margin);
      }
    } catch (const Error& err) {
      log.error = std::string("control step failed at t=") + fmt(t) + ": " +
                  err.what();
      break;
    }
    last_u = step.u;
    log.infeasible_steps += step.qp_status;
    log.fallback_steps += step.fallback;
    push_row(t, delta, step.u, step.qp_status, step.fallback,
             have_pair ? &pair : nullptr);

    const double v_before = x(0);
    const Vec u_held = step.u;
    try {
      integrate_hold(x, config.dt,
                     [&](const Vec& s) { return vehicle_extended_rhs(p, s, u_held); });
      check_plant_state(x);
    } catch (const Error& err) {
      log.diverged = true;
      log.error = std::string("plant diverged at t=") + fmt(t) + ": " +
                  err.what();
      break;
    }
    const double a_inst = (v_before - x(0)) / config.dt;
    if (a_inst > 0.0) last_decel = a_inst;
  }
  return log;
}

}  // namespace

int TrajectoryLog::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  throw Error("trajectory log has no column '" + name + "'");
}

std::vector<double> TrajectoryLog::column(const std::string& name) const {
  const int idx = column_index(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) out.push_back(row[static_cast<std::size_t>(idx)]);
  return out;
}

ScenarioPieces make_pieces(const ScenarioConfig& config) {
  switch (config.system) {
    case SystemId::scalar: {
      ScenarioPieces pieces{scalar_system(), scalar_constraint(),
                            scalar_backup_pair(config.scalar),
                            [](const Vec&) { return Vec::Zero(1); }};
      apply_saturation_options(pieces.pair, config);
      return pieces;
    }
    case SystemId::pendulum: {
      ScenarioPieces pieces{pendulum_system(), pendulum_constraint(config.pendulum),
                            pendulum_backup_pair(config.pendulum),
                            [](const Vec&) { return Vec::Zero(1); }};
      apply_saturation_options(pieces.pair, config);
      return pieces;
    }
    case SystemId::vehicle: {
      config.vehicle.validate();
      ScenarioPieces pieces{vehicle_system(config.vehicle, config.delta),
                            vehicle_constraint(config.vehicle),
                            vehicle_backup_pair(config.vehicle, config.delta,
                                                config.vehicle.v_x0),
                            select_high(config.vehicle.input_box())};
      apply_saturation_options(pieces.pair, config);
      return pieces;
    }
  }
  throw ConfigError("unhandled system id");
}

TrajectoryLog run_scenario(const ScenarioConfig& config) {
  if (config.system == SystemId::vehicle) return run_vehicle_system(config);
  return run_fixed_system(config);
}

void write_csv(const TrajectoryLog& log, const std::string& path,
               const ScenarioConfig& config) {
  std::ostringstream out;
  out << "schema,bcbf.traj.v1,system," << system_name(config.system)
      << ",controller," << controller_name(config.controller) << ",label,"
      << config.label << "\n";
  for (std::size_t i = 0; i < log.columns.size(); ++i) {
    if (i) out << ',';
    out << log.columns[i];
  }
  out << "\n";
  for (const auto& row : log.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << fmt(row[i]);
    }
    out << "\n";
  }
  atomic_write_file(path, out.str());
}

void write_text(const std::string& text, const std::string& path) {
  atomic_write_file(path, text);
}

CompareReport compare_controllers(const ScenarioConfig& config,
                                  const std::vector<ControllerId>& ids) {
  if (ids.empty()) throw ConfigError("compare needs at least one controller");
  CompareReport report;
  for (ControllerId id : ids) {
    ScenarioConfig run_config = config;
    run_config.controller = id;
    run_config.label = system_name(config.system) + "_" + controller_name(id);
    report.runs.emplace_back(id, run_scenario(run_config));
  }

  std::ostringstream out;
  out << "schema: bcbf.compare.v1\n";
  out << "system: " << system_name(config.system) << "\n";
  out << "controllers:";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << (i ? "," : " ") << controller_name(ids[i]);
  }
  out << "\n";
  for (const auto& [id, log] : report.runs) {
    out << "[" << controller_name(id) << "]\n";
    out << "final_time: " << fmt(log.final_time) << "\n";
    out << "min_h: " << fmt(log.min_h) << "\n";
    out << "min_h_b: " << fmt(log.min_h_b) << "\n";
    out << "infeasible_steps: " << log.infeasible_steps << "\n";
    out << "fallback_steps: " << log.fallback_steps << "\n";
    if (config.system == SystemId::vehicle) {
      out << "stopping_distance: " << fmt(log.stopping_distance) << "\n";
      out << "max_abs_beta: " << fmt(log.max_abs_beta) << "\n";
      out << "max_abs_omega: " << fmt(log.max_abs_omega) << "\n";
      if (std::isfinite(log.worst_backup_margin)) {
        out << "worst_backup_margin: " << fmt(log.worst_backup_margin) << "\n";
      }
    }
    if (!log.error.empty()) out << "error: " << log.error << "\n";
  }
  if (config.system == SystemId::vehicle) {
    bool all_stopped = true;
    for (const auto& [id, log] : report.runs) {
      if (!std::isfinite(log.stopping_distance)) all_stopped = false;
    }
    if (all_stopped && report.runs.size() > 1) {
      std::vector<std::size_t> order(report.runs.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return report.runs[a].second.stopping_distance <
               report.runs[b].second.stopping_distance;
      });
      out << "stopping_order:";
      for (std::size_t i = 0; i < order.size(); ++i) {
        out << (i ? " < " : " ")
            << controller_name(report.runs[order[i]].first);
      }
      out << "\n";
    }
  }
  report.text = out.str();
  return report;
}

double vehicle_backup_boundary_margin(const ControlAffineSystem& sys,
                                      const ConstraintFunction& cf,
                                      const BackupPair& pair) {
  if (pair.eta_dim != 2) {
    throw PreconditionError("boundary margin check expects a planar pair");
  }
  Eigen::LLT<Mat> llt(pair.P);
  if (llt.info() != Eigen::Success) {
    throw PreconditionError("backup level matrix is not positive definite");
  }
  const Mat L = llt.matrixL();
  const double radius = std::sqrt(pair.c);
  double worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 64; ++i) {
    const double phi = 2.0 * M_PI * static_cast<double>(i) / 64.0;
    Vec dir(2);
    dir << std::cos(phi), std::sin(phi);
    const Vec eta = radius * L.transpose().triangularView<Eigen::Upper>().solve(dir);
    const Vec x = pair.embed_eta(eta);
    const double h = cf.h(x);
    const Vec u_raw = pair.k_fl(x);
    double input_margin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < u_raw.size(); ++j) {
      input_margin = std::min(input_margin,
                              std::min(u_raw(j) - pair.box.u_min(j),
                                       pair.box.u_max(j) - u_raw(j)));
    }
    const Vec u = pair.kb(x);
    const double hb_dot =
        pair.grad_h_b(x).dot(sys.f(x) + sys.g(x) * u);
    worst = std::min(worst, std::min(h, std::min(input_margin, hb_dot)));
  }
  return worst;
}

}  // namespace bcbf
