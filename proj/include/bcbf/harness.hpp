#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "bcbf/controllers.hpp"
#include "bcbf/parallel.hpp"
#include "bcbf/synthesis.hpp"
#include "bcbf/systems.hpp"

namespace bcbf {

enum class SystemId { scalar, pendulum, vehicle };
enum class ControllerId {
  select_high,
  desired,
  cbf_qp_saturated,
  backup_cbf_qp,
  backup_direct
};

std::string system_name(SystemId id);
std::string controller_name(ControllerId id);
SystemId parse_system_id(const std::string& text);
ControllerId parse_controller_id(const std::string& text);

struct RasterSpec {
  int nx = 201;
  int ny = 201;
  double x_min = -1.0;
  double x_max = 1.0;
  double y_min = -1.0;
  double y_max = 1.0;
  int axis_x = 0;  // state index swept along columns
  int axis_y = 1;  // state index swept along rows; ignored when ny == 1
  double horizon = 0.0;
  int nodes = 2;
};

struct ScenarioConfig {
  SystemId system = SystemId::scalar;
  ControllerId controller = ControllerId::backup_cbf_qp;
  Vec initial_state;
  double dt = 1e-3;
  double max_time = 20.0;
  std::uint64_t seed = 0;
  bool require_safe = false;
  double delta = 0.0;  // steering context for vehicle synthesis checks

  FilterConfig filter;
  bool smooth_saturation = false;
  double smooth_kappa = 20.0;

  ScalarParams scalar;
  PendulumParams pendulum;
  VehicleParams vehicle;

  RasterSpec raster;
  bool raster_overridden = false;

  std::string out_dir = ".";
  std::string label;
};

ScenarioConfig parse_config_text(const std::string& text);
ScenarioConfig parse_config_file(const std::string& path);

// Everything a scenario needs, instantiated from the config: dynamics,
// safety constraint, backup pair, and the desired input. For the vehicle
// these depend on the live steering angle, so the harness rebuilds them per
// control step through vehicle-specific calls instead.
struct ScenarioPieces {
  ControlAffineSystem sys;
  ConstraintFunction cf;
  BackupPair pair;
  StateFn k_d;
};
ScenarioPieces make_pieces(const ScenarioConfig& config);

struct TrajectoryLog {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  double min_h = std::numeric_limits<double>::infinity();
  double min_h_b = std::numeric_limits<double>::infinity();
  double final_time = 0.0;
  int infeasible_steps = 0;
  int fallback_steps = 0;
  bool diverged = false;
  std::string error;

  // Vehicle-only summary values; NaN elsewhere.
  double stopping_distance = std::numeric_limits<double>::quiet_NaN();
  double max_abs_beta = std::numeric_limits<double>::quiet_NaN();
  double max_abs_omega = std::numeric_limits<double>::quiet_NaN();
  // Worst margin of the per-step moving backup-set boundary check (vehicle
  // runs with a backup-based controller); +inf when the check never ran.
  double worst_backup_margin = std::numeric_limits<double>::infinity();

  int column_index(const std::string& name) const;
  std::vector<double> column(const std::string& name) const;
};

TrajectoryLog run_scenario(const ScenarioConfig& config);

// CSV layout: one metadata line (key,value pairs, starts with "schema"),
// one header row, then numeric rows. Writes are atomic (temp file+rename).
void write_csv(const TrajectoryLog& log, const std::string& path,
               const ScenarioConfig& config);

struct CompareReport {
  std::vector<std::pair<ControllerId, TrajectoryLog>> runs;
  std::string text;  // key: value summary, deterministic
};
CompareReport compare_controllers(const ScenarioConfig& config,
                                  const std::vector<ControllerId>& ids);
void write_text(const std::string& text, const std::string& path);

// Set-membership raster over a 2-D state slice (1-D when ny == 1). Each
// cell holds a bitmask: bit0 inside the safe set, bit1 inside the
// no-saturation region of the synthesized controller, bit2 inside the
// horizon-T implicit safe set, bit3 inside the backup set.
struct RasterResult {
  RasterSpec spec;
  std::vector<std::uint8_t> labels;  // row-major, ny rows of nx cells
  int count(std::uint8_t bit) const;
  std::uint8_t at(int ix, int iy) const;
};
constexpr std::uint8_t kRasterSafe = 1;
constexpr std::uint8_t kRasterNoSat = 2;
constexpr std::uint8_t kRasterImplicit = 4;
constexpr std::uint8_t kRasterBackup = 8;

RasterResult rasterize_sets(const ScenarioConfig& config,
                            const RasterSpec& spec, Exec exec);
// One JSON metadata line, then ny lines of nx hex digits (row y_min first).
void write_raster(const RasterResult& raster, const std::string& path,
                  const ScenarioConfig& config);

// 64 evenly spaced boundary points of the current vehicle backup set; each
// must satisfy the safety constraint, strict input headroom, and a
// nonnegative barrier rate. Returns the worst margin across all checks.
double vehicle_backup_boundary_margin(const ControlAffineSystem& sys,
                                      const ConstraintFunction& cf,
                                      const BackupPair& pair);

}  // namespace bcbf
