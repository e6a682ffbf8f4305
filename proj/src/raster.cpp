#include <cmath>
#include <fstream>
#include <sstream>

#include "bcbf/flow.hpp"
#include "bcbf/harness.hpp"

namespace bcbf {
namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

double grid_value(double lo, double hi, int count, int index) {
  if (count <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(index) /
                  static_cast<double>(count - 1);
}

}  // namespace

int RasterResult::count(std::uint8_t bit) const {
  int total = 0;
  for (std::uint8_t mask : labels) {
    if (mask & bit) ++total;
  }
  return total;
}

std::uint8_t RasterResult::at(int ix, int iy) const {
  return labels[static_cast<std::size_t>(iy) * static_cast<std::size_t>(spec.nx) +
                static_cast<std::size_t>(ix)];
}

RasterResult rasterize_sets(const ScenarioConfig& config,
                            const RasterSpec& spec, Exec exec) {
  const ScenarioPieces pieces = make_pieces(config);
  Vec base;
  if (config.system == SystemId::vehicle) {
    base = config.initial_state.head(3);
  } else {
    base = config.initial_state;
  }
  if (spec.axis_x < 0 || spec.axis_x >= base.size() ||
      (spec.ny > 1 && (spec.axis_y < 0 || spec.axis_y >= base.size()))) {
    throw ConfigError("raster axis out of range for this system");
  }

  RasterResult result;
  result.spec = spec;
  const std::ptrdiff_t cells =
      static_cast<std::ptrdiff_t>(spec.nx) * static_cast<std::ptrdiff_t>(spec.ny);
  result.labels.assign(static_cast<std::size_t>(cells), 0);

  const BackupLaw law = pieces.pair.law();
  const double horizon = spec.horizon;
  const int nodes = horizon > 0.0 ? spec.nodes : 1;

  for_each_index(cells, exec, [&](std::ptrdiff_t idx) {
    const int iy = static_cast<int>(idx / spec.nx);
    const int ix = static_cast<int>(idx % spec.nx);
    Vec x = base;
    x(spec.axis_x) = grid_value(spec.x_min, spec.x_max, spec.nx, ix);
    if (spec.ny > 1) {
      x(spec.axis_y) = grid_value(spec.y_min, spec.y_max, spec.ny, iy);
    }

    std::uint8_t mask = 0;
    if (pieces.cf.h(x) >= 0.0) mask |= kRasterSafe;
    const std::vector<bool> flags = pieces.pair.sat_flags(x);
    bool any_saturated = false;
    for (const bool f : flags) any_saturated = any_saturated || f;
    if (!any_saturated) mask |= kRasterNoSat;
    if (pieces.pair.h_b(x) >= 0.0) mask |= kRasterBackup;

    bool implicit = true;
    try {
      const FlowRollout roll = rollout(pieces.sys, law, x, horizon, nodes, false);
      for (const Vec& state : roll.states) {
        if (pieces.cf.h(state) < 0.0) {
          implicit = false;
          break;
        }
      }
      if (implicit && pieces.pair.h_b(roll.states.back()) < 0.0) {
        implicit = false;
      }
    } catch (const Error&) {
      implicit = false;
    }
    if (implicit) mask |= kRasterImplicit;
    result.labels[static_cast<std::size_t>(idx)] = mask;
  });
  return result;
}

void write_raster(const RasterResult& raster, const std::string& path,
                  const ScenarioConfig& config) {
  const RasterSpec& s = raster.spec;
  std::ostringstream out;
  out.precision(17);
  out << "{\"schema\":\"bcbf.raster.v1\",\"system\":\"" << system_name(config.system)
      << "\",\"nx\":" << s.nx << ",\"ny\":" << s.ny << ",\"x_min\":" << s.x_min
      << ",\"x_max\":" << s.x_max << ",\"y_min\":" << s.y_min
      << ",\"y_max\":" << s.y_max << ",\"axis_x\":" << s.axis_x
      << ",\"axis_y\":" << s.axis_y << ",\"horizon\":" << s.horizon
      << ",\"nodes\":" << s.nodes
      << ",\"bits\":{\"1\":\"safe\",\"2\":\"no_saturation\",\"4\":\"implicit_safe\","
         "\"8\":\"backup\"}}\n";
  for (int iy = 0; iy < s.ny; ++iy) {
    for (int ix = 0; ix < s.nx; ++ix) {
      out << kHexDigits[raster.at(ix, iy) & 0xF];
    }
    out << "\n";
  }
  write_text(out.str(), path);
}

}  // namespace bcbf
