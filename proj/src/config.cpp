#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bcbf/harness.hpp"

namespace bcbf {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line;
};

double parse_double(const Entry& e) {
  const std::string& v = e.value;
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || trim(std::string(end)) != "" || !std::isfinite(out)) {
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                      "' expects a finite number, got '" + v + "'");
  }
  return out;
}

int parse_int(const Entry& e) {
  const double d = parse_double(e);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                      "' expects an integer, got '" + e.value + "'");
  }
  return i;
}

std::uint64_t parse_u64(const Entry& e) {
  const std::string v = trim(e.value);
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                      "' expects a nonnegative integer, got '" + v + "'");
  }
  return std::strtoull(v.c_str(), nullptr, 10);
}

bool parse_bool(const Entry& e) {
  const std::string v = trim(e.value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                    "' expects a boolean, got '" + v + "'");
}

Vec parse_vector(const Entry& e) {
  std::istringstream in(e.value);
  std::vector<double> vals;
  std::string tok;
  while (in >> tok) {
    char* end = nullptr;
    const double d = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0' || !std::isfinite(d)) {
      throw ConfigError("line " + std::to_string(e.line) +
                        ": initial_state entry '" + tok + "' is not a number");
    }
    vals.push_back(d);
  }
  if (vals.empty()) {
    throw ConfigError("line " + std::to_string(e.line) +
                      ": initial_state must list at least one number");
  }
  Vec out(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t i = 0; i < vals.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = vals[i];
  }
  return out;
}

[[noreturn]] void unknown_key(const Entry& e) {
  throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" +
                    e.key + "' in section [" + e.section + "]");
}

void apply_system_entry(ScenarioConfig& c, const Entry& e, Vec& initial,
                        bool& has_initial, bool& has_delta) {
  if (e.key == "id") return;  // consumed in the first pass
  if (e.key == "initial_state") {
    initial = parse_vector(e);
    has_initial = true;
    return;
  }
  switch (c.system) {
    case SystemId::scalar: {
      auto& p = c.scalar;
      if (e.key == "gain") p.gain = parse_double(e);
      else if (e.key == "c") p.c = parse_double(e);
      else if (e.key == "x_star") p.x_star = parse_double(e);
      else if (e.key == "u_min") p.u_min = parse_double(e);
      else if (e.key == "u_max") p.u_max = parse_double(e);
      else unknown_key(e);
      return;
    }
    case SystemId::pendulum: {
      auto& p = c.pendulum;
      if (e.key == "k1") p.k1 = parse_double(e);
      else if (e.key == "k2") p.k2 = parse_double(e);
      else if (e.key == "c") p.c = parse_double(e);
      else if (e.key == "k_slope") p.k_slope = parse_double(e);
      else if (e.key == "x1_star") p.x1_star = parse_double(e);
      else if (e.key == "u_min") p.u_min = parse_double(e);
      else if (e.key == "u_max") p.u_max = parse_double(e);
      else unknown_key(e);
      return;
    }
    case SystemId::vehicle: {
      auto& p = c.vehicle;
      if (e.key == "mass") p.mass = parse_double(e);
      else if (e.key == "inertia_z") p.inertia_z = parse_double(e);
      else if (e.key == "half_track") p.half_track = parse_double(e);
      else if (e.key == "a_front") p.a_front = parse_double(e);
      else if (e.key == "a_rear") p.a_rear = parse_double(e);
      else if (e.key == "c_front") p.c_front = parse_double(e);
      else if (e.key == "c_rear") p.c_rear = parse_double(e);
      else if (e.key == "v_x0") p.v_x0 = parse_double(e);
      else if (e.key == "f_max_fl") p.f_max_fl = parse_double(e);
      else if (e.key == "f_max_fr") p.f_max_fr = parse_double(e);
      else if (e.key == "f_max_rl") p.f_max_rl = parse_double(e);
      else if (e.key == "f_max_rr") p.f_max_rr = parse_double(e);
      else if (e.key == "k_lane") p.k_lane = parse_double(e);
      else if (e.key == "k_heading") p.k_heading = parse_double(e);
      else if (e.key == "beta_cr") p.beta_cr = parse_double(e);
      else if (e.key == "omega_cr") p.omega_cr = parse_double(e);
      else if (e.key == "beta_d") p.beta_d = parse_double(e);
      else if (e.key == "p_beta") p.p_beta = parse_double(e);
      else if (e.key == "k_omega") p.k_omega = parse_double(e);
      else if (e.key == "c") p.c = parse_double(e);
      else if (e.key == "v_stop") p.v_stop = parse_double(e);
      else if (e.key == "delta") {
        c.delta = parse_double(e);
        has_delta = true;
      } else {
        unknown_key(e);
      }
      return;
    }
  }
  unknown_key(e);
}

void apply_controller_entry(ScenarioConfig& c, const Entry& e) {
  if (e.key == "id") c.controller = parse_controller_id(trim(e.value));
  else if (e.key == "dt") c.dt = parse_double(e);
  else if (e.key == "max_time") c.max_time = parse_double(e);
  else if (e.key == "seed") c.seed = parse_u64(e);
  else if (e.key == "require_safe") c.require_safe = parse_bool(e);
  else unknown_key(e);
}

void apply_filter_entry(ScenarioConfig& c, const Entry& e) {
  if (e.key == "horizon") c.filter.horizon = parse_double(e);
  else if (e.key == "nodes") c.filter.nodes = parse_int(e);
  else if (e.key == "alpha") c.filter.alpha = ClassKappa::linear(parse_double(e));
  else if (e.key == "alpha_b") c.filter.alpha_b = ClassKappa::linear(parse_double(e));
  else if (e.key == "fallback") {
    const std::string v = trim(e.value);
    if (v == "backup_controller") c.filter.fallback = Fallback::backup_controller;
    else if (v == "hold_desired") c.filter.fallback = Fallback::hold_desired;
    else {
      throw ConfigError("line " + std::to_string(e.line) +
                        ": fallback must be backup_controller or "
                        "hold_desired, got '" + v + "'");
    }
  } else if (e.key == "prune_interior_rows") {
    c.filter.prune_interior_rows = parse_bool(e);
  } else if (e.key == "smooth_saturation") {
    c.smooth_saturation = parse_bool(e);
  } else if (e.key == "smooth_kappa") {
    c.smooth_kappa = parse_double(e);
  } else {
    unknown_key(e);
  }
}

void apply_output_entry(ScenarioConfig& c, const Entry& e) {
  if (e.key == "dir") c.out_dir = trim(e.value);
  else if (e.key == "label") c.label = trim(e.value);
  else unknown_key(e);
}

void apply_raster_entry(ScenarioConfig& c, const Entry& e) {
  auto& r = c.raster;
  if (e.key == "nx") r.nx = parse_int(e);
  else if (e.key == "ny") r.ny = parse_int(e);
  else if (e.key == "x_min") r.x_min = parse_double(e);
  else if (e.key == "x_max") r.x_max = parse_double(e);
  else if (e.key == "y_min") r.y_min = parse_double(e);
  else if (e.key == "y_max") r.y_max = parse_double(e);
  else if (e.key == "axis_x") r.axis_x = parse_int(e);
  else if (e.key == "axis_y") r.axis_y = parse_int(e);
  else if (e.key == "horizon") r.horizon = parse_double(e);
  else if (e.key == "nodes") r.nodes = parse_int(e);
  else unknown_key(e);
}

void set_filter_defaults(ScenarioConfig& c) {
  switch (c.system) {
    case SystemId::scalar:
      c.filter.horizon = 4.0;
      c.filter.nodes = 40;
      c.filter.alpha = ClassKappa::linear(0.5);
      c.filter.alpha_b = ClassKappa::linear(0.25);
      break;
    case SystemId::pendulum:
      c.filter.horizon = 5.0;
      c.filter.nodes = 51;
      c.filter.alpha = ClassKappa::linear(1.0);
      c.filter.alpha_b = ClassKappa::linear(1.0);
      break;
    case SystemId::vehicle:
      c.filter.horizon = 0.1;
      c.filter.nodes = 200;
      c.filter.alpha = ClassKappa::linear(8.0);
      c.filter.alpha_b = ClassKappa::linear(25.0);
      break;
  }
}

void set_raster_defaults(ScenarioConfig& c) {
  auto& r = c.raster;
  switch (c.system) {
    case SystemId::scalar:
      r.nx = 241;
      r.ny = 1;
      r.x_min = -1.2;
      r.x_max = 1.2;
      r.axis_x = 0;
      r.axis_y = 0;
      break;
    case SystemId::pendulum:
      r.nx = 201;
      r.ny = 201;
      r.x_min = -1.5707963267948966;
      r.x_max = 1.5707963267948966;
      r.y_min = -1.5;
      r.y_max = 1.5;
      r.axis_x = 0;
      r.axis_y = 1;
      break;
    case SystemId::vehicle:
      r.nx = 161;
      r.ny = 161;
      r.x_min = -c.vehicle.beta_cr;
      r.x_max = c.vehicle.beta_cr;
      r.y_min = -c.vehicle.omega_cr;
      r.y_max = c.vehicle.omega_cr;
      r.axis_x = 1;
      r.axis_y = 2;
      break;
  }
  r.horizon = c.filter.horizon;
  r.nodes = c.filter.nodes;
}

void validate_config(const ScenarioConfig& c) {
  if (!(c.dt > 0.0) || !std::isfinite(c.dt)) {
    throw ConfigError("dt must be positive and finite");
  }
  if (!(c.max_time >= c.dt) || !std::isfinite(c.max_time)) {
    throw ConfigError("max_time must be finite and >= dt");
  }
  if (c.filter.nodes < 1) throw ConfigError("filter nodes must be >= 1");
  if (c.filter.horizon < 0.0) throw ConfigError("filter horizon must be >= 0");
  if (c.filter.horizon > 0.0 && c.filter.nodes < 2) {
    throw ConfigError("filter with positive horizon needs >= 2 nodes");
  }
  if (c.smooth_kappa <= 1.0) {
    throw ConfigError("smooth_kappa must exceed 1");
  }
  const auto& r = c.raster;
  if (r.nx < 1 || r.ny < 1) throw ConfigError("raster grid must be >= 1x1");
  if (!(r.x_max > r.x_min) || (r.ny > 1 && !(r.y_max > r.y_min))) {
    throw ConfigError("raster extents must be increasing");
  }
  if (r.horizon < 0.0) throw ConfigError("raster horizon must be >= 0");
  if (r.horizon > 0.0 && r.nodes < 2) {
    throw ConfigError("raster with positive horizon needs >= 2 nodes");
  }
  const int n_state = c.system == SystemId::scalar    ? 1
                      : c.system == SystemId::pendulum ? 2
                                                       : 3;
  if (r.axis_x < 0 || r.axis_x >= n_state ||
      (r.ny > 1 && (r.axis_y < 0 || r.axis_y >= n_state ||
                    r.axis_y == r.axis_x))) {
    throw ConfigError("raster axes must index distinct state components");
  }
  if (c.system == SystemId::vehicle) c.vehicle.validate();
}

}  // namespace

std::string system_name(SystemId id) {
  switch (id) {
    case SystemId::scalar: return "scalar";
    case SystemId::pendulum: return "pendulum";
    case SystemId::vehicle: return "vehicle";
  }
  return "unknown";
}

std::string controller_name(ControllerId id) {
  switch (id) {
    case ControllerId::select_high: return "select_high";
    case ControllerId::desired: return "desired";
    case ControllerId::cbf_qp_saturated: return "cbf_qp_saturated";
    case ControllerId::backup_cbf_qp: return "backup_cbf_qp";
    case ControllerId::backup_direct: return "backup_direct";
  }
  return "unknown";
}

SystemId parse_system_id(const std::string& text) {
  if (text == "scalar") return SystemId::scalar;
  if (text == "pendulum") return SystemId::pendulum;
  if (text == "vehicle") return SystemId::vehicle;
  throw ConfigError("unknown system id '" + text +
                    "' (expected scalar, pendulum, or vehicle)");
}

ControllerId parse_controller_id(const std::string& text) {
  if (text == "select_high") return ControllerId::select_high;
  if (text == "desired") return ControllerId::desired;
  if (text == "cbf_qp_saturated") return ControllerId::cbf_qp_saturated;
  if (text == "backup_cbf_qp") return ControllerId::backup_cbf_qp;
  if (text == "backup_direct") return ControllerId::backup_direct;
  throw ConfigError("unknown controller id '" + text + "'");
}

ScenarioConfig parse_config_text(const std::string& text) {
  std::vector<Entry> entries;
  std::set<std::pair<std::string, std::string>> seen;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find_first_of("#;");
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": malformed section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "system" && section != "controller" &&
          section != "filter" && section != "output" && section != "raster") {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unknown section [" + section + "]");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": key outside any section");
    }
    Entry e;
    e.section = section;
    e.key = trim(line.substr(0, eq));
    e.value = trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty() || e.value.empty()) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": empty key or value");
    }
    if (!seen.insert({e.section, e.key}).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        e.key + "' in section [" + e.section + "]");
    }
    entries.push_back(std::move(e));
  }

  ScenarioConfig config;
  for (const Entry& e : entries) {
    if (e.section == "system" && e.key == "id") {
      config.system = parse_system_id(trim(e.value));
    }
  }
  set_filter_defaults(config);

  Vec initial;
  bool has_initial = false;
  bool has_delta = false;
  bool raster_touched = false;
  for (const Entry& e : entries) {
    if (e.section == "system") {
      apply_system_entry(config, e, initial, has_initial, has_delta);
    } else if (e.section == "controller") {
      apply_controller_entry(config, e);
    } else if (e.section == "filter") {
      apply_filter_entry(config, e);
    } else if (e.section == "output") {
      apply_output_entry(config, e);
    } else {
      apply_raster_entry(config, e);
      raster_touched = true;
    }
  }
  (void)has_delta;

  const RasterSpec user_raster = config.raster;
  set_raster_defaults(config);
  if (raster_touched) {
    // Re-apply the user's raster keys on top of the system defaults.
    std::set<std::string> keys;
    for (const Entry& e : entries) {
      if (e.section == "raster") keys.insert(e.key);
    }
    auto& r = config.raster;
    if (keys.count("nx")) r.nx = user_raster.nx;
    if (keys.count("ny")) r.ny = user_raster.ny;
    if (keys.count("x_min")) r.x_min = user_raster.x_min;
    if (keys.count("x_max")) r.x_max = user_raster.x_max;
    if (keys.count("y_min")) r.y_min = user_raster.y_min;
    if (keys.count("y_max")) r.y_max = user_raster.y_max;
    if (keys.count("axis_x")) r.axis_x = user_raster.axis_x;
    if (keys.count("axis_y")) r.axis_y = user_raster.axis_y;
    if (keys.count("horizon")) r.horizon = user_raster.horizon;
    if (keys.count("nodes")) r.nodes = user_raster.nodes;
    config.raster_overridden = true;
  }

  if (has_initial) {
    config.initial_state = initial;
  } else {
    switch (config.system) {
      case SystemId::scalar:
        config.initial_state = Vec::Zero(1);
        break;
      case SystemId::pendulum:
        config.initial_state = Vec::Zero(2);
        break;
      case SystemId::vehicle:
        config.initial_state = Vec::Zero(6);
        config.initial_state(0) = config.vehicle.v_x0;
        break;
    }
  }
  const Eigen::Index want = config.system == SystemId::scalar    ? 1
                            : config.system == SystemId::pendulum ? 2
                                                                  : 6;
  if (config.system == SystemId::vehicle &&
      config.initial_state.size() == 3) {
    Vec full = Vec::Zero(6);
    full.head(3) = config.initial_state;
    config.initial_state = full;
  }
  if (config.initial_state.size() != want) {
    throw ConfigError("initial_state has " +
                      std::to_string(config.initial_state.size()) +
                      " entries; system '" + system_name(config.system) +
                      "' expects " + std::to_string(want));
  }
  if (config.label.empty()) {
    config.label = system_name(config.system) + "_" +
                   controller_name(config.controller);
  }
  validate_config(config);
  return config;
}

ScenarioConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace bcbf
