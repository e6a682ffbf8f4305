#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bcbf/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRunFailure = 3;
constexpr int kExitNumerical = 4;

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

void print_run_summary(const bcbf::TrajectoryLog& log,
                       const bcbf::ScenarioConfig& config) {
  std::cout << "final_time: " << fmt(log.final_time) << "\n";
  std::cout << "min_h: " << fmt(log.min_h) << "\n";
  std::cout << "min_h_b: " << fmt(log.min_h_b) << "\n";
  std::cout << "infeasible_steps: " << log.infeasible_steps << "\n";
  std::cout << "fallback_steps: " << log.fallback_steps << "\n";
  if (config.system == bcbf::SystemId::vehicle) {
    std::cout << "stopping_distance: " << fmt(log.stopping_distance) << "\n";
    std::cout << "max_abs_beta: " << fmt(log.max_abs_beta) << "\n";
    std::cout << "max_abs_omega: " << fmt(log.max_abs_omega) << "\n";
    if (std::isfinite(log.worst_backup_margin)) {
      std::cout << "worst_backup_margin: " << fmt(log.worst_backup_margin)
                << "\n";
    }
  }
}

std::vector<bcbf::ControllerId> parse_controller_list(const std::string& csv) {
  std::vector<bcbf::ControllerId> ids;
  std::stringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    ids.push_back(bcbf::parse_controller_id(tok));
  }
  if (ids.empty()) {
    throw bcbf::ConfigError("--controllers needs a comma-separated list");
  }
  return ids;
}

void parse_grid(const std::string& text, bcbf::RasterSpec& spec) {
  const std::size_t x = text.find('x');
  try {
    if (x == std::string::npos) {
      spec.nx = std::stoi(text);
      spec.ny = 1;
    } else {
      spec.nx = std::stoi(text.substr(0, x));
      spec.ny = std::stoi(text.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw bcbf::ConfigError("--grid expects N or NXxNY, got '" + text + "'");
  }
  if (spec.nx < 1 || spec.ny < 1) {
    throw bcbf::ConfigError("--grid dimensions must be positive");
  }
}

int dispatch(CLI::App& app, const std::string& config_path, bool serial,
             int threads, bool seed_given, std::uint64_t seed,
             const std::string& out_override, const std::string& controllers_csv,
             const std::string& grid_spec, double horizon_override,
             bool horizon_given, int nodes_override, int samples_override) {
  bcbf::ScenarioConfig config = bcbf::parse_config_file(config_path);
  if (seed_given) config.seed = seed;
  if (!out_override.empty()) config.out_dir = out_override;
  if (threads > 0) bcbf::set_thread_count(threads);
  const bcbf::Exec exec = serial ? bcbf::Exec::serial : bcbf::Exec::openmp;

  if (app.got_subcommand("run")) {
    const bcbf::TrajectoryLog log = bcbf::run_scenario(config);
    const std::string out_path = join_path(config.out_dir, config.label + ".csv");
    bcbf::write_csv(log, out_path, config);
    std::cout << "wrote: " << out_path << "\n";
    print_run_summary(log, config);
    if (!log.error.empty()) {
      std::cerr << "run failed: " << log.error << "\n";
      return kExitRunFailure;
    }
    if (config.require_safe && log.min_h < -1e-6) {
      std::cerr << "run violated the safety constraint (min_h="
                << fmt(log.min_h) << ")\n";
      return kExitRunFailure;
    }
    return kExitOk;
  }

  if (app.got_subcommand("compare")) {
    std::vector<bcbf::ControllerId> ids;
    if (controllers_csv.empty()) {
      ids = {bcbf::ControllerId::select_high,
             bcbf::ControllerId::cbf_qp_saturated,
             bcbf::ControllerId::backup_cbf_qp};
    } else {
      ids = parse_controller_list(controllers_csv);
    }
    const bcbf::CompareReport report = bcbf::compare_controllers(config, ids);
    for (const auto& [id, log] : report.runs) {
      bcbf::ScenarioConfig run_config = config;
      run_config.controller = id;
      run_config.label = bcbf::system_name(config.system) + "_" +
                         bcbf::controller_name(id);
      bcbf::write_csv(log, join_path(config.out_dir, run_config.label + ".csv"),
                      run_config);
    }
    const std::string report_path = join_path(
        config.out_dir, bcbf::system_name(config.system) + "_compare.txt");
    bcbf::write_text(report.text, report_path);
    std::cout << report.text;
    std::cout << "wrote: " << report_path << "\n";
    for (const auto& [id, log] : report.runs) {
      if (!log.error.empty()) {
        std::cerr << "run for " << bcbf::controller_name(id)
                  << " failed: " << log.error << "\n";
        return kExitRunFailure;
      }
    }
    return kExitOk;
  }

  if (app.got_subcommand("raster")) {
    bcbf::RasterSpec spec = config.raster;
    if (!grid_spec.empty()) parse_grid(grid_spec, spec);
    if (horizon_given) spec.horizon = horizon_override;
    if (nodes_override > 0) spec.nodes = nodes_override;
    if (spec.horizon > 0.0 && spec.nodes < 2) {
      throw bcbf::ConfigError("raster with positive horizon needs >= 2 nodes");
    }
    const bcbf::RasterResult raster = bcbf::rasterize_sets(config, spec, exec);
    const std::string out_path = join_path(
        config.out_dir, bcbf::system_name(config.system) + "_raster.txt");
    bcbf::write_raster(raster, out_path, config);
    std::cout << "cells: " << spec.nx * spec.ny << "\n";
    std::cout << "safe: " << raster.count(bcbf::kRasterSafe) << "\n";
    std::cout << "no_saturation: " << raster.count(bcbf::kRasterNoSat) << "\n";
    std::cout << "implicit_safe: " << raster.count(bcbf::kRasterImplicit) << "\n";
    std::cout << "backup: " << raster.count(bcbf::kRasterBackup) << "\n";
    std::cout << "wrote: " << out_path << "\n";
    return kExitOk;
  }

  // verify-pair
  const bcbf::ScenarioPieces pieces = bcbf::make_pieces(config);
  bcbf::ValidityCheckConfig vcfg;
  vcfg.seed = config.seed == 0 ? vcfg.seed : config.seed;
  if (samples_override > 0) {
    vcfg.boundary_samples = samples_override;
    vcfg.region_samples = samples_override;
  }
  vcfg.exec = exec;
  const bcbf::ValidityReport report =
      bcbf::verify_validity(pieces.sys, pieces.pair, pieces.cf, vcfg);
  std::ostringstream out;
  const auto flag = [](bool ok) { return ok ? "pass" : "fail"; };
  out << "schema: bcbf.validity.v1\n";
  out << "system: " << bcbf::system_name(config.system) << "\n";
  out << "level: " << fmt(pieces.pair.c) << "\n";
  out << "c1_safe_subset: " << flag(report.c1_safe_subset) << "\n";
  out << "c2_inputs_in_box: " << flag(report.c2_inputs_in_box) << "\n";
  out << "c3_invariant: " << flag(report.c3_invariant) << "\n";
  out << "no_saturation: " << flag(report.no_saturation) << "\n";
  out << "worst_h: " << fmt(report.worst_h) << "\n";
  out << "worst_hb_dot: " << fmt(report.worst_hb_dot) << "\n";
  out << "worst_saturation_margin: " << fmt(report.worst_saturation_margin)
      << "\n";
  out << "worst_input_margin: " << fmt(report.worst_input_margin) << "\n";
  out << "valid: " << (report.valid() ? "true" : "false") << "\n";
  const std::string text = out.str();
  std::cout << text;
  const std::string out_path = join_path(
      config.out_dir, bcbf::system_name(config.system) + "_validity.txt");
  bcbf::write_text(text, out_path);
  std::cout << "wrote: " << out_path << "\n";
  return report.valid() ? kExitOk : kExitRunFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"backup-set controller synthesis and safety filtering"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_override;
  std::string controllers_csv;
  std::string grid_spec;
  std::uint64_t seed = 0;
  double horizon_override = 0.0;
  int nodes_override = 0;
  int samples_override = 0;
  int threads = 0;
  bool serial = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "scenario config file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out_override, "output directory override");
    cmd->add_flag("--serial", serial, "disable parallel kernels");
    cmd->add_option("--threads", threads, "parallel thread count");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "simulate one scenario");
  add_common(run_cmd);
  CLI::Option* run_seed = run_cmd->add_option("--seed", seed, "seed override");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "run several controllers on one scenario");
  add_common(compare_cmd);
  CLI::Option* compare_seed =
      compare_cmd->add_option("--seed", seed, "seed override");
  compare_cmd->add_option("--controllers", controllers_csv,
                          "comma-separated controller ids");

  CLI::App* raster_cmd =
      app.add_subcommand("raster", "rasterize set membership over a state slice");
  add_common(raster_cmd);
  raster_cmd->add_option("--grid", grid_spec, "grid size N or NXxNY");
  CLI::Option* raster_horizon =
      raster_cmd->add_option("--horizon", horizon_override,
                             "rollout horizon for the implicit set");
  raster_cmd->add_option("--nodes", nodes_override, "rollout nodes override");

  CLI::App* verify_cmd =
      app.add_subcommand("verify-pair", "check the synthesized backup pair");
  add_common(verify_cmd);
  CLI::Option* verify_seed =
      verify_cmd->add_option("--seed", seed, "sampling seed override");
  verify_cmd->add_option("--samples", samples_override,
                         "sample count override per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const bool seed_given = run_seed->count() > 0 || compare_seed->count() > 0 ||
                          verify_seed->count() > 0;
  const bool horizon_given = raster_horizon->count() > 0;

  try {
    return dispatch(app, config_path, serial, threads, seed_given, seed,
                    out_override, controllers_csv, grid_spec, horizon_override,
                    horizon_given, nodes_override, samples_override);
  } catch (const bcbf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const bcbf::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const bcbf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return kExitNumerical;
  }
}
