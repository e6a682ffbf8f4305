#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "bcbf/harness.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& body) {
  const auto start = Clock::now();
  body();
  const auto end = Clock::now();
  return std::chrono::duration<double, std::milli>(end - start).count();
}

void report(const std::string& name, double serial_ms, double parallel_ms,
            bool identical) {
  std::printf("%-28s serial %9.2f ms   openmp %9.2f ms   speedup %5.2fx   %s\n",
              name.c_str(), serial_ms, parallel_ms,
              parallel_ms > 0.0 ? serial_ms / parallel_ms : 0.0,
              identical ? "identical" : "MISMATCH");
}

}  // namespace

int main() {
  std::printf("threads available: %d\n", bcbf::hardware_threads());

  {
    bcbf::ScenarioConfig config = bcbf::parse_config_text("[system]\nid = pendulum\n");
    bcbf::RasterSpec spec = config.raster;
    spec.nx = 201;
    spec.ny = 201;
    spec.horizon = 5.0;
    spec.nodes = 51;
    bcbf::RasterResult serial_result, parallel_result;
    const double t_serial = time_ms([&] {
      serial_result = bcbf::rasterize_sets(config, spec, bcbf::Exec::serial);
    });
    const double t_parallel = time_ms([&] {
      parallel_result = bcbf::rasterize_sets(config, spec, bcbf::Exec::openmp);
    });
    report("pendulum set raster", t_serial, t_parallel,
           serial_result.labels == parallel_result.labels);
  }

  {
    bcbf::ScenarioConfig config = bcbf::parse_config_text("[system]\nid = pendulum\n");
    const bcbf::ScenarioPieces pieces = bcbf::make_pieces(config);
    bcbf::ValidityCheckConfig vcfg;
    vcfg.boundary_samples = 40000;
    vcfg.region_samples = 40000;
    bcbf::ValidityReport serial_report, parallel_report;
    vcfg.exec = bcbf::Exec::serial;
    const double t_serial = time_ms([&] {
      serial_report = bcbf::verify_validity(pieces.sys, pieces.pair, pieces.cf, vcfg);
    });
    vcfg.exec = bcbf::Exec::openmp;
    const double t_parallel = time_ms([&] {
      parallel_report = bcbf::verify_validity(pieces.sys, pieces.pair, pieces.cf, vcfg);
    });
    const bool identical =
        serial_report.worst_h == parallel_report.worst_h &&
        serial_report.worst_hb_dot == parallel_report.worst_hb_dot &&
        serial_report.worst_saturation_margin ==
            parallel_report.worst_saturation_margin &&
        serial_report.worst_input_margin == parallel_report.worst_input_margin;
    report("pair validity sampling", t_serial, t_parallel, identical);
  }

  {
    bcbf::ScenarioConfig config = bcbf::parse_config_text(
        "[system]\nid = vehicle\n[controller]\nid = backup_cbf_qp\nmax_time = 0.5\n");
    bcbf::RasterSpec spec = config.raster;
    spec.nx = 81;
    spec.ny = 81;
    bcbf::RasterResult serial_result, parallel_result;
    const double t_serial = time_ms([&] {
      serial_result = bcbf::rasterize_sets(config, spec, bcbf::Exec::serial);
    });
    const double t_parallel = time_ms([&] {
      parallel_result = bcbf::rasterize_sets(config, spec, bcbf::Exec::openmp);
    });
    report("vehicle set raster", t_serial, t_parallel,
           serial_result.labels == parallel_result.labels);
  }

  return 0;
}
