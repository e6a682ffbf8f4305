#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bcbf/harness.hpp"
#include "doctest.h"

using namespace bcbf;

namespace {

std::filesystem::path work_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "bcbf_harness_test";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << text;
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const char* cli = std::getenv("BCBF_CLI");
  REQUIRE_MESSAGE(cli != nullptr, "BCBF_CLI must point at the cli binary");
  const std::string cmd = std::string(cli) + " " + args + " > " +
                          log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

const char* kScalarShortConfig =
    "# short scalar scenario\n"
    "[system]\n"
    "id = scalar\n"
    "initial_state = 0.5\n"
    "[controller]\n"
    "id = backup_cbf_qp\n"
    "dt = 0.001\n"
    "max_time = 0.2\n";

}  // namespace

TEST_CASE("name and id round trips") {
  for (SystemId id : {SystemId::scalar, SystemId::pendulum, SystemId::vehicle}) {
    CHECK(parse_system_id(system_name(id)) == id);
  }
  for (ControllerId id :
       {ControllerId::select_high, ControllerId::desired,
        ControllerId::cbf_qp_saturated, ControllerId::backup_cbf_qp,
        ControllerId::backup_direct}) {
    CHECK(parse_controller_id(controller_name(id)) == id);
  }
  CHECK_THROWS_AS(parse_system_id("boat"), ConfigError);
  CHECK_THROWS_AS(parse_controller_id("pid"), ConfigError);
}

TEST_CASE("per-system configuration defaults") {
  ScenarioConfig s = parse_config_text("[system]\nid = scalar\n");
  CHECK(s.filter.horizon == 4.0);
  CHECK(s.filter.nodes == 40);
  CHECK(s.filter.alpha.coefficient == 0.5);
  CHECK(s.filter.alpha_b.coefficient == 0.25);
  CHECK(s.initial_state.size() == 1);
  CHECK(s.initial_state[0] == 0.0);
  CHECK(s.label == "scalar_backup_cbf_qp");
  CHECK(s.raster.nx == 241);
  CHECK(s.raster.ny == 1);
  CHECK(s.raster.horizon == 4.0);
  CHECK_FALSE(s.raster_overridden);

  ScenarioConfig p = parse_config_text("[system]\nid = pendulum\n");
  CHECK(p.filter.horizon == 5.0);
  CHECK(p.filter.nodes == 51);
  CHECK(p.filter.alpha.coefficient == 1.0);
  CHECK(p.raster.nx == 201);
  CHECK(p.raster.ny == 201);
  CHECK(p.raster.x_max == doctest::Approx(M_PI / 2.0));
  CHECK(p.initial_state.size() == 2);

  ScenarioConfig v = parse_config_text("[system]\nid = vehicle\n");
  CHECK(v.filter.horizon == doctest::Approx(0.1));
  CHECK(v.filter.nodes == 200);
  CHECK(v.filter.alpha.coefficient == 8.0);
  CHECK(v.filter.alpha_b.coefficient == 25.0);
  CHECK(v.initial_state.size() == 6);
  CHECK(v.initial_state[0] == 25.0);
  CHECK(v.raster.axis_x == 1);
  CHECK(v.raster.axis_y == 2);
  CHECK(v.raster.x_max == doctest::Approx(0.04));
}

TEST_CASE("configuration text handling") {
  // A dynamics-block initial state is widened with zero pose entries.
  ScenarioConfig v = parse_config_text(
      "[system]\nid = vehicle\ninitial_state = 20 0.01 0\ndelta = 0.015\n");
  CHECK(v.initial_state.size() == 6);
  CHECK(v.initial_state[0] == 20.0);
  CHECK(v.initial_state[1] == 0.01);
  CHECK(v.initial_state[5] == 0.0);
  CHECK(v.delta == doctest::Approx(0.015));

  // User raster keys sit on top of the system defaults.
  ScenarioConfig r = parse_config_text(
      "[system]\nid = pendulum\n[raster]\nnx = 41\nny = 41\nhorizon = 2\n"
      "nodes = 21\n");
  CHECK(r.raster_overridden);
  CHECK(r.raster.nx == 41);
  CHECK(r.raster.horizon == 2.0);
  CHECK(r.raster.x_min == doctest::Approx(-M_PI / 2.0));

  // Comments, blank lines, and both comment markers are skipped.
  ScenarioConfig c = parse_config_text(
      "; leading comment\n\n[system]\nid = scalar  # trailing\n"
      "[controller]\nid = desired\n");
  CHECK(c.controller == ControllerId::desired);
}

TEST_CASE("configuration errors carry line numbers") {
  CHECK_THROWS_WITH_AS(
      parse_config_text("[system]\nid = scalar\nbogus = 1\n"),
      doctest::Contains("line 3: unknown key 'bogus'"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("[system]\nid = scalar\nc = 0.1\nc = 0.2\n"),
      doctest::Contains("line 4: duplicate key 'c'"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("[system\nid = scalar\n"),
                       doctest::Contains("malformed section"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("id = scalar\n"),
                       doctest::Contains("outside any section"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("[system]\nid = scalar\ngain = wide\n"),
      doctest::Contains("finite number"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("[system]\nid = scalar\n[controller]\nrequire_safe = maybe\n"),
      doctest::Contains("boolean"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_config_text("[system]\nid = scalar\ninitial_state = 1 2\n"),
      doctest::Contains("expects 1"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[weird]\nkey = 1\n"), ConfigError);
  CHECK_THROWS_AS(
      parse_config_text("[system]\nid = scalar\n[controller]\ndt = -1\n"),
      ConfigError);
}

TEST_CASE("scenario runs are deterministic") {
  ScenarioConfig config = parse_config_text(kScalarShortConfig);
  TrajectoryLog a = run_scenario(config);
  TrajectoryLog b = run_scenario(config);
  REQUIRE(a.rows.size() == b.rows.size());
  CHECK(a.rows == b.rows);
  CHECK(a.min_h == b.min_h);
  CHECK(a.final_time == doctest::Approx(0.2));
  CHECK(a.error.empty());

  const auto dir = work_dir();
  write_csv(a, (dir / "det_a.csv").string(), config);
  write_csv(b, (dir / "det_b.csv").string(), config);
  CHECK(slurp(dir / "det_a.csv") == slurp(dir / "det_b.csv"));
  CHECK_FALSE(std::filesystem::exists(dir / "det_a.csv.tmp"));
}

TEST_CASE("trajectory csv layout") {
  ScenarioConfig config = parse_config_text(kScalarShortConfig);
  TrajectoryLog log = run_scenario(config);
  const auto dir = work_dir();
  const auto path = dir / "layout.csv";
  write_csv(log, path.string(), config);

  std::istringstream in(slurp(path));
  std::string meta, header;
  REQUIRE(std::getline(in, meta));
  REQUIRE(std::getline(in, header));
  CHECK(meta ==
        "schema,bcbf.traj.v1,system,scalar,controller,backup_cbf_qp,label,"
        "scalar_backup_cbf_qp");
  CHECK(header == "t,x1,u1,h,h_b,qp_status,fallback");
  std::size_t data_lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++data_lines;
  }
  CHECK(data_lines == log.rows.size());
  CHECK(log.rows.size() == 201);  // 200 steps plus the terminal sample

  // Column accessors agree with the layout and reject unknown names.
  const std::vector<double> t = log.column("t");
  CHECK(t.front() == 0.0);
  CHECK(t.back() == doctest::Approx(0.2));
  CHECK(log.column_index("h") == 3);
  CHECK_THROWS_AS(log.column("nope"), Error);

  // Every applied input respects the box.
  ScalarParams params;
  for (double u : log.column("u1")) {
    CHECK(u >= params.u_min - 1e-12);
    CHECK(u <= params.u_max + 1e-12);
  }
}

TEST_CASE("filtered pendulum stays safe while the plain drop does not") {
  ScenarioConfig config = parse_config_text(
      "[system]\nid = pendulum\ninitial_state = 0.5 0.2\n"
      "[controller]\nid = backup_cbf_qp\nmax_time = 3\n");
  TrajectoryLog log = run_scenario(config);
  CHECK(log.error.empty());
  CHECK(log.min_h >= -1e-6);
  CHECK(log.final_time == doctest::Approx(3.0));

  // The desired input (zero torque) lets the same start fall through the
  // angle limit, which is the situation the filter exists to prevent.
  ScenarioConfig plain = config;
  plain.controller = ControllerId::desired;
  TrajectoryLog unfiltered = run_scenario(plain);
  CHECK(unfiltered.min_h < 0.0);
}

TEST_CASE("comparison report is deterministic and ordered") {
  ScenarioConfig config = parse_config_text(kScalarShortConfig);
  const std::vector<ControllerId> ids = {ControllerId::backup_direct,
                                         ControllerId::backup_cbf_qp};
  CompareReport a = compare_controllers(config, ids);
  CompareReport b = compare_controllers(config, ids);
  CHECK(a.text == b.text);
  CHECK(a.runs.size() == 2);
  CHECK(a.text.find("schema: bcbf.compare.v1") == 0);
  CHECK(a.text.find("[backup_direct]") != std::string::npos);
  CHECK(a.text.find("[backup_cbf_qp]") != std::string::npos);
  CHECK_THROWS_AS(compare_controllers(config, {}), ConfigError);
}

TEST_CASE("raster membership is identical across execution backends") {
  ScenarioConfig config = parse_config_text("[system]\nid = scalar\n");
  RasterSpec spec = config.raster;  // 241 cells, horizon 4
  RasterResult serial = rasterize_sets(config, spec, Exec::serial);
  RasterResult parallel = rasterize_sets(config, spec, Exec::openmp);
  REQUIRE(serial.labels.size() == parallel.labels.size());
  CHECK(serial.labels == parallel.labels);

  // Safe cells are exactly the grid points with h >= 0, and the labeled
  // sets nest: backup inside implicit inside safe.
  int expected_safe = 0;
  for (int i = 0; i < spec.nx; ++i) {
    const double x = spec.x_min + (spec.x_max - spec.x_min) *
                                      static_cast<double>(i) /
                                      static_cast<double>(spec.nx - 1);
    if (1.0 - x * x >= 0.0) ++expected_safe;
  }
  CHECK(serial.count(kRasterSafe) == expected_safe);
  for (std::uint8_t mask : serial.labels) {
    if (mask & kRasterBackup) CHECK((mask & kRasterImplicit) != 0);
    if (mask & kRasterImplicit) CHECK((mask & kRasterSafe) != 0);
  }
  CHECK(serial.count(kRasterBackup) < serial.count(kRasterImplicit));
  CHECK(serial.count(kRasterImplicit) < serial.count(kRasterSafe));

  ScenarioConfig pend = parse_config_text(
      "[system]\nid = pendulum\n[raster]\nnx = 41\nny = 41\nhorizon = 2\n"
      "nodes = 21\n");
  RasterResult ps = rasterize_sets(pend, pend.raster, Exec::serial);
  RasterResult pp = rasterize_sets(pend, pend.raster, Exec::openmp);
  CHECK(ps.labels == pp.labels);
  CHECK(ps.at(20, 20) == (kRasterSafe | kRasterNoSat | kRasterImplicit |
                          kRasterBackup));
}

TEST_CASE("raster file format") {
  ScenarioConfig config = parse_config_text("[system]\nid = scalar\n");
  RasterSpec spec = config.raster;
  spec.nx = 25;
  spec.horizon = 1.0;
  spec.nodes = 11;
  RasterResult raster = rasterize_sets(config, spec, Exec::serial);
  const auto dir = work_dir();
  const auto path = dir / "scalar_raster.txt";
  write_raster(raster, path.string(), config);

  std::istringstream in(slurp(path));
  std::string meta;
  REQUIRE(std::getline(in, meta));
  CHECK(meta.find("{\"schema\":\"bcbf.raster.v1\",\"system\":\"scalar\"") == 0);
  CHECK(meta.find("\"nx\":25") != std::string::npos);
  std::string row;
  REQUIRE(std::getline(in, row));
  CHECK(row.size() == 25);
  CHECK(row.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(row.front() == '0');  // x = -1.2: unsafe, saturated, outside all sets
  CHECK(row[12] == 'f');      // x = 0: inside every labeled set
  CHECK_FALSE(std::getline(in, row));  // ny == 1: single raster line
}

TEST_CASE("vehicle scenario summary fields") {
  ScenarioConfig config = parse_config_text(
      "[system]\nid = vehicle\n[controller]\nid = select_high\n");
  TrajectoryLog log = run_scenario(config);
  CHECK(log.error.empty());
  CHECK(std::isfinite(log.stopping_distance));
  CHECK(log.stopping_distance > 50.0);
  CHECK(log.stopping_distance < 200.0);
  CHECK(log.final_time < config.max_time);  // braked to rest early
  CHECK(log.min_h < 0.0);  // full asymmetric braking spins the vehicle
  CHECK(log.max_abs_beta > config.vehicle.beta_cr);
  // The moving-boundary check only runs for backup-based controllers.
  CHECK(std::isinf(log.worst_backup_margin));
  CHECK(log.columns.size() == 16);
  CHECK(log.column("v_x").back() <= config.vehicle.v_stop + 1e-9);
}

TEST_CASE("cli run subcommand writes artifacts and reports safety") {
  const auto dir = work_dir();
  const auto cfg = dir / "run_ok.cfg";
  spit(cfg, std::string(kScalarShortConfig) + "[output]\ndir = " +
                dir.string() + "\n");
  CHECK(run_cli("run " + cfg.string(), dir / "run_ok.log") == 0);
  CHECK(std::filesystem::exists(dir / "scalar_backup_cbf_qp.csv"));
  const std::string out = slurp(dir / "run_ok.log");
  CHECK(out.find("min_h:") != std::string::npos);

  // An unsafe required-safe run exits with the run-failure code.
  const auto bad = dir / "run_unsafe.cfg";
  spit(bad,
       "[system]\nid = scalar\ninitial_state = 0.95\n"
       "[controller]\nid = backup_direct\nmax_time = 2\nrequire_safe = true\n"
       "[output]\ndir = " + dir.string() + "\n");
  CHECK(run_cli("run " + bad.string(), dir / "run_unsafe.log") == 3);
}

TEST_CASE("cli config and parse failures exit with the config code") {
  const auto dir = work_dir();
  CHECK(run_cli("run " + (dir / "missing.cfg").string(),
                dir / "missing.log") == 2);

  const auto bad = dir / "bad_key.cfg";
  spit(bad, "[system]\nid = scalar\nbogus = 1\n");
  CHECK(run_cli("run " + bad.string(), dir / "bad_key.log") == 2);
  CHECK(slurp(dir / "bad_key.log").find("config error") != std::string::npos);

  CHECK(run_cli("frobnicate", dir / "bad_cmd.log") == 2);
}

TEST_CASE("cli compare, raster, and verify-pair subcommands") {
  const auto dir = work_dir();
  const auto cfg = dir / "multi.cfg";
  spit(cfg, std::string(kScalarShortConfig) + "[output]\ndir = " +
                dir.string() + "\n");

  CHECK(run_cli("compare " + cfg.string() +
                    " --controllers backup_direct,backup_cbf_qp",
                dir / "compare.log") == 0);
  CHECK(std::filesystem::exists(dir / "scalar_compare.txt"));
  CHECK(std::filesystem::exists(dir / "scalar_backup_direct.csv"));
  CHECK(slurp(dir / "scalar_compare.txt").find("[backup_direct]") !=
        std::string::npos);

  CHECK(run_cli("raster " + cfg.string() + " --grid 25 --horizon 1 --nodes 11",
                dir / "raster.log") == 0);
  CHECK(std::filesystem::exists(dir / "scalar_raster.txt"));
  CHECK(slurp(dir / "raster.log").find("implicit_safe:") != std::string::npos);

  CHECK(run_cli("verify-pair " + cfg.string() + " --samples 2000",
                dir / "verify.log") == 0);
  CHECK(slurp(dir / "verify.log").find("valid: true") != std::string::npos);

  // An over-sized backup level set leaks outside the safe set: the check
  // must fail and exit with the run-failure code.
  const auto invalid = dir / "invalid_pair.cfg";
  spit(invalid,
       "[system]\nid = scalar\nc = 1.5\n[output]\ndir = " + dir.string() +
           "\n");
  CHECK(run_cli("verify-pair " + invalid.string() + " --samples 2000",
                dir / "verify_bad.log") == 3);
  CHECK(slurp(dir / "verify_bad.log").find("valid: false") !=
        std::string::npos);
}
