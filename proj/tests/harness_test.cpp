#include <filesystem>
#include <functional>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "vbt/diagnostics.hpp"
#include "vbt/error.hpp"
#include "vbt/harness.hpp"

using namespace vbt;
namespace fs = std::filesystem;

namespace {

Scenario short_run(const std::string& name, double duration) {
  Scenario s = builtin_scenario(name);
  s.duration = duration;
  return s;
}

std::string csv_of(const RunLog& log) {
  std::ostringstream out;
  write_csv(log, out);
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ErrorCode code_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::SolverFailure;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vbt_harness_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("every built-in scenario survives a JSON round trip") {
  for (const std::string& name : builtin_scenario_names()) {
    const Scenario s = builtin_scenario(name);
    const nlohmann::json j = to_json(s);
    const Scenario back = scenario_from_json(nlohmann::json::parse(j.dump()));
    CHECK(to_json(back) == j);
    CHECK(scenario_hash(back) == scenario_hash(s));
  }
}

TEST_CASE("scenario files round trip through disk") {
  const fs::path dir = scratch_dir("roundtrip");
  fs::create_directories(dir);
  const Scenario s = builtin_scenario("s-shape-disturbed-mpc");
  save_scenario(s, dir / "s.json");
  CHECK(to_json(load_scenario(dir / "s.json")) == to_json(s));
  CHECK(code_of([&] { load_scenario(dir / "missing.json"); }) == ErrorCode::IoFailure);
  fs::remove_all(dir);
}

TEST_CASE("malformed scenarios name the offending field") {
  nlohmann::json j = to_json(builtin_scenario("straight-mpc"));
  std::string msg;

  nlohmann::json unknown = j;
  unknown["controler"] = "mpc";
  CHECK(code_of([&] { scenario_from_json(unknown); }, &msg) == ErrorCode::ScenarioInvalid);
  CHECK(msg.find("controler") != std::string::npos);

  nlohmann::json bad_type = j;
  bad_type["duration"] = "thirty";
  CHECK(code_of([&] { scenario_from_json(bad_type); }, &msg) == ErrorCode::ScenarioInvalid);
  CHECK(msg.find("duration") != std::string::npos);

  nlohmann::json bad_enum = j;
  bad_enum["controller"] = "pid";
  CHECK(code_of([&] { scenario_from_json(bad_enum); }) == ErrorCode::ScenarioInvalid);

  nlohmann::json old_schema = j;
  old_schema["schema"] = kScenarioSchemaVersion + 1;
  CHECK(code_of([&] { scenario_from_json(old_schema); }) == ErrorCode::ScenarioInvalid);
}

TEST_CASE("validation rejects inconsistent settings") {
  Scenario s = builtin_scenario("straight-mpc");
  s.duration = -1.0;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::ScenarioInvalid);
  s = builtin_scenario("straight-mpc");
  s.gains.dt = 0.01;
  CHECK(code_of([&] { s.validate(); }) == ErrorCode::ScenarioInvalid);
  CHECK_THROWS_AS(builtin_scenario("circle-mpc"), Error);
}

TEST_CASE("runs use a 50 Hz control tick and 15 Hz frames") {
  const RunResult r = run_scenario(short_run("straight-decoupled", 2.0));
  REQUIRE(r.log.rows.size() == 100);
  std::set<long> frame_ticks;
  // frame k lands on the control tick nearest to k / 15 s, i.e. round(10 k / 3)
  for (long k = 0; (20 * k + 3) / 6 < 100; ++k) frame_ticks.insert((20 * k + 3) / 6);
  for (const LogRow& row : r.log.rows) {
    CHECK(row.time == doctest::Approx(0.02 * static_cast<double>(row.tick)).epsilon(1e-12));
    CHECK(row.measurement == (frame_ticks.count(row.tick) == 1));
  }
  CHECK(r.log.frames.size() == frame_ticks.size());
  CHECK(r.metrics.termination == Termination::Duration);
}

TEST_CASE("csv header lists the declared columns") {
  const RunResult r = run_scenario(short_run("straight-mpc", 0.2));
  std::istringstream in(csv_of(r.log));
  std::string header;
  std::getline(in, header);
  std::string expected;
  for (const std::string& c : csv_columns()) expected += (expected.empty() ? "" : ",") + c;
  CHECK(header == expected);
  long lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 10);
}

TEST_CASE("runs are reproducible and the seed matters") {
  Scenario s = short_run("s-shape-mpc", 2.0);
  const std::string a = csv_of(run_scenario(s).log);
  CHECK(csv_of(run_scenario(s).log) == a);
  s.seed += 1;
  CHECK(csv_of(run_scenario(s).log) != a);
}

TEST_CASE("comparison deltas are antisymmetric") {
  const RunMetrics mpc = run_scenario(short_run("straight-mpc", 3.0)).metrics;
  const RunMetrics dec = run_scenario(short_run("straight-decoupled", 3.0)).metrics;
  REQUIRE(mpc.family_hash == dec.family_hash);
  CHECK(mpc.scenario_hash != dec.scenario_hash);

  const ComparisonReport ab = compare_runs({mpc, dec});
  const ComparisonReport ba = compare_runs({dec, mpc});
  REQUIRE(ab.deltas.size() == 1);
  REQUIRE(ba.deltas.size() == 1);
  CHECK(ab.deltas[0].settling_time == doctest::Approx(mpc.settling_time - dec.settling_time));
  CHECK(ab.deltas[0].settling_time == doctest::Approx(-ba.deltas[0].settling_time));
  CHECK(ab.deltas[0].v_x_steady == doctest::Approx(-ba.deltas[0].v_x_steady));
  for (int i = 0; i < 4; ++i) CHECK(ab.deltas[0].rmse_log_ratio(i) == doctest::Approx(-ba.deltas[0].rmse_log_ratio(i)));
  CHECK(ab.table().find("decoupled") != std::string::npos);

  CHECK(compare_runs({mpc, dec, mpc}).deltas.size() == 3);
}

TEST_CASE("comparison refuses mismatched or missing runs") {
  const RunMetrics straight = run_scenario(short_run("straight-mpc", 0.2)).metrics;
  const RunMetrics hexagon = run_scenario(short_run("hexagon-mpc", 0.2)).metrics;
  CHECK(code_of([&] { compare_runs({straight, hexagon}); }) == ErrorCode::MismatchedScenarios);
  CHECK(code_of([&] { compare_runs({straight}); }) == ErrorCode::MismatchedScenarios);
}

TEST_CASE("settling time is the first tick after which the error stays low") {
  std::vector<LogRow> rows(100);
  for (int i = 0; i < 100; ++i) {
    rows[i].tick = i;
    rows[i].time = 0.02 * i;
    rows[i].contact = true;
    rows[i].error_w = i < 30 ? 1.0 - i / 30.0 : 0.01;
  }
  rows[40].error_w = 0.5;  // a late excursion resets the clock
  double t = -1.0;
  REQUIRE(settling_time(rows, 0.05, &t));
  CHECK(t == doctest::Approx(0.02 * 41));

  rows.back().error_w = 0.9;
  CHECK_FALSE(settling_time(rows, 0.05, &t));

  rows.back().error_w = 0.01;
  rows[60].contact = false;
  REQUIRE(settling_time(rows, 0.05, &t));
  CHECK(t == doctest::Approx(0.02 * 61));
}

TEST_CASE("plots are three deterministic SVG files") {
  const RunResult r = run_scenario(short_run("hexagon-mpc", 1.0));
  const fs::path a = scratch_dir("plots_a"), b = scratch_dir("plots_b");
  const auto files = emit_plots(r.log, a);
  emit_plots(r.log, b);
  REQUIRE(files.size() == 3);
  for (const fs::path& f : files) {
    const std::string text = slurp(f);
    CHECK(text.rfind("<?xml", 0) == 0);
    CHECK(text.find("<svg xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
    CHECK(text.find("</svg>") != std::string::npos);
    CHECK(text == slurp(b / f.filename()));
  }
  const std::string traj = slurp(a / "trajectory.svg");
  CHECK(traj.find("contour") != std::string::npos);
  CHECK(traj.find("sensor") != std::string::npos);
  CHECK(!r.log.contour.empty());
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("numerical diagnostics pass on small samples") {
  const JacobianCheck j = check_jacobians(5, 20);
  CHECK(j.states == 20);
  CHECK(j.point < 1e-5);
  CHECK(j.contour < 1e-5);
  CHECK(j.transition < 1e-5);
  CHECK(condensing_check(5, 5) < 1e-8);
  CHECK(rk4_order_ratio(5, 5) >= 12.0);
  CHECK(qp_kkt_check(5, 10, 20) <= 1e-8);
}
