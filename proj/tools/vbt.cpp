// Command-line front end: sim, compare, bench-extract, check-jacobians, demo.

#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>

#include "CLI11.hpp"
#include "vbt/diagnostics.hpp"
#include "vbt/harness.hpp"

using namespace vbt;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0, kRunFailed = 1, kConfigError = 2;

bool run_ok(const RunMetrics& m) {
  return m.termination == Termination::Duration || m.termination == Termination::PathComplete;
}

void write_artifacts(const RunResult& r, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.string() + ": " + ec.message());
  write_csv(r.log, out / "run.csv");
  std::ofstream js(out / "metrics.json");
  if (!js) throw Error(ErrorCode::IoFailure, "cannot write " + (out / "metrics.json").string());
  js << to_json(r.metrics).dump(2) << '\n';
  emit_plots(r.log, out);
}

void print_summary(const RunMetrics& m) {
  std::printf("%s [%s]: %s, completion %.3f, settling %.2f s, v_x %.5f m/s, rmse r %.3e beta %.3e",
              m.scenario.c_str(), to_string(m.controller), to_string(m.termination), m.completion, m.settling_time,
              m.v_x_steady, m.rmse(0), m.rmse(1));
  if (m.controller == ControllerKind::Mpc) {
    std::printf(", solve %.2f +- %.2f ms", m.solve_time_mean_ms, m.solve_time_std_ms);
  }
  std::printf("\n");
  if (!m.failure.empty()) std::fprintf(stderr, "failure: %s\n", m.failure.c_str());
}

/// Loads and validates every config first so that a bad one writes nothing.
std::vector<Scenario> load_all(const std::vector<std::string>& paths, const std::optional<std::uint64_t>& seed) {
  std::vector<Scenario> out;
  for (const auto& p : paths) {
    Scenario s = load_scenario(p);
    if (seed) s.seed = *seed;
    out.push_back(std::move(s));
  }
  return out;
}

int sim(const std::string& config, const fs::path& out, const std::optional<std::uint64_t>& seed) {
  const Scenario s = load_all({config}, seed).front();
  const RunResult r = run_scenario(s);
  write_artifacts(r, out);
  print_summary(r.metrics);
  return run_ok(r.metrics) ? kOk : kRunFailed;
}

int compare(const std::vector<std::string>& configs, const std::optional<fs::path>& out,
            const std::optional<std::uint64_t>& seed) {
  const std::vector<Scenario> scenarios = load_all(configs, seed);
  std::vector<std::future<RunResult>> jobs;
  for (const Scenario& s : scenarios) jobs.push_back(std::async(std::launch::async, [&s] { return run_scenario(s); }));
  std::vector<RunMetrics> metrics;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const RunResult r = jobs[i].get();
    if (out) write_artifacts(r, *out / scenarios[i].name);
    metrics.push_back(r.metrics);
  }
  const ComparisonReport report = compare_runs(metrics);
  std::cout << report.table();
  return kOk;
}

int bench_extract(int count, double noise, std::uint64_t seed, const fs::path& out) {
  if (count < 1) throw Error(ErrorCode::ScenarioInvalid, "--count must be >= 1");
  const auto data = synthetic_dataset(count, noise, seed);
  const Extractor all[] = {Extractor::EaLF, Extractor::EaEF, Extractor::CaEF, Extractor::TSaLF};
  std::vector<std::future<ExtractionMetrics>> jobs;
  for (Extractor e : all) {
    jobs.push_back(std::async(std::launch::async, [&data, e] {
      return evaluate([e](const DepthImage& img) { return extract(e, img); }, data);
    }));
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.string() + ": " + ec.message());
  std::ofstream csv(out / "benchmark.csv");
  if (!csv) throw Error(ErrorCode::IoFailure, "cannot write " + (out / "benchmark.csv").string());
  csv << "method,position_error_px,position_std_px,orientation_error_rad,orientation_std_rad,"
         "discrepancy_rate_pct,time_ms,time_std_ms,failure_rate_pct\n";
  std::printf("%-6s %10s %10s %12s %10s\n", "method", "pos_px", "orient_rad", "discrep_pct", "time_ms");
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const ExtractionMetrics m = jobs[i].get();
    char line[256];
    std::snprintf(line, sizeof line, "%s,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", to_string(all[i]),
                  m.position_rmse, m.position_std, m.orientation_rmse, m.orientation_std, m.discrepancy_rate,
                  m.runtime_mean, m.runtime_std, m.failure_rate);
    csv << line;
    std::printf("%-6s %10.3f %10.4f %12.2f %10.2f\n", to_string(all[i]), m.position_rmse, m.orientation_rmse,
                m.discrepancy_rate, m.runtime_mean);
  }
  return kOk;
}

int check(std::uint64_t seed, int count) {
  const JacobianCheck j = check_jacobians(seed, count);
  const double tol = 1e-5;
  std::printf("states checked: %d\n", j.states);
  std::printf("J_P   max relative error %.3e %s\n", j.point, j.point < tol ? "ok" : "FAIL");
  std::printf("J_E   max relative error %.3e %s\n", j.contour, j.contour < tol ? "ok" : "FAIL");
  std::printf("EKF F max relative error %.3e %s\n", j.transition, j.transition < tol ? "ok" : "FAIL");
  return j.point < tol && j.contour < tol && j.transition < tol ? kOk : kRunFailed;
}

int demo(const std::string& name, const fs::path& out, const std::optional<std::uint64_t>& seed) {
  Scenario s = builtin_scenario(name);
  if (seed) s.seed = *seed;
  const RunResult r = run_scenario(s);
  write_artifacts(r, out);
  save_scenario(s, out / "scenario.json");
  print_summary(r.metrics);
  return run_ok(r.metrics) ? kOk : kRunFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile contour following: simulation, comparison and diagnostics"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out_dir = "out";
  auto* sim_cmd = app.add_subcommand("sim", "run one scenario file");
  sim_cmd->add_option("--config", config, "scenario JSON")->required();
  sim_cmd->add_option("--out", out_dir, "output directory")->required();
  sim_cmd->add_option("--seed", seed, "override the scenario seed");

  std::vector<std::string> configs;
  std::string compare_out;
  auto* cmp_cmd = app.add_subcommand("compare", "run several scenarios of one family and compare");
  cmp_cmd->add_option("--configs", configs, "scenario JSON files")->required();
  cmp_cmd->add_option("--out", compare_out, "write each run's artifacts under this directory");
  cmp_cmd->add_option("--seed", seed, "override every scenario seed");

  int count = 200;
  double noise = 2e-5;
  std::uint64_t bench_seed = 1;
  auto* bench_cmd = app.add_subcommand("bench-extract", "benchmark the contour extractors on synthetic frames");
  bench_cmd->add_option("--count", count, "number of frames");
  bench_cmd->add_option("--noise", noise, "depth noise std [m]");
  bench_cmd->add_option("--seed", bench_seed, "dataset seed");
  bench_cmd->add_option("--out", out_dir, "output directory");

  std::uint64_t check_seed = 42;
  int check_count = 100;
  auto* check_cmd = app.add_subcommand("check-jacobians", "finite-difference check of J_P, J_E and the EKF F");
  check_cmd->add_option("--seed", check_seed, "random state seed");
  check_cmd->add_option("--count", check_count, "number of random states");

  std::string demo_name;
  auto* demo_cmd = app.add_subcommand("demo", "run a built-in scenario");
  demo_cmd->add_option("scenario", demo_name, "one of: " + [] {
    std::string all;
    for (const auto& n : builtin_scenario_names()) all += (all.empty() ? "" : ", ") + n;
    return all;
  }())->required();
  demo_cmd->add_option("--out", out_dir, "output directory");
  demo_cmd->add_option("--seed", seed, "override the scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*sim_cmd) return sim(config, out_dir, seed);
    if (*cmp_cmd) {
      return compare(configs, compare_out.empty() ? std::nullopt : std::optional<fs::path>(compare_out), seed);
    }
    if (*bench_cmd) return bench_extract(count, noise, bench_seed, out_dir);
    if (*check_cmd) return check(check_seed, check_count);
    if (*demo_cmd) return demo(demo_name, out_dir, seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.code()) {
      case ErrorCode::ScenarioInvalid:
      case ErrorCode::MismatchedScenarios:
      case ErrorCode::IoFailure: return kConfigError;
      default: return kRunFailed;
    }
  }
  return kOk;
}
