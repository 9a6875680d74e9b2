// Command-line front end: scenario runner and structural self-check.
//
//   fcs run <scenario.json> --out <dir> [--seed <u64>] [--threads <n>]
//   fcs selfcheck [--filter <name>] [--seed <u64>]
//
// Exit codes: 0 success, 1 self-check failure, 2 scenario validation error,
// 3 numerical failure. Errors are emitted as one JSON object on stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "fcs/scenario.hpp"
#include "fcs/selfcheck.hpp"

namespace {

void emit_error(const std::string& code, const std::string& message) {
  fcs::json err;
  err["error"] = code;
  err["message"] = message;
  std::cerr << err.dump() << "\n";
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed, int threads) {
  std::ifstream in(scenario_path, std::ios::binary);
  if (!in) {
    emit_error("io", "cannot open scenario '" + scenario_path + "'");
    return 2;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    const fcs::Scenario sc = fcs::parse_scenario(buf.str());
    const fcs::json summary = fcs::run_scenario(sc, out_dir, seed, threads);
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const fcs::ScenarioError& e) {
    emit_error("validation", e.what());
    return 2;
  } catch (const fcs::Error& e) {
    emit_error(fcs::errc_name(e.code()), e.what());
    return 3;
  }
}

int cmd_selfcheck(const std::string& filter, std::uint64_t seed) {
  const auto results = fcs::run_selfcheck(filter, seed);
  if (results.empty()) {
    emit_error("validation", "no checks match filter '" + filter + "'");
    return 2;
  }
  int failures = 0;
  std::ostringstream report;
  for (const auto& r : results) {
    report << (r.pass ? "PASS" : "FAIL") << " " << r.name << " - " << r.detail << "\n";
    failures += r.pass ? 0 : 1;
  }
  std::cout << report.str();
  std::cout << (failures == 0 ? "all checks passed" : "FAILURES: " + std::to_string(failures))
            << " (report hash " << fcs::fnv1a_hex(report.str()) << ")\n";
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"counting statistics of stationary particle beams"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = ".", filter;
  std::optional<std::uint64_t> seed;
  std::uint64_t check_seed = 20240901;
  int threads = 1;

  auto* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--threads", threads, "worker threads for sweeps")
      ->check(CLI::PositiveNumber);

  auto* check = app.add_subcommand("selfcheck", "run the structural identity suite");
  check->add_option("--filter", filter, "substring filter on check names");
  check->add_option("--seed", check_seed, "seed for randomized checks");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(scenario_path, out_dir, seed, threads);
  return cmd_selfcheck(filter, check_seed);
}
