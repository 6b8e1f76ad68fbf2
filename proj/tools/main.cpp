// Command-line front end: `run` a single variant or `compare` several.

#include "dincikf/errors.hpp"
#include "dincikf/runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace dincikf;

int do_run(const std::string& scenario, const std::string& algo, std::optional<std::uint64_t> seed,
           const std::string& out, std::optional<int> steps, bool log_messages, bool aubs, int threads) {
  std::vector<std::string> warnings;
  const ScenarioConfig cfg = load_scenario(scenario, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";

  RunOptions opt;
  opt.algorithm = algorithm_from_string(algo);
  opt.seed = seed;
  opt.steps = steps;
  opt.log_messages = log_messages;
  opt.aubs = aubs;
  opt.keep_trajectories = true;
  opt.threads = threads;
  const RunResult result = run_simulation(cfg, opt);
  write_run_artifacts(result, opt, out);

  if (is_stand_in(opt.algorithm)) std::cerr << "note: " << stand_in_note(opt.algorithm) << "\n";
  if (result.failure) {
    std::cerr << "error: run stopped at round " << result.failure->round << ": " << result.failure->what << "\n";
    return 3;
  }
  std::cout << "avg robot RMSE pos " << result.summary.avg_robot.pos << " m, rot " << result.summary.avg_robot.rot
            << " rad over " << result.summary.rounds << " rounds\n";
  if (aubs) {
    double worst = std::numeric_limits<double>::infinity();
    for (const RoundRecord& r : result.rounds)
      for (const AubsRecord& a : r.aubs) worst = std::min(worst, a.min_eig_diff);
    std::cout << "min eigenvalue of Pi_hat - P_hat over the run: " << worst << "\n";
  }
  return 0;
}

int do_compare(const std::string& scenario, const std::vector<std::string>& algos, int seeds, std::uint64_t first_seed,
               const std::string& out, std::optional<int> steps, int jobs) {
  std::vector<RunSpec> specs;
  for (const std::string& a : algos)
    for (int s = 0; s < seeds; ++s) specs.push_back({scenario, algorithm_from_string(a), first_seed + s});
  CompareOptions opt;
  opt.steps = steps;
  opt.jobs = jobs;
  const std::vector<CompareRow> rows = compare(specs, opt);
  std::filesystem::create_directories(out);
  std::ofstream(std::filesystem::path(out) / "compare.csv") << compare_csv(rows);
  const std::string table = compare_table(rows);
  std::ofstream(std::filesystem::path(out) / "compare.txt") << table;
  std::cout << table;
  for (const CompareRow& r : rows)
    if (r.failed > 0) {
      std::cerr << "error: " << r.failed << " " << to_string(r.algorithm) << " runs stopped early (artifacts written)\n";
      return 3;
    }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed invariant Kalman filtering with covariance intersection"};
  app.require_subcommand(1);

  std::string scenario;
  std::string algo = "dincikf";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<int> steps;
  bool log_messages = false;
  bool aubs = false;
  int threads = 1;

  CLI::App* run = app.add_subcommand("run", "Run one algorithm variant over a scenario");
  run->add_option("--scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run->add_option("--algo", algo, "dincikf | dincikfc | naive-inekf | ci-only | odometry")
      ->check(CLI::IsMember({"dincikf", "dincikfc", "naive-inekf", "ci-only", "odometry"}));
  run->add_option("--seed", seed, "Seed overriding the scenario's");
  run->add_option("--out", out, "Output directory");
  run->add_option("--steps", steps, "Round count overriding the scenario's")->check(CLI::PositiveNumber);
  run->add_flag("--log-messages", log_messages, "Write messages.jsonl");
  run->add_flag("--aubs", aubs, "Track the auxiliary upper bound and write aubs.csv");
  run->add_option("--threads", threads, "Per-robot worker threads inside a round")->check(CLI::PositiveNumber);

  std::vector<std::string> algos = {"dincikfc", "dincikf", "ci-only", "naive-inekf", "odometry"};
  int seeds = 30;
  std::uint64_t first_seed = 0;
  int jobs = 1;
  CLI::App* cmp = app.add_subcommand("compare", "Median RMSE of several variants over many seeds");
  cmp->add_option("--scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  cmp->add_option("--algos", algos, "Variants to compare")->delimiter(',');
  cmp->add_option("--seeds", seeds, "Number of seeds per variant")->check(CLI::PositiveNumber);
  cmp->add_option("--first-seed", first_seed, "First seed");
  cmp->add_option("--out", out, "Output directory");
  cmp->add_option("--steps", steps, "Round count overriding the scenario's")->check(CLI::PositiveNumber);
  cmp->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return do_run(scenario, algo, seed, out, steps, log_messages, aubs, threads);
    return do_compare(scenario, algos, seeds, first_seed, out, steps, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
