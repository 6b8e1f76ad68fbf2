#pragma once

// Simulation driver: runs one algorithm variant over a scenario, collects
// metrics and writes the run artifacts; multi-seed comparisons on top.

#include "dincikf/analysis.hpp"
#include "dincikf/filter.hpp"
#include "dincikf/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dincikf {

struct RunOptions {
  Algorithm algorithm = Algorithm::DInCIKF;
  std::optional<std::uint64_t> seed;  // overrides the scenario seed
  std::optional<int> steps;           // overrides the scenario step count
  bool log_messages = false;
  bool aubs = false;
  bool keep_trajectories = false;
  int threads = 1;  // per-robot parallelism inside a round
};

struct RobotRoundRecord {
  int robot_id = -1;
  double err_rot = 0.0;
  double err_pos = 0.0;
  double trace_p = 0.0;  // robot block
  double nees = 0.0;     // NaN when the robot block is singular
  double gamma = 1.0;
};

struct AubsRecord {
  int robot_id = -1;
  double alpha = 1.0;
  double trace_pi = 0.0;
  double trace_p = 0.0;
  double min_eig_diff = 0.0;  // min eigenvalue of Pi_hat - P_hat
};

struct RoundRecord {
  int round = 0;
  std::vector<RobotRoundRecord> robots;
  Rmse avg_robot;
  std::optional<Rmse> avg_object;  // absent while no robot tracks any object
  std::vector<AubsRecord> aubs;
};

struct RunFailure {
  int round = 0;
  std::string what;
};

struct RunSummary {
  Algorithm algorithm = Algorithm::DInCIKF;
  std::uint64_t seed = 0;
  int rounds = 0;
  std::map<int, Rmse> per_robot;  // time averages of the per-round errors
  Rmse avg_robot;
  Rmse avg_object;
};

struct RunResult {
  RunSummary summary;
  std::vector<RoundRecord> rounds;
  std::vector<std::string> messages;      // JSONL lines when log_messages is set
  std::vector<std::string> trajectories;  // JSONL lines when keep_trajectories is set
  std::vector<RobotBelief> final_beliefs;
  WorldState final_world;
  std::optional<RunFailure> failure;
};

/// Runs all rounds. Numerical failures stop the run and are reported in `failure`
/// together with the rounds completed so far.
RunResult run_simulation(const ScenarioConfig& cfg, const RunOptions& options);

bool is_stand_in(Algorithm a);
std::string stand_in_note(Algorithm a);

/// Deterministic summary document (keys sorted, shortest round-trip numbers).
std::string summary_json(const RunResult& result);

/// Writes metrics.csv, summary.json, trajectories.jsonl, and messages.jsonl / aubs.csv
/// when requested.
void write_run_artifacts(const RunResult& result, const RunOptions& options, const std::filesystem::path& out);

struct RunSpec {
  std::string scenario;
  Algorithm algorithm = Algorithm::DInCIKF;
  std::optional<std::uint64_t> seed;
};

struct CompareRow {
  Algorithm algorithm = Algorithm::DInCIKF;
  int runs = 0;
  int failed = 0;  // runs stopped early; their completed rounds still enter the medians
  std::map<int, Rmse> per_robot;  // medians over runs
  Rmse avg_robot;
  Rmse avg_object;
};

struct CompareOptions {
  std::optional<int> steps;
  int jobs = 1;  // concurrent runs
};

/// Runs every spec and reports per-algorithm medians, in first-appearance order.
/// Throws InvalidArgument for fewer than two specs or specs naming different scenarios.
std::vector<CompareRow> compare(const std::vector<RunSpec>& specs, const CompareOptions& options);
/// Same on an already loaded scenario.
std::vector<CompareRow> compare(const ScenarioConfig& cfg, const std::vector<RunSpec>& specs,
                                const CompareOptions& options);

/// Long-form CSV: row,algo,runs,failed,rmse_pos_m,rmse_rot_rad,stand_in.
std::string compare_csv(const std::vector<CompareRow>& rows);
/// Table with one column per algorithm and "pos/rot" cells.
std::string compare_table(const std::vector<CompareRow>& rows);

double median(std::vector<double> values);

}  // namespace dincikf
