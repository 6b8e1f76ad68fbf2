#include "dincikf/errors.hpp"
#include "dincikf/runner.hpp"
#include "test_support.hpp"

#include <fstream>
#include <sstream>

using namespace dincikf;
using dincikf::testing::scenario_path;

namespace {

ScenarioConfig chain3() { return load_scenario(scenario_path("chain3.json").string()); }
ScenarioConfig sim1() { return load_scenario(scenario_path("sim1.json").string()); }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

ScenarioConfig noiseless(ScenarioConfig cfg, double eps) {
  const Matrix6 tiny = eps * Matrix6::Identity();
  cfg.noise.process = tiny;
  cfg.noise.imu.gyro = eps * Matrix3::Identity();
  cfg.noise.imu.accel = eps * Matrix3::Identity();
  cfg.noise.object = tiny;
  cfg.noise.relative = tiny;
  cfg.noise.absolute = tiny;
  cfg.noise.initial_pose = tiny;
  cfg.noise.initial_velocity = eps * Matrix3::Identity();
  for (EdgeSpec& e : cfg.edges) e.noise_cov.reset();
  return cfg;
}

const std::vector<Algorithm> kAll = {Algorithm::DInCIKF, Algorithm::DInCIKFc, Algorithm::NaiveInEKF, Algorithm::CiOnly,
                                     Algorithm::Odometry};

}  // namespace

TEST(Run, SummaryIsByteIdenticalAcrossRunsAndThreads) {
  const ScenarioConfig cfg = sim1();
  RunOptions opt;
  opt.seed = 7;
  opt.steps = 40;
  const std::string a = summary_json(run_simulation(cfg, opt));
  const std::string b = summary_json(run_simulation(cfg, opt));
  opt.threads = 4;
  const std::string c = summary_json(run_simulation(cfg, opt));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  opt.seed = 8;
  EXPECT_NE(a, summary_json(run_simulation(cfg, opt)));
}

TEST(Run, SummaryKeys) {
  RunOptions opt;
  opt.steps = 5;
  opt.algorithm = Algorithm::CiOnly;
  const std::string s = summary_json(run_simulation(chain3(), opt));
  for (const char* key : {"\"algo\"", "\"seed\"", "\"per_robot\"", "\"avg_robot\"", "\"avg_object\"", "\"rmse_pos\"",
                          "\"rmse_rot\"", "\"note\"", "\"status\": \"ok\""})
    EXPECT_NE(s.find(key), std::string::npos) << key;
  EXPECT_NE(s.find("\"ci-only\""), std::string::npos);
}

TEST(Run, ArtifactsAndSchemas) {
  const std::filesystem::path out = std::filesystem::temp_directory_path() / "dincikf_runner_artifacts";
  std::filesystem::remove_all(out);
  RunOptions opt;
  opt.steps = 6;
  opt.log_messages = true;
  opt.aubs = true;
  opt.keep_trajectories = true;
  const ScenarioConfig cfg = chain3();
  const RunResult r = run_simulation(cfg, opt);
  write_run_artifacts(r, opt, out);

  const std::string metrics = read_file(out / "metrics.csv");
  EXPECT_EQ(first_line(metrics), "round,robot_id,err_rot_rad,err_pos_m,trace_P,nees,algo");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 1 + 6 * 3);
  EXPECT_EQ(read_file(out / "summary.json"), summary_json(r));
  const std::string traj = read_file(out / "trajectories.jsonl");
  EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), 6 * 3);
  const std::string msgs = read_file(out / "messages.jsonl");
  EXPECT_EQ(std::count(msgs.begin(), msgs.end(), '\n'), 6 * static_cast<long>(cfg.edges.size()));
  std::istringstream lines(msgs);
  std::string line;
  std::getline(lines, line);
  EXPECT_NO_THROW(message_from_json(line));
  EXPECT_EQ(first_line(read_file(out / "aubs.csv")), "round,robot_id,alpha,trace_Pi,trace_P,min_eig_diff");
  std::filesystem::remove_all(out);
}

TEST(Run, StepsOverrideAndValidation) {
  RunOptions opt;
  opt.steps = 3;
  EXPECT_EQ(run_simulation(chain3(), opt).rounds.size(), 3u);
  opt.steps = 0;
  EXPECT_THROW(run_simulation(chain3(), opt), InvalidArgument);
}

TEST(Run, NumericalFailureKeepsCompletedRounds) {
  // Exactly zero noise makes the first innovation covariance singular.
  ScenarioConfig cfg = noiseless(chain3(), 0.0);
  RunOptions opt;
  opt.steps = 5;
  const RunResult r = run_simulation(cfg, opt);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_EQ(static_cast<int>(r.rounds.size()), r.failure->round - 1);
  EXPECT_NE(summary_json(r).find("\"failed\""), std::string::npos);
}

TEST(Run, NoiselessClosureEveryVariant) {
  for (const bool se23 : {false, true}) {
    ScenarioConfig cfg = noiseless(chain3(), 1e-20);
    if (se23)
      for (RobotSpec& r : cfg.robots) r.model = GroupKind::SE23;
    for (const Algorithm algo : kAll) {
      RunOptions opt;
      opt.algorithm = algo;
      opt.steps = 20;
      const RunResult r = run_simulation(cfg, opt);
      ASSERT_FALSE(r.failure.has_value()) << to_string(algo) << ": " << r.failure->what;
      for (const RobotRoundRecord& x : r.rounds.back().robots) {
        EXPECT_LT(x.err_pos, 1e-6) << to_string(algo) << " robot " << x.robot_id << (se23 ? " SE23" : " SE3");
        EXPECT_LT(x.err_rot, 1e-6) << to_string(algo) << " robot " << x.robot_id;
      }
    }
  }
}

TEST(Run, TwoRobotMonteCarloIsConsistent) {
  ScenarioConfig cfg = chain3();
  cfg.robots.pop_back();
  std::erase_if(cfg.edges, [](const EdgeSpec& e) { return e.from == 3 || e.to == 3; });
  const int runs = 100;
  double sum = 0.0;
  int count = 0;
  for (int s = 0; s < runs; ++s) {
    RunOptions opt;
    opt.seed = 1000 + s;
    opt.steps = 20;
    const RunResult r = run_simulation(cfg, opt);
    ASSERT_FALSE(r.failure.has_value());
    for (const RobotRoundRecord& x : r.rounds.back().robots) {
      sum += x.nees;
      ++count;
    }
  }
  EXPECT_LT(sum / count, nees_mean_band(6, count).second);
}

TEST(Compare, RejectsBadSpecLists) {
  EXPECT_THROW(compare(std::vector<RunSpec>{}, {}), InvalidArgument);
  EXPECT_THROW(compare({{scenario_path("sim1.json").string(), Algorithm::DInCIKF, 1}}, {}), InvalidArgument);
  const std::vector<RunSpec> mixed = {{scenario_path("sim1.json").string(), Algorithm::DInCIKF, 1},
                                      {scenario_path("chain3.json").string(), Algorithm::Odometry, 1}};
  EXPECT_THROW(compare(mixed, {}), InvalidArgument);
}

TEST(Compare, IdenticalSpecsGiveIdenticalRows) {
  const std::vector<RunSpec> specs = {{scenario_path("chain3.json").string(), Algorithm::DInCIKF, 3},
                                      {scenario_path("chain3.json").string(), Algorithm::DInCIKF, 3}};
  CompareOptions o;
  o.steps = 10;
  const std::vector<CompareRow> rows = compare(specs, o);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].runs, 2);
  const RunResult single = run_simulation(chain3(), {.algorithm = Algorithm::DInCIKF, .seed = 3, .steps = 10});
  EXPECT_EQ(rows[0].avg_robot.pos, single.summary.avg_robot.pos);
  EXPECT_EQ(rows[0].per_robot, single.summary.per_robot);
}

TEST(Compare, CsvAndTableLayout) {
  std::vector<RunSpec> specs;
  for (const Algorithm a : kAll) specs.push_back({scenario_path("chain3.json").string(), a, 1});
  CompareOptions o;
  o.steps = 8;
  o.jobs = 3;
  const std::vector<CompareRow> rows = compare(specs, o);
  ASSERT_EQ(rows.size(), kAll.size());
  for (std::size_t k = 0; k < kAll.size(); ++k) EXPECT_EQ(rows[k].algorithm, kAll[k]);

  const std::string csv = compare_csv(rows);
  EXPECT_EQ(first_line(csv), "row,algo,runs,failed,rmse_pos_m,rmse_rot_rad,stand_in");
  // Three robots plus the two averages per algorithm.
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 5 * 5);
  EXPECT_NE(csv.find("avg_object,ci-only,1,0,"), std::string::npos);
  EXPECT_NE(csv.find("robot_2,dincikf,1,0,"), std::string::npos);
  const std::string table = compare_table(rows);
  EXPECT_NE(table.find("Average Robot"), std::string::npos);
  EXPECT_NE(table.find("ci-only*"), std::string::npos);
  EXPECT_NE(table.find("stand-in"), std::string::npos);
}

TEST(Compare, StoppedRunsAreCounted) {
  const ScenarioConfig cfg = noiseless(chain3(), 0.0);
  CompareOptions o;
  o.steps = 3;
  const std::vector<CompareRow> rows =
      compare(cfg, {{"", Algorithm::DInCIKF, 1}, {"", Algorithm::DInCIKF, 2}, {"", Algorithm::Odometry, 1}}, o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].runs, 2);
  EXPECT_EQ(rows[0].failed, 2);
  EXPECT_TRUE(std::isnan(rows[0].avg_robot.pos));
  EXPECT_EQ(rows[1].failed, 0);
  EXPECT_NE(compare_csv(rows).find("avg_robot,dincikf,2,2,nan,nan,0"), std::string::npos);
  EXPECT_NE(compare_table(rows).find("dincikf: 2 of 2 runs stopped early"), std::string::npos);
}

TEST(Compare, DistributedFilterBeatsOdometryOnSim1) {
  const std::vector<RunSpec> specs = {{scenario_path("sim1.json").string(), Algorithm::DInCIKF, 5},
                                      {scenario_path("sim1.json").string(), Algorithm::Odometry, 5}};
  CompareOptions o;
  o.steps = 120;
  const std::vector<CompareRow> rows = compare(specs, o);
  EXPECT_LT(rows[0].avg_robot.pos, rows[1].avg_robot.pos);
}

TEST(Median, OddEvenAndNonFinite) {
  EXPECT_EQ(median({3, 1, 2}), 2);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(median({1, std::numeric_limits<double>::quiet_NaN(), 5}), 3);
  EXPECT_TRUE(std::isnan(median({})));
}
