#include "dincikf/errors.hpp"
#include "dincikf/sim.hpp"
#include "test_support.hpp"

#include <json.hpp>

#include <numbers>

using namespace dincikf;
using dincikf::testing::max_abs;
using dincikf::testing::scenario_path;
using nlohmann::json;

namespace {

json identity6(double s) {
  json m = json::array();
  for (int r = 0; r < 6; ++r) {
    json row = json::array();
    for (int c = 0; c < 6; ++c) row.push_back(r == c ? s : 0.0);
    m.push_back(row);
  }
  return m;
}

/// Minimal valid scenario: one SE3 robot on a circle and one object.
json base_scenario() {
  return {
      {"seed", 3},
      {"dt", 0.1},
      {"steps", 50},
      {"visibility_radius", 5.0},
      {"robots", {{{"id", 1}, {"anchored", true},
                   {"trajectory", {{"type", "circle"}, {"center", {0, 0, 0}}, {"radius", 10.0}, {"rate", 0.1}}}}}},
      {"objects", {{{"id", 1}, {"position", {10.0, 0.0, 0.0}}}}},
      {"noise", {{"process", identity6(0.01)}, {"object", identity6(0.01)}, {"relative", identity6(0.01)},
                 {"absolute", identity6(0.01)}, {"initial_pose", identity6(0.01)}}},
  };
}

ScenarioConfig parse(const json& j, std::vector<std::string>* warnings = nullptr) {
  return parse_scenario(j.dump(), warnings);
}

std::string load_error(const json& j) {
  try {
    parse(j);
  } catch (const InvalidArgument& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Trajectory, CircleKeepsItsRadius) {
  for (const char* model : {"SE3", "SE23"}) {
    json j = base_scenario();
    j["steps"] = 1000;
    j["robots"][0]["model"] = model;
    const ScenarioConfig cfg = parse(j);
    WorldState w = initial_world(cfg);
    double worst = 0.0;
    for (int k = 0; k < cfg.steps; ++k) {
      w = ground_truth_step(w, cfg).world;
      worst = std::max(worst, std::abs(w.robots[0].translation().norm() - 10.0));
    }
    EXPECT_LT(worst, 1e-6) << model;
  }
}

TEST(Trajectory, InputsReproduceGroundTruth) {
  for (const char* model : {"SE3", "SE23"}) {
    json j = base_scenario();
    j["steps"] = 500;
    j["robots"][0]["model"] = model;
    j["robots"][0]["trajectory"]["center"] = {1.0, -2.0, 3.0};
    const ScenarioConfig cfg = parse(j);
    WorldState w = initial_world(cfg);
    GroupElement integrated = w.robots[0];
    double worst = 0.0;
    for (int k = 0; k < cfg.steps; ++k) {
      const GroundTruthStep s = ground_truth_step(w, cfg);
      if (const auto* u = std::get_if<ProcessInputSE3>(&s.inputs[0]))
        integrated = propagate_se3(integrated, *u);
      else
        integrated = propagate_se23(integrated, std::get<ImuSample>(s.inputs[0]), cfg.gravity);
      worst = std::max(worst, max_abs(integrated.matrix() - s.world.robots[0].matrix()));
      w = s.world;
    }
    EXPECT_LT(worst, 1e-8) << model;
  }
}

TEST(Trajectory, Sim1InputsReproduceGroundTruth) {
  const ScenarioConfig cfg = load_scenario(scenario_path("sim1.json").string());
  WorldState w = initial_world(cfg);
  double worst = 0.0;
  for (int k = 0; k < cfg.steps; ++k) {
    const GroundTruthStep s = ground_truth_step(w, cfg);
    for (std::size_t r = 0; r < cfg.robots.size(); ++r) {
      const GroupElement next = propagate_se3(w.robots[r], std::get<ProcessInputSE3>(s.inputs[r]));
      worst = std::max(worst, max_abs(next.matrix() - s.world.robots[r].matrix()));
    }
    EXPECT_EQ(s.world.objects.size(), w.objects.size());
    w = s.world;
  }
  EXPECT_LT(worst, 1e-8);
  EXPECT_THROW(ground_truth_step(w, cfg), InvalidArgument);
}

TEST(Trajectory, ZeroVelocityLeavesWorldUnchanged) {
  json j = base_scenario();
  j["robots"][0]["trajectory"] = {{"type", "waypoints"}, {"points", {{{"t", 0.0}, {"position", {1, 2, 3}}}}}};
  const ScenarioConfig cfg = parse(j);
  const WorldState w0 = initial_world(cfg);
  const GroundTruthStep s = ground_truth_step(w0, cfg);
  EXPECT_EQ(s.world.robots[0].matrix(), w0.robots[0].matrix());
  const auto& u = std::get<ProcessInputSE3>(s.inputs[0]);
  EXPECT_EQ(u.increment(), Vector6::Zero());
}

TEST(Trajectory, WaypointsHitEndpointsAndLoop) {
  TrajectorySpec t;
  t.type = TrajectorySpec::Type::Waypoints;
  t.waypoints = {{0.0, Vector3(0, 0, 0), 0.0}, {10.0, Vector3(10, 0, 0), 0.5}, {20.0, Vector3(10, 10, 0), 1.0}};
  EXPECT_EQ(trajectory_pose(t, 0.0).translation(), Vector3(0, 0, 0));
  EXPECT_EQ(trajectory_pose(t, 10.0).translation(), Vector3(10, 0, 0));
  EXPECT_EQ(trajectory_pose(t, 20.0).translation(), Vector3(10, 10, 0));
  EXPECT_EQ(trajectory_pose(t, 25.0).translation(), Vector3(10, 10, 0));
  EXPECT_LT((trajectory_pose(t, 5.0).translation() - Vector3(5, 0, 0)).norm(), 1e-15);
  t.loop = true;
  EXPECT_LT((trajectory_pose(t, 25.0).translation() - Vector3(5, 0, 0)).norm(), 1e-12);
}

TEST(Sense, VisibilityBoundaryIsInclusive) {
  json j = base_scenario();
  j["robots"][0]["trajectory"] = {{"type", "waypoints"}, {"points", {{{"t", 0.0}, {"position", {0, 0, 0}}}}}};
  j["objects"] = {{{"id", 1}, {"position", {5.0 - 1e-9, 0.0, 0.0}}},
                  {{"id", 2}, {"position", {0.0, 5.0 + 1e-9, 0.0}}},
                  {{"id", 3}, {"position", {0.0, 0.0, 5.0}}}};
  const ScenarioConfig cfg = parse(j);
  const auto ms = sense(initial_world(cfg), cfg, 0);
  std::vector<int> seen;
  for (const Measurement& m : ms[0])
    if (m.kind == MeasurementKind::ObjectRel) seen.push_back(m.subject);
  EXPECT_EQ(seen, (std::vector<int>{1, 3}));
  const bool absolute = std::any_of(ms[0].begin(), ms[0].end(),
                                    [](const Measurement& m) { return m.kind == MeasurementKind::Absolute; });
  EXPECT_TRUE(absolute);
}

TEST(Sense, Sim1BlindSpots) {
  const ScenarioConfig cfg = load_scenario(scenario_path("sim1.json").string());
  WorldState w = initial_world(cfg);
  std::map<int, int> longest;
  std::map<int, int> current;
  for (int k = 0; k < cfg.steps; ++k) {
    w = ground_truth_step(w, cfg).world;
    const auto ms = sense(w, cfg, 0);
    for (std::size_t r = 0; r < cfg.robots.size(); ++r) {
      double nearest = std::numeric_limits<double>::infinity();
      for (const GroupElement& o : w.objects)
        nearest = std::min(nearest, (o.translation() - w.robots[r].translation()).norm());
      const bool any = std::any_of(ms[r].begin(), ms[r].end(),
                                   [](const Measurement& m) { return m.kind == MeasurementKind::ObjectRel; });
      EXPECT_EQ(any, nearest <= cfg.visibility_radius) << "robot " << cfg.robots[r].id << " round " << w.round;
      const int id = cfg.robots[r].id;
      current[id] = any ? 0 : current[id] + 1;
      longest[id] = std::max(longest[id], current[id]);
    }
  }
  EXPECT_GE(longest[1], 100);
  EXPECT_GE(longest[5], 100);
  for (int id : {2, 3, 4}) EXPECT_EQ(longest[id], 0) << "robot " << id;
}

TEST(Sense, StreamsAreDeterministicAndIndependent) {
  const ScenarioConfig cfg = load_scenario(scenario_path("chain3.json").string());
  const WorldState w = ground_truth_step(initial_world(cfg), cfg).world;
  const auto a = sense(w, cfg, 9);
  const auto b = sense(w, cfg, 9);
  ScenarioConfig quiet = cfg;
  quiet.noise.object.setZero();
  const auto c = sense(w, quiet, 9);
  const auto d = sense(w, cfg, 10);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    ASSERT_EQ(a[r].size(), c[r].size());
    for (std::size_t k = 0; k < a[r].size(); ++k) {
      EXPECT_EQ(a[r][k].pose.matrix(), b[r][k].pose.matrix());
      if (a[r][k].kind != MeasurementKind::ObjectRel) {
        EXPECT_EQ(a[r][k].pose.matrix(), c[r][k].pose.matrix());
      }
      EXPECT_NE(a[r][k].pose.matrix(), d[r][k].pose.matrix());
    }
  }
}

TEST(Sense, RelativeMeasurementsFollowEdges) {
  const ScenarioConfig cfg = load_scenario(scenario_path("chain3.json").string());
  const auto ms = sense(initial_world(cfg), cfg, 0);
  std::vector<std::pair<int, int>> rel;
  for (const auto& list : ms)
    for (const Measurement& m : list)
      if (m.kind == MeasurementKind::RobotRel) rel.emplace_back(m.observer, m.subject);
  std::sort(rel.begin(), rel.end());
  EXPECT_EQ(rel, (std::vector<std::pair<int, int>>{{1, 2}, {2, 1}, {2, 3}, {3, 2}}));
}

TEST(Noise, NoisyInputMatchesIncrementModel) {
  ProcessInputSE3 u;
  u.v = Vector3(1, 0, 0);
  u.omega = Vector3(0, 0, 0.2);
  u.noise_cov = 0.01 * Matrix6::Identity();
  RandomStream a(5);
  RandomStream b(5);
  const auto noisy = std::get<ProcessInputSE3>(noisy_input(u, a));
  const Vector6 n = b.gaussian(u.noise_cov);
  const GroupElement expected =
      lie::exp(TangentVector(GroupKind::SE3, n)) * lie::exp(TangentVector(GroupKind::SE3, u.increment()));
  EXPECT_LT(max_abs(lie::exp(TangentVector(GroupKind::SE3, noisy.increment())).matrix() - expected.matrix()), 1e-12);
}

TEST(Noise, InitialBeliefsUseConfiguredCovariance) {
  json j = base_scenario();
  j["noise"]["initial_pose"] = identity6(0.0);
  const ScenarioConfig cfg = parse(j);
  const WorldState w = initial_world(cfg);
  const auto beliefs = initial_beliefs(w, cfg, 0);
  ASSERT_EQ(beliefs.size(), 1u);
  EXPECT_LT(max_abs(beliefs[0].own_state().matrix() - w.robots[0].matrix()), 1e-15);
  EXPECT_EQ(beliefs[0].cov(), MatrixXd::Zero(6, 6));

  json k = base_scenario();
  k["robots"][0]["model"] = "SE23";
  k["noise"]["initial_velocity"] = {{0.5, 0, 0}, {0, 0.5, 0}, {0, 0, 0.5}};
  const MatrixXd p = initial_covariance(parse(k), GroupKind::SE23);
  EXPECT_EQ(p.rows(), 9);
  EXPECT_EQ(p(8, 8), 0.5);
}

TEST(LoadScenario, Sim1Shape) {
  const ScenarioConfig cfg = load_scenario(scenario_path("sim1.json").string());
  EXPECT_EQ(cfg.robots.size(), 5u);
  EXPECT_EQ(cfg.objects.size(), 38u);
  EXPECT_EQ(cfg.visibility_radius, 15.0);
  EXPECT_EQ(cfg.object_gate, 6);
  for (const RobotSpec& r : cfg.robots) EXPECT_EQ(r.anchored, r.id == 2);
  EXPECT_EQ(cfg.noise.object, 0.01 * Matrix6::Identity());
  EXPECT_EQ(cfg.noise.process, 0.01 * Matrix6::Identity());
}

TEST(LoadScenario, MissingSeedWarns) {
  json j = base_scenario();
  j.erase("seed");
  std::vector<std::string> warnings;
  const ScenarioConfig cfg = parse(j, &warnings);
  EXPECT_EQ(cfg.seed, 0u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("seed"), std::string::npos);
}

TEST(LoadScenario, ErrorsNameTheField) {
  json j = base_scenario();
  j["noise"]["object"][2][2] = -0.5;
  EXPECT_NE(load_error(j).find("$.noise.object"), std::string::npos);

  j = base_scenario();
  j["steps"] = 0;
  EXPECT_NE(load_error(j).find("$.steps"), std::string::npos);

  j = base_scenario();
  j["visibility_radius"] = -1.0;
  EXPECT_NE(load_error(j).find("$.visibility_radius"), std::string::npos);

  j = base_scenario();
  j["objects"].push_back(j["objects"][0]);
  EXPECT_NE(load_error(j).find("$.objects[1].id"), std::string::npos);

  j = base_scenario();
  j["robots"][0]["model"] = "SE23";
  j["robots"][0]["trajectory"] = {{"type", "waypoints"}, {"points", {{{"t", 0.0}, {"position", {0, 0, 0}}}}}};
  EXPECT_NE(load_error(j).find("$.robots[0].trajectory"), std::string::npos);

  j = base_scenario();
  j["graph"] = {{"edges", {{{"from", 1}, {"to", 7}}}}};
  EXPECT_NE(load_error(j).find("$.graph.edges[0].to"), std::string::npos);

  j = base_scenario();
  j.erase("noise");
  EXPECT_NE(load_error(j).find("$.noise"), std::string::npos);

  EXPECT_THROW(parse_scenario("{not json"), InvalidArgument);
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), InvalidArgument);
}

TEST(LoadScenario, AcceptsFlatMatrices) {
  json j = base_scenario();
  json flat = json::array();
  for (int k = 0; k < 36; ++k) flat.push_back(k % 7 == 0 ? 0.02 : 0.0);
  j["noise"]["object"] = flat;
  EXPECT_EQ(parse(j).noise.object, 0.02 * Matrix6::Identity());
}
