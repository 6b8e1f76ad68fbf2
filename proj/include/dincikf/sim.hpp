#pragma once

// Ground-truth world, trajectories and measurement synthesis.
//
// Round k: the world moves from k-1 to k under the emitted control inputs,
// then every robot senses the world at k.

#include "dincikf/filter.hpp"
#include "dincikf/network.hpp"
#include "dincikf/rng.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dincikf {

struct Waypoint {
  double t = 0.0;
  Vector3 position = Vector3::Zero();
  double yaw = 0.0;
};

/// Either a horizontal circle traversed at a constant rate (heading tangent to the
/// circle) or piecewise-linear waypoints in position and yaw. Waypoint paths are held
/// after the last point unless `loop` is set, in which case time wraps at the last point.
struct TrajectorySpec {
  enum class Type { Circle, Waypoints };
  Type type = Type::Circle;
  Vector3 center = Vector3::Zero();
  double radius = 0.0;
  double rate = 0.0;   // rad/s, sign gives the direction
  double phase = 0.0;  // rad
  std::vector<Waypoint> waypoints;
  bool loop = false;
};

struct RobotSpec {
  int id = -1;
  GroupKind model = GroupKind::SE3;
  TrajectorySpec trajectory;
  bool anchored = false;
};

struct ObjectSpec {
  int id = -1;
  GroupElement pose;
};

struct EdgeSpec {
  int from = -1;
  int to = -1;
  std::optional<Matrix6> noise_cov;  // defaults to NoiseSpec::relative
};

struct NoiseSpec {
  Matrix6 process = Matrix6::Zero();   // S_u of the pose increments
  ImuNoise imu;                        // continuous densities
  Vector3 gyro_bias = Vector3::Zero();
  Vector3 accel_bias = Vector3::Zero();
  Matrix6 object = Matrix6::Zero();    // R_if
  Matrix6 relative = Matrix6::Zero();  // R_ij
  Matrix6 absolute = Matrix6::Zero();  // R_io
  Matrix6 initial_pose = Matrix6::Zero();
  Matrix3 initial_velocity = Matrix3::Zero();
};

struct ScenarioConfig {
  std::string name;
  std::vector<RobotSpec> robots;
  std::vector<ObjectSpec> objects;
  double visibility_radius = 0.0;
  std::vector<EdgeSpec> edges;
  NoiseSpec noise;
  int object_gate = 6;
  double dt = 1.0;
  int steps = 1;
  std::uint64_t seed = 0;
  Vector3 gravity = Vector3(0.0, 0.0, -9.81);

  CommGraph graph() const;
  int robot_index(int id) const;
};

/// Parses and validates a scenario. Errors carry the JSON field path. A missing
/// seed defaults to 0 and appends a message to `warnings` when given.
ScenarioConfig parse_scenario(const std::string& text, std::vector<std::string>* warnings = nullptr);
ScenarioConfig load_scenario(const std::string& path, std::vector<std::string>* warnings = nullptr);

struct WorldState {
  int round = 0;
  std::vector<GroupElement> robots;  // in ScenarioConfig::robots order
  std::vector<GroupElement> objects;
};

/// Ground-truth pose of a trajectory at time t (SE3).
GroupElement trajectory_pose(const TrajectorySpec& spec, double t);

WorldState initial_world(const ScenarioConfig& cfg);

struct GroundTruthStep {
  WorldState world;
  std::vector<ControlInput> inputs;  // noiseless, one per robot
};

/// Advances every robot by dt. The emitted inputs reproduce the new world when
/// propagated without noise.
GroundTruthStep ground_truth_step(const WorldState& w, const ScenarioConfig& cfg);

// Random-stream slots, combined with (seed, robot, round).
inline constexpr std::uint64_t kSlotProcess = 1;
inline constexpr std::uint64_t kSlotAbsolute = 2;
inline constexpr std::uint64_t kSlotInitial = 3;
inline constexpr std::uint64_t kSlotObjectBase = 1000;
inline constexpr std::uint64_t kSlotRobotBase = 1000000;

/// Measurements of round w.round: objects within the visibility radius (inclusive),
/// one relative measurement per graph edge (by the edge's sender), and an absolute
/// measurement for anchored robots. Indexed like ScenarioConfig::robots.
std::vector<std::vector<Measurement>> sense(const WorldState& w, const ScenarioConfig& cfg, std::uint64_t seed);

/// Noisy version of a noiseless input as the robot's odometry reports it.
ControlInput noisy_input(const ControlInput& exact, RandomStream& rng);

/// Initial beliefs exp(xi0) X0 with xi0 ~ N(0, P0).
std::vector<RobotBelief> initial_beliefs(const WorldState& w, const ScenarioConfig& cfg, std::uint64_t seed);

/// Initial covariance P0 for a robot model.
MatrixXd initial_covariance(const ScenarioConfig& cfg, GroupKind model);

}  // namespace dincikf
