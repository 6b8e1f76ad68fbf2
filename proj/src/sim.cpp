#include "dincikf/sim.hpp"

#include "dincikf/errors.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace dincikf {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InvalidArgument("scenario: " + path + ": " + what);
}

const json& field(const json& j, const std::string& path, const char* key) {
  if (!j.is_object()) fail(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing required field");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "must be finite");
  return v;
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<int>();
}

Vector3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) fail(path, "expected an array of 3 numbers");
  Vector3 v;
  for (int k = 0; k < 3; ++k) v[k] = number(j[k], path + "[" + std::to_string(k) + "]");
  return v;
}

/// Row-major matrix, either flat (n*n numbers) or nested (n rows of n).
MatrixXd matrix(const json& j, int n, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a row-major array");
  MatrixXd m(n, n);
  if (j.size() == static_cast<std::size_t>(n * n) && (n == 1 || !j[0].is_array())) {
    for (int k = 0; k < n * n; ++k) m(k / n, k % n) = number(j[k], path + "[" + std::to_string(k) + "]");
  } else if (j.size() == static_cast<std::size_t>(n)) {
    for (int r = 0; r < n; ++r) {
      const std::string rp = path + "[" + std::to_string(r) + "]";
      if (!j[r].is_array() || j[r].size() != static_cast<std::size_t>(n))
        fail(rp, "expected a row of " + std::to_string(n) + " numbers");
      for (int c = 0; c < n; ++c) m(r, c) = number(j[r][c], rp + "[" + std::to_string(c) + "]");
    }
  } else {
    fail(path, "expected " + std::to_string(n * n) + " entries or " + std::to_string(n) + " rows");
  }
  return m;
}

MatrixXd covariance(const json& j, int n, const std::string& path) {
  const MatrixXd m = matrix(j, n, path);
  if (asymmetry(m) > 1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff())) fail(path, "covariance is not symmetric");
  const double lo = min_eigenvalue(m);
  if (lo < -1e-12 * std::max(1.0, m.cwiseAbs().maxCoeff()))
    fail(path, "covariance is not positive semidefinite (min eigenvalue " + std::to_string(lo) + ")");
  return m;
}

Matrix3 rpy_rotation(const Vector3& rpy) {
  return (Eigen::AngleAxisd(rpy[2], Vector3::UnitZ()) * Eigen::AngleAxisd(rpy[1], Vector3::UnitY()) *
          Eigen::AngleAxisd(rpy[0], Vector3::UnitX()))
      .toRotationMatrix();
}

Matrix3 yaw_rotation(double yaw) { return Eigen::AngleAxisd(yaw, Vector3::UnitZ()).toRotationMatrix(); }

TrajectorySpec parse_trajectory(const json& j, const std::string& path) {
  TrajectorySpec t;
  const json& type = field(j, path, "type");
  if (!type.is_string()) fail(path + ".type", "expected a string");
  const std::string name = type.get<std::string>();
  if (name == "circle") {
    t.type = TrajectorySpec::Type::Circle;
    t.center = vec3(field(j, path, "center"), path + ".center");
    t.radius = number(field(j, path, "radius"), path + ".radius");
    t.rate = number(field(j, path, "rate"), path + ".rate");
    if (j.contains("phase")) t.phase = number(j["phase"], path + ".phase");
    if (t.radius < 0.0) fail(path + ".radius", "must be non-negative");
  } else if (name == "waypoints") {
    t.type = TrajectorySpec::Type::Waypoints;
    const json& pts = field(j, path, "points");
    if (!pts.is_array() || pts.empty()) fail(path + ".points", "expected a non-empty array");
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const std::string pp = path + ".points[" + std::to_string(k) + "]";
      Waypoint w;
      w.t = number(field(pts[k], pp, "t"), pp + ".t");
      w.position = vec3(field(pts[k], pp, "position"), pp + ".position");
      if (pts[k].contains("yaw")) w.yaw = number(pts[k]["yaw"], pp + ".yaw");
      if (!t.waypoints.empty() && !(w.t > t.waypoints.back().t)) fail(pp + ".t", "waypoint times must increase");
      t.waypoints.push_back(w);
    }
    if (j.contains("loop")) {
      if (!j["loop"].is_boolean()) fail(path + ".loop", "expected a boolean");
      t.loop = j["loop"].get<bool>();
    }
    if (t.loop && !(t.waypoints.size() >= 2 && t.waypoints.front().t == 0.0))
      fail(path + ".points", "a looping path needs at least two points starting at t = 0");
  } else {
    fail(path + ".type", "unknown trajectory type '" + name + "' (expected circle or waypoints)");
  }
  return t;
}

}  // namespace

CommGraph ScenarioConfig::graph() const {
  std::vector<int> ids;
  std::vector<int> anchors;
  for (const RobotSpec& r : robots) {
    ids.push_back(r.id);
    if (r.anchored) anchors.push_back(r.id);
  }
  std::vector<CommEdge> out;
  for (const EdgeSpec& e : edges) out.push_back({e.from, e.to, e.noise_cov.value_or(noise.relative)});
  return CommGraph(ids, out, anchors);
}

int ScenarioConfig::robot_index(int id) const {
  for (std::size_t k = 0; k < robots.size(); ++k)
    if (robots[k].id == id) return static_cast<int>(k);
  throw InvalidArgument("unknown robot id " + std::to_string(id));
}

ScenarioConfig parse_scenario(const std::string& text, std::vector<std::string>* warnings) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("scenario: invalid JSON: ") + e.what());
  }
  const std::string p = "$";
  ScenarioConfig cfg;
  if (root.contains("name")) cfg.name = root["name"].is_string() ? root["name"].get<std::string>() : "";

  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned() && !root["seed"].is_number_integer()) fail(p + ".seed", "expected an integer");
    if (root["seed"].is_number_integer() && !root["seed"].is_number_unsigned() && root["seed"].get<std::int64_t>() < 0)
      fail(p + ".seed", "must be non-negative");
    cfg.seed = root["seed"].get<std::uint64_t>();
  } else if (warnings) {
    warnings->push_back("scenario has no seed; using 0");
  }

  cfg.dt = number(field(root, p, "dt"), p + ".dt");
  if (!(cfg.dt > 0.0)) fail(p + ".dt", "must be positive");
  cfg.steps = integer(field(root, p, "steps"), p + ".steps");
  if (cfg.steps <= 0) fail(p + ".steps", "must be positive");
  cfg.visibility_radius = number(field(root, p, "visibility_radius"), p + ".visibility_radius");
  if (!(cfg.visibility_radius > 0.0)) fail(p + ".visibility_radius", "must be positive");
  if (root.contains("N_o")) {
    cfg.object_gate = integer(root["N_o"], p + ".N_o");
    if (cfg.object_gate < 0) fail(p + ".N_o", "must be non-negative");
  }
  if (root.contains("gravity")) cfg.gravity = vec3(root["gravity"], p + ".gravity");

  const json& noise = field(root, p, "noise");
  const std::string np = p + ".noise";
  cfg.noise.process = covariance(field(noise, np, "process"), 6, np + ".process");
  cfg.noise.object = covariance(field(noise, np, "object"), 6, np + ".object");
  cfg.noise.relative = covariance(field(noise, np, "relative"), 6, np + ".relative");
  cfg.noise.absolute = covariance(field(noise, np, "absolute"), 6, np + ".absolute");
  cfg.noise.initial_pose = covariance(field(noise, np, "initial_pose"), 6, np + ".initial_pose");
  if (noise.contains("initial_velocity"))
    cfg.noise.initial_velocity = covariance(noise["initial_velocity"], 3, np + ".initial_velocity");
  if (noise.contains("imu")) {
    const json& imu = noise["imu"];
    const std::string ip = np + ".imu";
    cfg.noise.imu.gyro = covariance(field(imu, ip, "gyro"), 3, ip + ".gyro");
    cfg.noise.imu.accel = covariance(field(imu, ip, "accel"), 3, ip + ".accel");
    if (imu.contains("gyro_bias")) cfg.noise.gyro_bias = vec3(imu["gyro_bias"], ip + ".gyro_bias");
    if (imu.contains("accel_bias")) cfg.noise.accel_bias = vec3(imu["accel_bias"], ip + ".accel_bias");
  }

  const json& robots = field(root, p, "robots");
  if (!robots.is_array() || robots.empty()) fail(p + ".robots", "expected a non-empty array");
  std::set<int> robot_ids;
  for (std::size_t k = 0; k < robots.size(); ++k) {
    const std::string rp = p + ".robots[" + std::to_string(k) + "]";
    RobotSpec r;
    r.id = integer(field(robots[k], rp, "id"), rp + ".id");
    if (r.id < 0) fail(rp + ".id", "must be non-negative");
    if (!robot_ids.insert(r.id).second) fail(rp + ".id", "duplicate robot id " + std::to_string(r.id));
    if (robots[k].contains("model")) {
      const json& m = robots[k]["model"];
      if (!m.is_string()) fail(rp + ".model", "expected a string");
      const std::string name = m.get<std::string>();
      if (name == "SE3")
        r.model = GroupKind::SE3;
      else if (name == "SE23")
        r.model = GroupKind::SE23;
      else
        fail(rp + ".model", "unknown model '" + name + "' (expected SE3 or SE23)");
    }
    if (robots[k].contains("anchored")) {
      if (!robots[k]["anchored"].is_boolean()) fail(rp + ".anchored", "expected a boolean");
      r.anchored = robots[k]["anchored"].get<bool>();
    }
    r.trajectory = parse_trajectory(field(robots[k], rp, "trajectory"), rp + ".trajectory");
    if (r.model == GroupKind::SE23 && r.trajectory.type != TrajectorySpec::Type::Circle)
      fail(rp + ".trajectory", "SE23 robots support circle trajectories only");
    cfg.robots.push_back(r);
  }

  const json& objects = field(root, p, "objects");
  if (!objects.is_array()) fail(p + ".objects", "expected an array");
  std::set<int> object_ids;
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const std::string op = p + ".objects[" + std::to_string(k) + "]";
    ObjectSpec o;
    o.id = integer(field(objects[k], op, "id"), op + ".id");
    if (o.id < 0 || static_cast<std::uint64_t>(o.id) >= kSlotRobotBase - kSlotObjectBase)
      fail(op + ".id", "out of range");
    if (!object_ids.insert(o.id).second) fail(op + ".id", "duplicate object id " + std::to_string(o.id));
    const Vector3 pos = vec3(field(objects[k], op, "position"), op + ".position");
    const Vector3 rpy = objects[k].contains("rpy") ? vec3(objects[k]["rpy"], op + ".rpy") : Vector3::Zero();
    o.pose = GroupElement::se3(Rotation::from_matrix(rpy_rotation(rpy)), pos);
    cfg.objects.push_back(o);
  }

  if (root.contains("graph")) {
    const json& edges = field(root["graph"], p + ".graph", "edges");
    if (!edges.is_array()) fail(p + ".graph.edges", "expected an array");
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const std::string ep = p + ".graph.edges[" + std::to_string(k) + "]";
      EdgeSpec e;
      e.from = integer(field(edges[k], ep, "from"), ep + ".from");
      e.to = integer(field(edges[k], ep, "to"), ep + ".to");
      if (!robot_ids.count(e.from)) fail(ep + ".from", "unknown robot " + std::to_string(e.from));
      if (!robot_ids.count(e.to)) fail(ep + ".to", "unknown robot " + std::to_string(e.to));
      if (edges[k].contains("noise")) e.noise_cov = Matrix6(covariance(edges[k]["noise"], 6, ep + ".noise"));
      cfg.edges.push_back(e);
    }
  }
  try {
    (void)cfg.graph();
  } catch (const InvalidArgument& e) {
    fail(p + ".graph", e.what());
  }
  return cfg;
}

ScenarioConfig load_scenario(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("scenario: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), warnings);
}

GroupElement trajectory_pose(const TrajectorySpec& spec, double t) {
  if (spec.type == TrajectorySpec::Type::Circle) {
    const double theta = spec.phase + spec.rate * t;
    const Vector3 p = spec.center + spec.radius * Vector3(std::cos(theta), std::sin(theta), 0.0);
    const double yaw = theta + (spec.rate < 0.0 ? -0.5 : 0.5) * M_PI;
    return GroupElement::se3(Rotation::unchecked(yaw_rotation(yaw)), p);
  }
  const auto& w = spec.waypoints;
  if (spec.loop) t = std::fmod(t, w.back().t);
  if (t <= w.front().t) return GroupElement::se3(Rotation::unchecked(yaw_rotation(w.front().yaw)), w.front().position);
  if (t >= w.back().t) return GroupElement::se3(Rotation::unchecked(yaw_rotation(w.back().yaw)), w.back().position);
  std::size_t k = 1;
  while (w[k].t < t) ++k;
  const double s = (t - w[k - 1].t) / (w[k].t - w[k - 1].t);
  const Vector3 p = (1.0 - s) * w[k - 1].position + s * w[k].position;
  const double yaw = (1.0 - s) * w[k - 1].yaw + s * w[k].yaw;
  return GroupElement::se3(Rotation::unchecked(yaw_rotation(yaw)), p);
}

namespace {

/// Velocity for which the midpoint strapdown step keeps an SE23 robot exactly on its circle:
/// tangent at t, with the chord speed 2 r sin(rate dt / 2) / dt.
Vector3 circle_velocity(const TrajectorySpec& spec, double t, double dt) {
  const double theta = spec.phase + spec.rate * t;
  const double speed = 2.0 * spec.radius * std::sin(0.5 * spec.rate * dt) / dt;
  return speed * Vector3(-std::sin(theta), std::cos(theta), 0.0);
}

}  // namespace

WorldState initial_world(const ScenarioConfig& cfg) {
  WorldState w;
  w.round = 0;
  for (const RobotSpec& r : cfg.robots) {
    const GroupElement pose = trajectory_pose(r.trajectory, 0.0);
    if (r.model == GroupKind::SE3) {
      w.robots.push_back(pose);
    } else {
      w.robots.push_back(GroupElement::se23(pose.rotation(), pose.translation(), circle_velocity(r.trajectory, 0.0, cfg.dt)));
    }
  }
  for (const ObjectSpec& o : cfg.objects) w.objects.push_back(o.pose);
  return w;
}

GroundTruthStep ground_truth_step(const WorldState& w, const ScenarioConfig& cfg) {
  if (w.round >= cfg.steps) throw InvalidArgument("ground_truth_step: scenario has only " + std::to_string(cfg.steps) + " steps");
  if (w.robots.size() != cfg.robots.size()) throw InvalidArgument("ground_truth_step: world does not match scenario");
  GroundTruthStep out;
  out.world = w;
  out.world.round = w.round + 1;
  const double dt = cfg.dt;
  const double t_next = dt * out.world.round;
  for (std::size_t k = 0; k < cfg.robots.size(); ++k) {
    const RobotSpec& r = cfg.robots[k];
    const GroupElement& x = w.robots[k];
    const GroupElement target = trajectory_pose(r.trajectory, t_next);
    if (r.model == GroupKind::SE3) {
      const Vector6 inc = lie::log(x.inverse() * target).coords();
      ProcessInputSE3 u;
      u.omega = inc.head<3>() / dt;
      u.v = inc.tail<3>() / dt;
      u.dt = dt;
      u.noise_cov = cfg.noise.process;
      out.inputs.emplace_back(u);
      out.world.robots[k] = target;
    } else {
      const Matrix3& rk = x.rotation().matrix();
      const Vector3 a_world = 2.0 * (target.translation() - x.translation() - x.velocity() * dt) / (dt * dt);
      ImuSample s;
      s.dt = dt;
      s.noise = cfg.noise.imu;
      s.gyro_bias = cfg.noise.gyro_bias;
      s.accel_bias = cfg.noise.accel_bias;
      s.omega_m = lie::so3_log(rk.transpose() * target.rotation().matrix()) / dt + s.gyro_bias;
      s.accel_m = rk.transpose() * (a_world - cfg.gravity) + s.accel_bias;
      out.inputs.emplace_back(s);
      out.world.robots[k] = GroupElement::se23(target.rotation(), target.translation(), x.velocity() + a_world * dt);
    }
  }
  return out;
}

std::vector<std::vector<Measurement>> sense(const WorldState& w, const ScenarioConfig& cfg, std::uint64_t seed) {
  std::vector<std::vector<Measurement>> out(cfg.robots.size());
  const auto round = static_cast<std::uint64_t>(w.round);
  const double r2 = cfg.visibility_radius * cfg.visibility_radius;
  for (std::size_t k = 0; k < cfg.robots.size(); ++k) {
    const int id = cfg.robots[k].id;
    const GroupElement pose = w.robots[k].pose();
    for (std::size_t q = 0; q < cfg.objects.size(); ++q) {
      if ((w.objects[q].translation() - pose.translation()).squaredNorm() > r2) continue;
      const int oid = cfg.objects[q].id;
      RandomStream rng = RandomStream::derive(seed, id, round, kSlotObjectBase + oid);
      out[k].push_back(
          synthesize_measurement(MeasurementKind::ObjectRel, id, oid, pose, w.objects[q], cfg.noise.object, rng));
    }
    if (cfg.robots[k].anchored) {
      RandomStream rng = RandomStream::derive(seed, id, round, kSlotAbsolute);
      out[k].push_back(synthesize_measurement(MeasurementKind::Absolute, id, id, GroupElement(), pose,
                                              cfg.noise.absolute, rng));
    }
  }
  for (const EdgeSpec& e : cfg.edges) {
    const int j = cfg.robot_index(e.from);
    const int i = cfg.robot_index(e.to);
    RandomStream rng = RandomStream::derive(seed, e.from, round, kSlotRobotBase + e.to);
    out[j].push_back(synthesize_measurement(MeasurementKind::RobotRel, e.from, e.to, w.robots[j], w.robots[i],
                                            e.noise_cov.value_or(cfg.noise.relative), rng));
  }
  return out;
}

ControlInput noisy_input(const ControlInput& exact, RandomStream& rng) {
  if (const auto* u = std::get_if<ProcessInputSE3>(&exact)) {
    const Vector6 n = rng.gaussian(u->noise_cov);
    const GroupElement inc = lie::exp(TangentVector(GroupKind::SE3, n)) * lie::exp(TangentVector(GroupKind::SE3, u->increment()));
    const Vector6 m = lie::log(inc).coords();
    ProcessInputSE3 out = *u;
    out.omega = m.head<3>() / u->dt;
    out.v = m.tail<3>() / u->dt;
    return out;
  }
  ImuSample s = std::get<ImuSample>(exact);
  s.omega_m += rng.gaussian(s.noise.gyro / s.dt);
  s.accel_m += rng.gaussian(s.noise.accel / s.dt);
  return s;
}

MatrixXd initial_covariance(const ScenarioConfig& cfg, GroupKind model) {
  if (model == GroupKind::SE3) return cfg.noise.initial_pose;
  MatrixXd p = MatrixXd::Zero(9, 9);
  p.topLeftCorner<6, 6>() = cfg.noise.initial_pose;
  p.bottomRightCorner<3, 3>() = cfg.noise.initial_velocity;
  return p;
}

std::vector<RobotBelief> initial_beliefs(const WorldState& w, const ScenarioConfig& cfg, std::uint64_t seed) {
  std::vector<RobotBelief> out;
  for (std::size_t k = 0; k < cfg.robots.size(); ++k) {
    const RobotSpec& r = cfg.robots[k];
    const MatrixXd p0 = initial_covariance(cfg, r.model);
    RandomStream rng = RandomStream::derive(seed, r.id, 0, kSlotInitial);
    const VectorXd xi = rng.gaussian(p0);
    const GroupElement x0 = (lie::exp(TangentVector(r.model, xi)) * w.robots[k]).normalized();
    out.emplace_back(r.id, x0, p0);
  }
  return out;
}

}  // namespace dincikf
