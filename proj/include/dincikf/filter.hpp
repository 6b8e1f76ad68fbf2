#pragma once

// Per-robot distributed invariant Kalman filter with covariance-intersection
// neighbor fusion.
//
// A round for robot i runs, in order:
//   1. preintegration of the own state and of the joint covariance,
//   2. initialization of first-seen objects and an invariant KF update with the
//      remaining object (and absolute) measurements,
//   3. fast-CI fusion of the neighbors' estimates into virtual observations,
//      blended with the local estimate by a gamma that minimizes tr(P).
// Outgoing messages are built from the belief after step 2.
//
// Error convention: zeta = [xi; delta_1; ...; delta_K] with xi = log(X X_est^-1)
// and delta_f = log(T_f T_f,est^-1). Corrections are applied on the left.

#include "dincikf/liegroup.hpp"
#include "dincikf/linalg.hpp"
#include "dincikf/models.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace dincikf {

/// SE(3) pose with the covariance of its right-invariant error.
struct PoseEstimate {
  GroupElement pose;
  Matrix6 cov = Matrix6::Zero();
};

struct ObjectMeta {
  int first_seen_round = 0;
  /// Distinct rounds in which some neighbor supplied an estimate of the object.
  int fusion_rounds = 0;
  int last_fusion_round = -1;
};

struct TrackedObject {
  int id = -1;
  GroupElement pose;
  ObjectMeta meta;
};

/// Joint estimate of a robot's own state and the objects it tracks.
/// Covariance layout: [own state (d) | object 1 (6) | ... | object K (6)],
/// objects in first-seen order.
class RobotBelief {
 public:
  RobotBelief(int robot_id, GroupElement own_state, MatrixXd own_cov);

  int robot_id() const { return robot_id_; }
  GroupKind kind() const { return state_.kind(); }
  const GroupElement& own_state() const { return state_; }
  GroupElement own_pose() const { return state_.pose(); }

  int robot_dim() const { return state_.dim(); }
  int dim() const { return static_cast<int>(cov_.rows()); }
  int object_count() const { return static_cast<int>(objects_.size()); }

  const std::vector<TrackedObject>& objects() const { return objects_; }
  bool has_object(int id) const { return find(id) >= 0; }
  /// Throws InvalidArgument for an unknown id.
  const TrackedObject& object(int id) const;
  /// Column offset of the object's 6x6 block in the joint covariance.
  int object_offset(int id) const;

  const MatrixXd& cov() const { return cov_; }
  Matrix6 pose_cov() const { return cov_.topLeftCorner<6, 6>(); }
  Matrix6 object_cov(int id) const;
  MatrixXd robot_cov() const { return cov_.topLeftCorner(robot_dim(), robot_dim()); }

  void set_own_state(const GroupElement& x);
  /// Replaces the joint covariance (dimension must match).
  void set_cov(MatrixXd p);
  void append_object(int id, const GroupElement& pose, MatrixXd new_cov, int round);
  ObjectMeta& meta(int id);

  /// Left-multiplicative correction X <- exp(dxi) X, T_f <- exp(ddelta_f) T_f.
  void apply_correction(const Eigen::Ref<const VectorXd>& dzeta);

 private:
  int find(int id) const;

  int robot_id_;
  GroupElement state_;
  std::vector<TrackedObject> objects_;
  MatrixXd cov_;
};

/// One 6-row block of a linearized observation r ~ H zeta + N n.
struct ObservationBlock {
  Vector6 residual = Vector6::Zero();
  MatrixXd jacobian;
  Matrix6 noise_cov = Matrix6::Zero();
};

/// Row-stacked observations for a single KF update.
struct StackedObservation {
  VectorXd residual;
  MatrixXd jacobian;
  MatrixXd noise_cov;

  int rows() const { return static_cast<int>(residual.size()); }
  bool empty() const { return residual.size() == 0; }
  void append(const ObservationBlock& block);
};

struct ObjectJacobian {
  MatrixXd jacobian;  // 6 x dim
  Matrix6 noise_map;  // residual noise is noise_map * n
};

// --- step 2 ----------------------------------------------------------------

/// Appends a first-seen object: T_f = T_i * z, block G P G^T + R, cross terms P G^T.
RobotBelief initialize_object(const RobotBelief& b, const Measurement& m, int round = 0);

/// Covariance augmentation [I; G 0] P [I; G 0]^T + diag(0, R) shared by the filter and
/// the upper-bound diagnostic.
MatrixXd augment_for_new_object(const MatrixXd& p, GroupKind robot_kind, const Matrix6& noise_cov);

/// r = log(z (T_i^-1 T_f)^-1).
Vector6 object_residual(const RobotBelief& b, const Measurement& m);

/// Jacobian of object_residual w.r.t. zeta: [-Ad_{T_i^-1} G, 0, ..., Ad_{T_i^-1}, ..., 0],
/// with residual noise Ad_{T_i^-1} n.
ObjectJacobian object_jacobian(const RobotBelief& b, int object_id);

/// r = log(z T_i^-1) for an absolute pose observation.
Vector6 absolute_residual(const RobotBelief& b, const Measurement& m);
/// [G 0] with identity noise map.
ObjectJacobian absolute_jacobian(const RobotBelief& b);

ObservationBlock object_observation(const RobotBelief& b, const Measurement& m);
ObservationBlock absolute_observation(const RobotBelief& b, const Measurement& m);

/// Invariant KF update (Joseph form) with multiplicative state correction.
/// Throws NumericalFailure when the innovation covariance is singular.
RobotBelief kf_update(const RobotBelief& b, const StackedObservation& obs);

// --- step 3 ----------------------------------------------------------------

/// Sender's estimate of the recipient's pose: T_j z with covariance G P_jj G^T + R_ij.
PoseEstimate derive_neighbor_estimate(const RobotBelief& sender, const Measurement& m);

struct FusedEstimate {
  PoseEstimate estimate;
  std::vector<double> weights;  // per input, zero for dropped inputs
  std::vector<int> dropped;     // indices of inputs with singular covariance
};

/// Fast-CI weights beta_j = tr(P_j)^-1 / sum_k tr(P_k)^-1.
std::vector<double> fast_ci_weights(std::span<const Matrix6> covs);

/// Fuses estimates of one pose around `reference`:
///   P^-1 = sum beta_j P_j^-1,  delta = P sum beta_j P_j^-1 log(T_j ref^-1),
///   T = exp(delta) ref.
/// Singular inputs are dropped; throws NumericalFailure if all are singular.
FusedEstimate fast_ci_fuse(std::span<const PoseEstimate> estimates, const GroupElement& reference);

/// Minimizer of tr(P(gamma)) for P(gamma)^-1 = gamma P^-1 + (1 - gamma) J^T R^-1 J.
class CiTraceObjective {
 public:
  CiTraceObjective(const MatrixXd& prior_cov, const MatrixXd& selector, const MatrixXd& noise_cov);

  double trace(double gamma) const;
  /// Posterior covariance and correction (1 - gamma) P(gamma) J^T R^-1 r at gamma.
  std::pair<MatrixXd, VectorXd> solve(double gamma, const VectorXd& residual) const;

 private:
  MatrixXd prior_;
  MatrixXd gain_factor_;  // P J^T
  MatrixXd innovation_;   // J P J^T
  MatrixXd noise_;
  double prior_trace_;
  VectorXd eigenvalues_;  // of L^-1 J P J^T L^-T, R = L L^T
  VectorXd weights_;      // diag of U^T L^-1 (P J^T)^T (P J^T) L^-T U
};

inline constexpr double kMinGamma = 1e-3;

/// Golden-section search of tr on [kMinGamma, 1] (tol 1e-4, <= 50 iterations), compared
/// against both endpoints; ties go to the larger gamma.
double minimize_ci_trace(const CiTraceObjective& objective);

struct CiSolution {
  double gamma = 1.0;
  MatrixXd cov;
  VectorXd correction;
};

/// CI combination of a prior with the observation (J, R, r).
CiSolution ci_blend(const MatrixXd& prior_cov, const MatrixXd& selector, const MatrixXd& noise_cov,
                    const VectorXd& residual, std::optional<double> forced_gamma = std::nullopt);

struct VirtualObservation {
  enum class Target { Robot, Object };
  Target target = Target::Robot;
  int object_id = -1;
  PoseEstimate fused;
};

struct CiUpdateResult {
  RobotBelief belief;
  double gamma = 1.0;
};

/// P^-1 = gamma P^-1 + (1 - gamma) J^T R~^-1 J and zeta = (1 - gamma) P J^T R~^-1 r~,
/// r~ = log(T~ T^-1) per fused block, R~ = blockdiag of the fused covariances.
CiUpdateResult ci_update(const RobotBelief& b, std::span<const VirtualObservation> fused,
                         std::optional<double> forced_gamma = std::nullopt);

// --- full step ---------------------------------------------------------------

enum class Algorithm { DInCIKF, DInCIKFc, NaiveInEKF, CiOnly, Odometry };
std::string_view to_string(Algorithm a);
Algorithm algorithm_from_string(std::string_view name);

struct FilterConfig {
  Algorithm algorithm = Algorithm::DInCIKF;
  int object_gate = 6;
  Vector3 gravity = Vector3(0.0, 0.0, -9.81);
};

using ControlInput = std::variant<ProcessInputSE3, ImuSample>;

struct ObjectEstimate {
  int id = -1;
  PoseEstimate estimate;
};

struct NeighborMessage {
  int round = 0;
  int sender = -1;
  int recipient = -1;
  PoseEstimate recipient_pose;
  std::vector<ObjectEstimate> objects;
};

struct ProcessMatrices {
  MatrixXd transition;  // F (d x d)
  MatrixXd noise;       // S (d x d)
};

/// F and S for the control, evaluated at the current estimate.
ProcessMatrices process_matrices(const RobotBelief& b, const ControlInput& u, const FilterConfig& cfg);

/// Step 1.
RobotBelief preintegrate(const RobotBelief& b, const ControlInput& u, const FilterConfig& cfg);

struct LocalUpdateResult {
  RobotBelief belief;
  std::vector<int> initialized;          // object ids, in initialization order
  std::vector<Matrix6> init_noise;       // their R_if
  StackedObservation observations;       // rows used in the update
  double gamma = 1.0;                    // CI weight when the local update is CI (ci-only)
};

/// Step 2. RobotRel measurements are ignored here (they feed outgoing messages).
LocalUpdateResult local_update(const RobotBelief& b, std::span<const Measurement> measurements,
                               int round, const FilterConfig& cfg);

/// Messages for every robot this belief has measured, built from the post-KF belief.
/// Object lists carry all tracked object marginals; recipients ignore unknown ids.
std::vector<NeighborMessage> outgoing_messages(const RobotBelief& b,
                                               std::span<const Measurement> measurements, int round);

struct FusionResult {
  RobotBelief belief;
  /// Weight left on the prior: the product of the CI weights of all fusions this round.
  double gamma = 1.0;
  /// CI weight of the own-pose fusion.
  double pose_gamma = 1.0;
  /// Fast-CI weight of each inbox message in the own-pose fusion (same order as inbox).
  std::vector<double> pose_weights;
  int fused_objects = 0;
};

/// Step 3. The inbox must hold messages addressed to this robot for this round.
/// dincikf: one CI with the fast-CI fusion of the neighbors' estimates of the own pose.
/// dincikfc: first one CI per gated common object, then the own-pose CI.
/// naive-inekf: KF update with every pose and object estimate taken as independent.
FusionResult neighbor_fusion(const RobotBelief& b, std::span<const NeighborMessage> inbox, int round,
                             const FilterConfig& cfg);

struct StepResult {
  RobotBelief belief;
  std::vector<NeighborMessage> outgoing;
  double gamma = 1.0;
};

/// Steps 1-3 for a single robot. The inbox holds neighbors' messages built from their
/// own post-KF beliefs of the same round.
StepResult step(const RobotBelief& b, const ControlInput& u, std::span<const Measurement> measurements,
                std::span<const NeighborMessage> inbox, int round, const FilterConfig& cfg);

}  // namespace dincikf
