#pragma once

// Group-affine process models and object-level measurement models.
//
// Two robot kinematics are supported:
//  * direct pose increments on SE(3): T(k) = T(k-1) exp([w dt; v dt]), F = I_6;
//  * IMU strapdown on SE_2(3) with state (R, p, v) and gravity g.
// Covariances are those of the right-invariant error xi = log(X_true X_est^-1).

#include "dincikf/liegroup.hpp"
#include "dincikf/linalg.hpp"
#include "dincikf/rng.hpp"

#include <string_view>

namespace dincikf {

/// Body-frame generalized velocity held constant over dt, with the covariance
/// S_u of the multiplicative increment noise exp(n_u).
struct ProcessInputSE3 {
  Vector3 v = Vector3::Zero();
  Vector3 omega = Vector3::Zero();
  double dt = 1.0;
  Matrix6 noise_cov = Matrix6::Zero();

  Vector6 increment() const;
};

/// Continuous-time white-noise densities of the gyro and accelerometer.
struct ImuNoise {
  Matrix3 gyro = Matrix3::Zero();
  Matrix3 accel = Matrix3::Zero();
};

/// One IMU reading. Biases are known constants and are removed before integration.
struct ImuSample {
  Vector3 omega_m = Vector3::Zero();
  Vector3 accel_m = Vector3::Zero();
  double dt = 1.0;
  ImuNoise noise;
  Vector3 gyro_bias = Vector3::Zero();
  Vector3 accel_bias = Vector3::Zero();
};

enum class MeasurementKind { ObjectRel, RobotRel, Absolute };
std::string_view to_string(MeasurementKind kind);

/// Object-level SE(3) observation.
///  ObjectRel: observer's view of object `subject`, T_i^-1 exp(n) T_f.
///  RobotRel:  observer's view of robot `subject`, T_j^-1 exp(n) T_i.
///  Absolute:  world-frame pose of the observer itself, exp(n) T_i.
struct Measurement {
  MeasurementKind kind = MeasurementKind::ObjectRel;
  int observer = -1;
  int subject = -1;
  GroupElement pose;
  Matrix6 noise_cov = Matrix6::Zero();
};

// --- SE(3) pose increments -------------------------------------------------

GroupElement propagate_se3(const GroupElement& pose, const ProcessInputSE3& u);

/// Ad_T S_u Ad_T^T, the increment noise mapped into right-invariant error coordinates.
Matrix6 process_noise_se3(const GroupElement& pose_estimate, const Matrix6& s_u);

/// P + Ad_T S_u Ad_T^T. Throws InvalidArgument for non-PSD inputs.
MatrixXd propagate_cov_se3(const MatrixXd& p, const GroupElement& pose_estimate, const Matrix6& s_u);

/// Continuous vector field T u^ (matrix derivative of the embedding).
lie::EmbeddingMatrix dynamics_se3(const GroupElement& pose, const Vector3& v, const Vector3& omega);

// --- SE_2(3) IMU ------------------------------------------------------------

/// Noise-free discrete strapdown step:
///   R <- R exp(w dt), v <- v + (R a + g) dt, p <- p + v dt + (R a + g) dt^2 / 2.
GroupElement propagate_se23(const GroupElement& state, const ImuSample& s, const Vector3& gravity);

/// Discrete right-invariant error transition for ordering [omega; p; v].
Matrix9 error_transition_se23(double dt, const Vector3& gravity);

/// First-order discrete process noise Ad_X diag(Sg, 0, Sa) Ad_X^T dt, X the end-of-step state.
Matrix9 process_noise_se23(const GroupElement& state_estimate, const ImuSample& s);

/// Continuous vector field [R w^ | v | R a + g] of the strapdown kinematics.
lie::EmbeddingMatrix dynamics_se23(const GroupElement& state, const ImuSample& s,
                                   const Vector3& gravity);

// --- joint robot + objects covariance ---------------------------------------

/// diag(F, I_6K) P diag(F, I_6K)^T + diag(S, 0).
MatrixXd augment_propagate(const MatrixXd& p, const MatrixXd& f, const MatrixXd& s, int object_count);

// --- measurements ------------------------------------------------------------

/// T_a^-1 exp(n) T_b with n ~ N(0, R). SE_2(3) arguments are reduced to their pose.
Measurement synthesize_measurement(MeasurementKind kind, int observer, int subject,
                                   const GroupElement& true_a, const GroupElement& true_b,
                                   const Matrix6& noise_cov, RandomStream& rng);

/// Pose selector G: I_6 for SE(3), [I_6 0] for SE_2(3).
MatrixXd pose_selector(GroupKind kind);

}  // namespace dincikf
