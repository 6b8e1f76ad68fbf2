#include "dincikf/models.hpp"

#include "dincikf/errors.hpp"

namespace dincikf {

Vector6 ProcessInputSE3::increment() const {
  Vector6 xi;
  xi << omega * dt, v * dt;
  return xi;
}

std::string_view to_string(MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::ObjectRel:
      return "object";
    case MeasurementKind::RobotRel:
      return "robot";
    case MeasurementKind::Absolute:
      return "absolute";
  }
  return "?";
}

GroupElement propagate_se3(const GroupElement& pose, const ProcessInputSE3& u) {
  if (pose.kind() != GroupKind::SE3) throw InvalidArgument("propagate_se3 needs an SE3 state");
  if (!(u.dt > 0.0)) throw InvalidArgument("propagate_se3: dt must be positive");
  return (pose * lie::exp(TangentVector(GroupKind::SE3, u.increment()))).normalized();
}

Matrix6 process_noise_se3(const GroupElement& pose_estimate, const Matrix6& s_u) {
  const Matrix6 ad = lie::adjoint(pose_estimate.pose());
  Matrix6 s = ad * s_u * ad.transpose();
  return 0.5 * (s + s.transpose());
}

MatrixXd propagate_cov_se3(const MatrixXd& p, const GroupElement& pose_estimate, const Matrix6& s_u) {
  require_shape(p, 6, 6, "propagate_cov_se3: P");
  require_psd(p, "propagate_cov_se3: P");
  require_psd(s_u, "propagate_cov_se3: S_u");
  MatrixXd out = p + process_noise_se3(pose_estimate, s_u);
  symmetrize(out);
  return out;
}

lie::EmbeddingMatrix dynamics_se3(const GroupElement& pose, const Vector3& v, const Vector3& omega) {
  Vector6 u;
  u << omega, v;
  return pose.matrix() * lie::hat(TangentVector(GroupKind::SE3, u));
}

GroupElement propagate_se23(const GroupElement& state, const ImuSample& s, const Vector3& gravity) {
  if (state.kind() != GroupKind::SE23) throw InvalidArgument("propagate_se23 needs an SE23 state");
  if (!(s.dt > 0.0)) throw InvalidArgument("propagate_se23: dt must be positive");
  const Matrix3& r = state.rotation().matrix();
  const Vector3 w = s.omega_m - s.gyro_bias;
  const Vector3 a_world = r * (s.accel_m - s.accel_bias) + gravity;
  const double dt = s.dt;
  const Vector3 p = state.translation() + state.velocity() * dt + 0.5 * a_world * dt * dt;
  const Vector3 v = state.velocity() + a_world * dt;
  const Rotation rot = Rotation::unchecked(r * lie::so3_exp(w * dt)).normalized();
  return GroupElement::se23(rot, p, v);
}

Matrix9 error_transition_se23(double dt, const Vector3& gravity) {
  const Matrix3 g = lie::skew(gravity);
  Matrix9 f = Matrix9::Identity();
  f.block<3, 3>(3, 0) = 0.5 * g * dt * dt;
  f.block<3, 3>(3, 6) = Matrix3::Identity() * dt;
  f.block<3, 3>(6, 0) = g * dt;
  return f;
}

Matrix9 process_noise_se23(const GroupElement& state_estimate, const ImuSample& s) {
  Matrix9 qc = Matrix9::Zero();
  qc.block<3, 3>(0, 0) = s.noise.gyro;
  qc.block<3, 3>(6, 6) = s.noise.accel;
  const Matrix9 ad = lie::adjoint(state_estimate);
  Matrix9 q = ad * qc * ad.transpose() * s.dt;
  return 0.5 * (q + q.transpose());
}

lie::EmbeddingMatrix dynamics_se23(const GroupElement& state, const ImuSample& s,
                                   const Vector3& gravity) {
  const Matrix3& r = state.rotation().matrix();
  lie::EmbeddingMatrix d = lie::EmbeddingMatrix::Zero(5, 5);
  d.topLeftCorner<3, 3>() = r * lie::skew(s.omega_m - s.gyro_bias);
  d.block<3, 1>(0, 3) = state.velocity();
  d.block<3, 1>(0, 4) = r * (s.accel_m - s.accel_bias) + gravity;
  return d;
}

MatrixXd augment_propagate(const MatrixXd& p, const MatrixXd& f, const MatrixXd& s, int object_count) {
  const Eigen::Index d = f.rows();
  if (f.cols() != d || object_count < 0) throw InvalidArgument("augment_propagate: F must be square");
  require_shape(s, d, d, "augment_propagate: S");
  const Eigen::Index n = d + 6 * object_count;
  require_shape(p, n, n, "augment_propagate: P");

  MatrixXd out = p;
  out.topRows(d) = f * p.topRows(d);
  out.leftCols(d) = out.leftCols(d) * f.transpose();
  out.topLeftCorner(d, d) += s;
  symmetrize(out);
  return out;
}

Measurement synthesize_measurement(MeasurementKind kind, int observer, int subject,
                                   const GroupElement& true_a, const GroupElement& true_b,
                                   const Matrix6& noise_cov, RandomStream& rng) {
  const GroupElement a = true_a.kind() == GroupKind::SE3 ? true_a : true_a.pose();
  const GroupElement b = true_b.kind() == GroupKind::SE3 ? true_b : true_b.pose();
  const Vector6 n = rng.gaussian(noise_cov);
  Measurement m;
  m.kind = kind;
  m.observer = observer;
  m.subject = subject;
  m.pose = (a.inverse() * lie::exp(TangentVector(GroupKind::SE3, n)) * b).normalized();
  m.noise_cov = noise_cov;
  return m;
}

MatrixXd pose_selector(GroupKind kind) {
  MatrixXd g = MatrixXd::Zero(6, lie::tangent_dim(kind));
  g.leftCols(6).setIdentity();
  return g;
}

}  // namespace dincikf
