#include "dincikf/filter.hpp"

#include "dincikf/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <string>

namespace dincikf {

namespace {

Vector6 se3_log(const GroupElement& x) { return lie::log(x).coords(); }

GroupElement se3_exp(const Eigen::Ref<const VectorXd>& v) {
  return lie::exp(TangentVector(GroupKind::SE3, v));
}

void check_psd_output(MatrixXd& p, const char* what) {
  symmetrize(p);
  if (!p.allFinite()) throw NumericalFailure(std::string(what) + ": non-finite covariance");
}

}  // namespace

// --- RobotBelief ---------------------------------------------------------------

RobotBelief::RobotBelief(int robot_id, GroupElement own_state, MatrixXd own_cov)
    : robot_id_(robot_id), state_(std::move(own_state)), cov_(std::move(own_cov)) {
  if (state_.kind() == GroupKind::SO3) throw InvalidArgument("RobotBelief: own state must be SE3 or SE23");
  require_shape(cov_, state_.dim(), state_.dim(), "RobotBelief: initial covariance");
  require_psd(cov_, "RobotBelief: initial covariance");
  symmetrize(cov_);
}

int RobotBelief::find(int id) const {
  for (std::size_t k = 0; k < objects_.size(); ++k)
    if (objects_[k].id == id) return static_cast<int>(k);
  return -1;
}

const TrackedObject& RobotBelief::object(int id) const {
  const int k = find(id);
  if (k < 0) throw InvalidArgument("robot " + std::to_string(robot_id_) + " does not track object " +
                                   std::to_string(id));
  return objects_[k];
}

int RobotBelief::object_offset(int id) const {
  const int k = find(id);
  if (k < 0) throw InvalidArgument("robot " + std::to_string(robot_id_) + " does not track object " +
                                   std::to_string(id));
  return robot_dim() + 6 * k;
}

Matrix6 RobotBelief::object_cov(int id) const {
  const int o = object_offset(id);
  return cov_.block<6, 6>(o, o);
}

ObjectMeta& RobotBelief::meta(int id) {
  const int k = find(id);
  if (k < 0) throw InvalidArgument("unknown object " + std::to_string(id));
  return objects_[k].meta;
}

void RobotBelief::set_own_state(const GroupElement& x) {
  if (x.kind() != state_.kind()) throw InvalidArgument("set_own_state: group kind changed");
  state_ = x;
}

void RobotBelief::set_cov(MatrixXd p) {
  require_shape(p, dim(), dim(), "RobotBelief::set_cov");
  cov_ = std::move(p);
}

void RobotBelief::append_object(int id, const GroupElement& pose, MatrixXd new_cov, int round) {
  if (find(id) >= 0)
    throw InvalidState("robot " + std::to_string(robot_id_) + " already tracks object " + std::to_string(id));
  if (pose.kind() != GroupKind::SE3) throw InvalidArgument("object poses must be SE3");
  require_shape(new_cov, dim() + 6, dim() + 6, "append_object: covariance");
  TrackedObject obj;
  obj.id = id;
  obj.pose = pose;
  obj.meta.first_seen_round = round;
  objects_.push_back(obj);
  cov_ = std::move(new_cov);
}

void RobotBelief::apply_correction(const Eigen::Ref<const VectorXd>& dzeta) {
  if (dzeta.size() != dim()) throw InvalidArgument("apply_correction: dimension mismatch");
  const int d = robot_dim();
  state_ = (lie::exp(TangentVector(kind(), dzeta.head(d))) * state_).normalized();
  for (std::size_t k = 0; k < objects_.size(); ++k) {
    const auto seg = dzeta.segment(d + 6 * static_cast<int>(k), 6);
    objects_[k].pose = (se3_exp(seg) * objects_[k].pose).normalized();
  }
}

void StackedObservation::append(const ObservationBlock& block) {
  const Eigen::Index m = residual.size();
  const Eigen::Index n = block.jacobian.cols();
  if (m > 0 && jacobian.cols() != n) throw InvalidArgument("StackedObservation: column count mismatch");

  VectorXd r(m + 6);
  r << residual, block.residual;
  residual = std::move(r);

  MatrixXd h(m + 6, n);
  if (m > 0) h.topRows(m) = jacobian;
  h.bottomRows(6) = block.jacobian;
  jacobian = std::move(h);

  MatrixXd q = MatrixXd::Zero(m + 6, m + 6);
  if (m > 0) q.topLeftCorner(m, m) = noise_cov;
  q.bottomRightCorner(6, 6) = block.noise_cov;
  noise_cov = std::move(q);
}

// --- object initialization and KF update -----------------------------------------

MatrixXd augment_for_new_object(const MatrixXd& p, GroupKind robot_kind, const Matrix6& noise_cov) {
  const int n = static_cast<int>(p.rows());
  if (p.cols() != n || n < lie::tangent_dim(robot_kind))
    throw InvalidArgument("augment_for_new_object: covariance smaller than the robot block");
  MatrixXd out(n + 6, n + 6);
  out.topLeftCorner(n, n) = p;
  // G selects the leading six robot coordinates.
  out.bottomLeftCorner(6, n) = p.topRows(6);
  out.topRightCorner(n, 6) = p.leftCols(6);
  out.bottomRightCorner<6, 6>() = p.topLeftCorner<6, 6>() + noise_cov;
  symmetrize(out);
  return out;
}

RobotBelief initialize_object(const RobotBelief& b, const Measurement& m, int round) {
  if (m.kind != MeasurementKind::ObjectRel) throw InvalidArgument("initialize_object needs an object measurement");
  if (b.has_object(m.subject))
    throw InvalidState("object " + std::to_string(m.subject) + " is already initialized");
  require_psd(m.noise_cov, "initialize_object: R");
  RobotBelief out = b;
  const GroupElement pose = (b.own_pose() * m.pose).normalized();
  out.append_object(m.subject, pose, augment_for_new_object(b.cov(), b.kind(), m.noise_cov), round);
  return out;
}

Vector6 object_residual(const RobotBelief& b, const Measurement& m) {
  const GroupElement& tf = b.object(m.subject).pose;
  return se3_log(m.pose * tf.inverse() * b.own_pose());
}

ObjectJacobian object_jacobian(const RobotBelief& b, int object_id) {
  const int o = b.object_offset(object_id);
  const Matrix6 ad_inv = lie::adjoint(b.own_pose().inverse());
  ObjectJacobian out;
  out.jacobian = MatrixXd::Zero(6, b.dim());
  out.jacobian.leftCols(6) = -ad_inv;
  out.jacobian.middleCols(o, 6) = ad_inv;
  out.noise_map = ad_inv;
  return out;
}

Vector6 absolute_residual(const RobotBelief& b, const Measurement& m) {
  return se3_log(m.pose * b.own_pose().inverse());
}

ObjectJacobian absolute_jacobian(const RobotBelief& b) {
  ObjectJacobian out;
  out.jacobian = MatrixXd::Zero(6, b.dim());
  out.jacobian.leftCols(6).setIdentity();
  out.noise_map.setIdentity();
  return out;
}

ObservationBlock object_observation(const RobotBelief& b, const Measurement& m) {
  const ObjectJacobian j = object_jacobian(b, m.subject);
  ObservationBlock block;
  block.residual = object_residual(b, m);
  block.jacobian = j.jacobian;
  block.noise_cov = j.noise_map * m.noise_cov * j.noise_map.transpose();
  block.noise_cov = 0.5 * (block.noise_cov + block.noise_cov.transpose()).eval();
  return block;
}

ObservationBlock absolute_observation(const RobotBelief& b, const Measurement& m) {
  const ObjectJacobian j = absolute_jacobian(b);
  ObservationBlock block;
  block.residual = absolute_residual(b, m);
  block.jacobian = j.jacobian;
  block.noise_cov = m.noise_cov;
  return block;
}

RobotBelief kf_update(const RobotBelief& b, const StackedObservation& obs) {
  if (obs.empty()) return b;
  const int n = b.dim();
  const int m = obs.rows();
  require_shape(obs.jacobian, m, n, "kf_update: H");
  require_shape(obs.noise_cov, m, m, "kf_update: R");

  const MatrixXd& p = b.cov();
  const MatrixXd& h = obs.jacobian;
  const MatrixXd pht = p * h.transpose();
  MatrixXd s = h * pht + obs.noise_cov;
  symmetrize(s);
  const Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalFailure("kf_update: singular innovation covariance", condition_number(s));

  const MatrixXd k = llt.solve(pht.transpose()).transpose();  // P H^T S^-1
  // Joseph form (I - KH) P (I - KH)^T + K R K^T, expanded with P H^T.
  const MatrixXd kb = k * pht.transpose();
  MatrixXd post = p - kb - kb.transpose() + k * (s * k.transpose());
  check_psd_output(post, "kf_update");

  RobotBelief out = b;
  out.apply_correction(k * obs.residual);
  out.set_cov(std::move(post));
  return out;
}

// --- neighbor estimates and fast CI -------------------------------------------------

PoseEstimate derive_neighbor_estimate(const RobotBelief& sender, const Measurement& m) {
  if (m.kind != MeasurementKind::RobotRel) throw InvalidArgument("derive_neighbor_estimate needs a robot measurement");
  PoseEstimate e;
  e.pose = (sender.own_pose() * m.pose).normalized();
  e.cov = sender.pose_cov() + m.noise_cov;
  e.cov = 0.5 * (e.cov + e.cov.transpose()).eval();
  return e;
}

std::vector<double> fast_ci_weights(std::span<const Matrix6> covs) {
  if (covs.empty()) throw InvalidArgument("fast_ci_weights: no covariances");
  std::vector<double> w(covs.size());
  double total = 0.0;
  for (std::size_t j = 0; j < covs.size(); ++j) {
    const double t = covs[j].trace();
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("fast_ci_weights: trace must be positive");
    w[j] = 1.0 / t;
    total += w[j];
  }
  for (double& x : w) x /= total;
  return w;
}

FusedEstimate fast_ci_fuse(std::span<const PoseEstimate> estimates, const GroupElement& reference) {
  if (estimates.empty()) throw InvalidArgument("fast_ci_fuse: no estimates");
  if (reference.kind() != GroupKind::SE3) throw InvalidArgument("fast_ci_fuse: reference must be SE3");

  FusedEstimate out;
  out.weights.assign(estimates.size(), 0.0);
  std::vector<std::size_t> kept;
  std::vector<Matrix6> kept_cov;
  std::vector<Matrix6> kept_info;
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    const Matrix6& c = estimates[j].cov;
    const Eigen::LLT<Matrix6> llt(0.5 * (c + c.transpose()));
    if (llt.info() != Eigen::Success || !(c.trace() > 0.0)) {
      out.dropped.push_back(static_cast<int>(j));
      continue;
    }
    kept.push_back(j);
    kept_cov.push_back(c);
    kept_info.push_back(llt.solve(Matrix6::Identity()));
  }
  if (kept.empty()) throw NumericalFailure("fast_ci_fuse: every input covariance is singular");

  const std::vector<double> beta = fast_ci_weights(kept_cov);
  Matrix6 info = Matrix6::Zero();
  Vector6 moment = Vector6::Zero();
  for (std::size_t q = 0; q < kept.size(); ++q) {
    out.weights[kept[q]] = beta[q];
    const Matrix6 wi = beta[q] * kept_info[q];
    info += wi;
    moment += wi * se3_log(estimates[kept[q]].pose * reference.inverse());
  }
  info = 0.5 * (info + info.transpose()).eval();
  const Eigen::LLT<Matrix6> llt(info);
  if (llt.info() != Eigen::Success) throw NumericalFailure("fast_ci_fuse: fused information is singular", condition_number(info));
  Matrix6 cov = llt.solve(Matrix6::Identity());
  cov = 0.5 * (cov + cov.transpose()).eval();
  const Vector6 delta = cov * moment;

  out.estimate.pose = (se3_exp(delta) * reference).normalized();
  out.estimate.cov = cov;
  return out;
}

// --- CI blend -------------------------------------------------------------------

CiTraceObjective::CiTraceObjective(const MatrixXd& prior_cov, const MatrixXd& selector,
                                   const MatrixXd& noise_cov)
    : prior_(prior_cov), noise_(noise_cov) {
  const Eigen::Index n = prior_cov.rows();
  const Eigen::Index m = selector.rows();
  require_shape(prior_cov, n, n, "CI: prior covariance");
  require_shape(selector, m, n, "CI: selector");
  require_shape(noise_cov, m, m, "CI: virtual noise covariance");

  prior_trace_ = prior_.trace();
  gain_factor_ = prior_ * selector.transpose();
  innovation_ = selector * gain_factor_;
  symmetrize(innovation_);

  const Eigen::LLT<MatrixXd> lr(0.5 * (noise_ + noise_.transpose()));
  if (lr.info() != Eigen::Success) throw NumericalFailure("CI: virtual noise covariance is singular", condition_number(noise_));
  const auto l = lr.matrixL();
  const MatrixXd a = l.solve(innovation_);
  MatrixXd whitened = l.solve(a.transpose());
  symmetrize(whitened);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(whitened);
  eigenvalues_ = eig.eigenvalues();
  const MatrixXd z = eig.eigenvectors().transpose() * l.solve(gain_factor_.transpose());
  weights_ = z.rowwise().squaredNorm();
}

double CiTraceObjective::trace(double gamma) const {
  if (!(gamma > 0.0) || gamma > 1.0) throw InvalidArgument("CI: gamma must lie in (0, 1]");
  if (gamma == 1.0) return prior_trace_;
  const double lambda = gamma / (1.0 - gamma);
  double reduction = 0.0;
  for (Eigen::Index k = 0; k < eigenvalues_.size(); ++k)
    reduction += weights_[k] / (std::max(eigenvalues_[k], 0.0) + lambda);
  return (prior_trace_ - reduction) / gamma;
}

std::pair<MatrixXd, VectorXd> CiTraceObjective::solve(double gamma, const VectorXd& residual) const {
  if (!(gamma > 0.0) || gamma > 1.0) throw InvalidArgument("CI: gamma must lie in (0, 1]");
  if (residual.size() != innovation_.rows()) throw InvalidArgument("CI: residual dimension mismatch");
  if (gamma == 1.0) return {prior_, VectorXd::Zero(prior_.rows())};
  // Equivalent KF form: prior P / gamma, noise R / (1 - gamma).
  const double lambda = gamma / (1.0 - gamma);
  MatrixXd s = innovation_ + lambda * noise_;
  symmetrize(s);
  const Eigen::LLT<MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalFailure("CI: singular blended innovation", condition_number(s));
  const MatrixXd x = llt.matrixL().solve(gain_factor_.transpose());
  MatrixXd cov = (prior_ - x.transpose() * x) / gamma;
  check_psd_output(cov, "ci_blend");
  VectorXd correction = gain_factor_ * llt.solve(residual);
  return {std::move(cov), std::move(correction)};
}

double minimize_ci_trace(const CiTraceObjective& objective) {
  constexpr double kTol = 1e-4;
  constexpr int kMaxIter = 50;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = kMinGamma;
  double b = 1.0;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = objective.trace(c);
  double fd = objective.trace(d);
  for (int it = 0; it < kMaxIter && (b - a) > kTol; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = objective.trace(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = objective.trace(d);
    }
  }
  const double mid = 0.5 * (a + b);
  // Candidates in decreasing gamma so that ties resolve to the larger one.
  const std::array<double, 3> gammas = {1.0, mid, kMinGamma};
  std::array<double, 3> values{};
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < gammas.size(); ++k) {
    values[k] = objective.trace(gammas[k]);
    best = std::min(best, values[k]);
  }
  const double tie = 1e-12 * std::max(1.0, std::abs(best));
  for (std::size_t k = 0; k < gammas.size(); ++k)
    if (values[k] <= best + tie) return gammas[k];
  return 1.0;
}

CiSolution ci_blend(const MatrixXd& prior_cov, const MatrixXd& selector, const MatrixXd& noise_cov,
                    const VectorXd& residual, std::optional<double> forced_gamma) {
  const CiTraceObjective objective(prior_cov, selector, noise_cov);
  CiSolution out;
  out.gamma = forced_gamma ? *forced_gamma : minimize_ci_trace(objective);
  auto [cov, correction] = objective.solve(out.gamma, residual);
  out.cov = std::move(cov);
  out.correction = std::move(correction);
  return out;
}

CiUpdateResult ci_update(const RobotBelief& b, std::span<const VirtualObservation> fused,
                         std::optional<double> forced_gamma) {
  if (fused.empty()) return {b, 1.0};
  const int n = b.dim();
  const int m = 6 * static_cast<int>(fused.size());
  MatrixXd j = MatrixXd::Zero(m, n);
  MatrixXd r = MatrixXd::Zero(m, m);
  VectorXd res(m);
  for (std::size_t k = 0; k < fused.size(); ++k) {
    const VirtualObservation& v = fused[k];
    const int row = 6 * static_cast<int>(k);
    require_psd(v.fused.cov, "ci_update: fused covariance");
    GroupElement current;
    if (v.target == VirtualObservation::Target::Robot) {
      current = b.own_pose();
      j.block(row, 0, 6, 6).setIdentity();
    } else {
      current = b.object(v.object_id).pose;
      j.block(row, b.object_offset(v.object_id), 6, 6).setIdentity();
    }
    r.block<6, 6>(row, row) = v.fused.cov;
    res.segment<6>(row) = se3_log(v.fused.pose * current.inverse());
  }
  if (forced_gamma && *forced_gamma == 1.0) return {b, 1.0};

  CiSolution sol = ci_blend(b.cov(), j, r, res, forced_gamma);
  RobotBelief out = b;
  if (sol.gamma < 1.0) {
    out.apply_correction(sol.correction);
    out.set_cov(std::move(sol.cov));
  }
  return {std::move(out), sol.gamma};
}

// --- algorithm selection ----------------------------------------------------------

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::DInCIKF:
      return "dincikf";
    case Algorithm::DInCIKFc:
      return "dincikfc";
    case Algorithm::NaiveInEKF:
      return "naive-inekf";
    case Algorithm::CiOnly:
      return "ci-only";
    case Algorithm::Odometry:
      return "odometry";
  }
  return "?";
}

Algorithm algorithm_from_string(std::string_view name) {
  for (Algorithm a : {Algorithm::DInCIKF, Algorithm::DInCIKFc, Algorithm::NaiveInEKF, Algorithm::CiOnly,
                      Algorithm::Odometry})
    if (to_string(a) == name) return a;
  throw InvalidArgument("unknown algorithm '" + std::string(name) +
                        "' (expected dincikf, dincikfc, naive-inekf, ci-only or odometry)");
}

// --- step 1 ------------------------------------------------------------------------

ProcessMatrices process_matrices(const RobotBelief& b, const ControlInput& u, const FilterConfig& cfg) {
  ProcessMatrices pm;
  if (const auto* se3 = std::get_if<ProcessInputSE3>(&u)) {
    if (b.kind() != GroupKind::SE3) throw InvalidArgument("pose-increment input needs an SE3 robot");
    pm.transition = MatrixXd::Identity(6, 6);
    pm.noise = process_noise_se3(b.own_state(), se3->noise_cov);
  } else {
    const auto& imu = std::get<ImuSample>(u);
    if (b.kind() != GroupKind::SE23) throw InvalidArgument("IMU input needs an SE23 robot");
    pm.transition = error_transition_se23(imu.dt, cfg.gravity);
    // The noise is injected over the step, so the adjoint is taken at the propagated estimate.
    pm.noise = process_noise_se23(propagate_se23(b.own_state(), imu, cfg.gravity), imu);
  }
  return pm;
}

RobotBelief preintegrate(const RobotBelief& b, const ControlInput& u, const FilterConfig& cfg) {
  const ProcessMatrices pm = process_matrices(b, u, cfg);
  RobotBelief out = b;
  if (const auto* se3 = std::get_if<ProcessInputSE3>(&u)) {
    out.set_own_state(propagate_se3(b.own_state(), *se3));
  } else {
    out.set_own_state(propagate_se23(b.own_state(), std::get<ImuSample>(u), cfg.gravity));
  }
  out.set_cov(augment_propagate(b.cov(), pm.transition, pm.noise, b.object_count()));
  return out;
}

// --- step 2 ------------------------------------------------------------------------

LocalUpdateResult local_update(const RobotBelief& b, std::span<const Measurement> measurements, int round,
                               const FilterConfig& cfg) {
  LocalUpdateResult out{b, {}, {}, {}, 1.0};
  std::vector<const Measurement*> updates;
  for (const Measurement& m : measurements) {
    if (m.observer != b.robot_id())
      throw InvalidArgument("measurement observed by robot " + std::to_string(m.observer) +
                            " passed to robot " + std::to_string(b.robot_id()));
    if (m.kind == MeasurementKind::ObjectRel && !out.belief.has_object(m.subject)) {
      out.belief = initialize_object(out.belief, m, round);
      out.initialized.push_back(m.subject);
      out.init_noise.push_back(m.noise_cov);
    } else if (m.kind != MeasurementKind::RobotRel) {
      updates.push_back(&m);
    }
  }
  if (cfg.algorithm == Algorithm::Odometry || updates.empty()) return out;

  for (const Measurement* m : updates) {
    out.observations.append(m->kind == MeasurementKind::Absolute ? absolute_observation(out.belief, *m)
                                                                 : object_observation(out.belief, *m));
  }
  if (cfg.algorithm == Algorithm::CiOnly) {
    CiSolution sol = ci_blend(out.belief.cov(), out.observations.jacobian, out.observations.noise_cov,
                              out.observations.residual);
    out.gamma = sol.gamma;
    if (sol.gamma < 1.0) {
      out.belief.apply_correction(sol.correction);
      out.belief.set_cov(std::move(sol.cov));
    }
  } else {
    out.belief = kf_update(out.belief, out.observations);
  }
  return out;
}

std::vector<NeighborMessage> outgoing_messages(const RobotBelief& b, std::span<const Measurement> measurements,
                                               int round) {
  std::vector<NeighborMessage> out;
  for (const Measurement& m : measurements) {
    if (m.kind != MeasurementKind::RobotRel || m.observer != b.robot_id()) continue;
    NeighborMessage msg;
    msg.round = round;
    msg.sender = b.robot_id();
    msg.recipient = m.subject;
    msg.recipient_pose = derive_neighbor_estimate(b, m);
    msg.objects.reserve(b.objects().size());
    for (const TrackedObject& obj : b.objects()) msg.objects.push_back({obj.id, {obj.pose, b.object_cov(obj.id)}});
    out.push_back(std::move(msg));
  }
  return out;
}

// --- step 3 ------------------------------------------------------------------------

FusionResult neighbor_fusion(const RobotBelief& b, std::span<const NeighborMessage> inbox, int round,
                             const FilterConfig& cfg) {
  FusionResult out{b, 1.0, 1.0, std::vector<double>(inbox.size(), 0.0), 0};
  for (const NeighborMessage& msg : inbox) {
    if (msg.recipient != b.robot_id())
      throw InvalidArgument("message for robot " + std::to_string(msg.recipient) + " delivered to robot " +
                            std::to_string(b.robot_id()));
    if (msg.round != round) throw InvalidArgument("message from round " + std::to_string(msg.round) +
                                                  " delivered in round " + std::to_string(round));
  }

  // Gate bookkeeping: rounds in which any neighbor supplied an estimate of the object.
  for (const TrackedObject& obj : b.objects()) {
    const bool seen = std::any_of(inbox.begin(), inbox.end(), [&](const NeighborMessage& msg) {
      return std::any_of(msg.objects.begin(), msg.objects.end(), [&](const ObjectEstimate& e) { return e.id == obj.id; });
    });
    ObjectMeta& meta = out.belief.meta(obj.id);
    if (seen && meta.last_fusion_round != round) {
      ++meta.fusion_rounds;
      meta.last_fusion_round = round;
    }
  }

  if (inbox.empty() || cfg.algorithm == Algorithm::Odometry) return out;

  std::vector<PoseEstimate> pose_inputs;
  pose_inputs.reserve(inbox.size());
  for (const NeighborMessage& msg : inbox) pose_inputs.push_back(msg.recipient_pose);

  if (cfg.algorithm == Algorithm::NaiveInEKF) {
    StackedObservation obs;
    const GroupElement current = out.belief.own_pose();
    for (const PoseEstimate& e : pose_inputs) {
      ObservationBlock block;
      block.residual = se3_log(e.pose * current.inverse());
      block.jacobian = absolute_jacobian(out.belief).jacobian;
      block.noise_cov = e.cov;
      obs.append(block);
    }
    // Every common-object estimate in the inbox is treated as an independent direct observation.
    for (const NeighborMessage& msg : inbox) {
      for (const ObjectEstimate& e : msg.objects) {
        if (!out.belief.has_object(e.id)) continue;
        ObservationBlock block;
        block.residual = se3_log(e.estimate.pose * out.belief.object(e.id).pose.inverse());
        block.jacobian = MatrixXd::Zero(6, out.belief.dim());
        block.jacobian.middleCols(out.belief.object_offset(e.id), 6).setIdentity();
        block.noise_cov = e.estimate.cov;
        obs.append(block);
      }
    }
    std::fill(out.pose_weights.begin(), out.pose_weights.end(), 1.0);
    out.belief = kf_update(out.belief, obs);
    return out;
  }

  // Common objects go first, one CI per object, each fused against the current marginal.
  // Stacking them with the pose block would treat estimates drawn from the same
  // neighbor belief as independent.
  if (cfg.algorithm == Algorithm::DInCIKFc) {
    for (const TrackedObject& obj : b.objects()) {
      if (out.belief.object(obj.id).meta.fusion_rounds < cfg.object_gate ||
          out.belief.object(obj.id).meta.last_fusion_round != round)
        continue;
      const GroupElement current = out.belief.object(obj.id).pose;
      std::vector<PoseEstimate> inputs;
      inputs.push_back({current, out.belief.object_cov(obj.id)});
      for (const NeighborMessage& msg : inbox)
        for (const ObjectEstimate& e : msg.objects)
          if (e.id == obj.id) inputs.push_back(e.estimate);
      const VirtualObservation v{VirtualObservation::Target::Object, obj.id, fast_ci_fuse(inputs, current).estimate};
      CiUpdateResult ci = ci_update(out.belief, std::span<const VirtualObservation>(&v, 1));
      out.belief = std::move(ci.belief);
      out.gamma *= ci.gamma;
      ++out.fused_objects;
    }
  }

  const FusedEstimate f = fast_ci_fuse(pose_inputs, out.belief.own_pose());
  out.pose_weights = f.weights;
  const VirtualObservation v{VirtualObservation::Target::Robot, -1, f.estimate};
  CiUpdateResult ci = ci_update(out.belief, std::span<const VirtualObservation>(&v, 1));
  out.belief = std::move(ci.belief);
  out.pose_gamma = ci.gamma;
  out.gamma *= ci.gamma;
  return out;
}

StepResult step(const RobotBelief& b, const ControlInput& u, std::span<const Measurement> measurements,
                std::span<const NeighborMessage> inbox, int round, const FilterConfig& cfg) {
  const RobotBelief predicted = preintegrate(b, u, cfg);
  LocalUpdateResult local = local_update(predicted, measurements, round, cfg);
  StepResult out{local.belief, outgoing_messages(local.belief, measurements, round), 1.0};
  FusionResult fused = neighbor_fusion(local.belief, inbox, round, cfg);
  out.belief = std::move(fused.belief);
  out.gamma = fused.gamma;
  return out;
}

}  // namespace dincikf
