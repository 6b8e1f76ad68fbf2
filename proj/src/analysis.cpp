#include "dincikf/analysis.hpp"

#include "dincikf/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace dincikf {

double rotation_error(const GroupElement& estimate, const GroupElement& truth) {
  return lie::so3_log(estimate.rotation().matrix().transpose() * truth.rotation().matrix()).norm();
}

double position_error(const GroupElement& estimate, const GroupElement& truth) {
  if (estimate.kind() == GroupKind::SO3 || truth.kind() == GroupKind::SO3)
    throw InvalidArgument("position_error needs translational states");
  return (estimate.translation() - truth.translation()).norm();
}

VectorXd right_invariant_error(const GroupElement& truth, const GroupElement& estimate) {
  if (truth.kind() != estimate.kind()) throw InvalidArgument("right_invariant_error: group kinds differ");
  return lie::log(truth * estimate.inverse()).coords();
}

Rmse rmse(const std::map<int, GroupElement>& estimates, const std::map<int, GroupElement>& truths) {
  if (estimates.empty()) throw InvalidArgument("rmse: no estimates");
  if (estimates.size() != truths.size()) throw InvalidArgument("rmse: estimate and truth id sets differ");
  double rot = 0.0;
  double pos = 0.0;
  for (const auto& [id, est] : estimates) {
    const auto it = truths.find(id);
    if (it == truths.end()) throw InvalidArgument("rmse: no ground truth for id " + std::to_string(id));
    rot += std::pow(rotation_error(est, it->second), 2);
    pos += std::pow(position_error(est, it->second), 2);
  }
  const double n = static_cast<double>(estimates.size());
  return {std::sqrt(rot / n), std::sqrt(pos / n)};
}

double nees(const Eigen::Ref<const VectorXd>& zeta, const Eigen::Ref<const MatrixXd>& cov) {
  require_shape(cov, zeta.size(), zeta.size(), "nees: covariance");
  const Eigen::LLT<MatrixXd> llt(0.5 * (cov + cov.transpose()));
  if (llt.info() != Eigen::Success) throw NumericalFailure("nees: singular covariance", condition_number(cov));
  return zeta.dot(llt.solve(zeta));
}

double chi_squared_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0) || !(dof > 0.0)) throw InvalidArgument("chi_squared_quantile: bad arguments");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

std::pair<double, double> nees_mean_band(int dof, int runs, double confidence) {
  if (dof <= 0 || runs <= 0) throw InvalidArgument("nees_mean_band: dof and runs must be positive");
  const double tail = 0.5 * (1.0 - confidence);
  const double n = static_cast<double>(dof) * runs;
  return {chi_squared_quantile(tail, n) / runs, chi_squared_quantile(1.0 - tail, n) / runs};
}

ObservabilityRank observability_rank(const MatrixXd& f, std::span<const MatrixXd> h, int horizon) {
  const Eigen::Index d = f.rows();
  if (f.cols() != d) throw InvalidArgument("observability_rank: F must be square");
  if (horizon < 0 || h.size() < static_cast<std::size_t>(horizon) + 1)
    throw InvalidArgument("observability_rank: need horizon + 1 measurement matrices");
  Eigen::Index rows = 0;
  for (int t = 0; t <= horizon; ++t) {
    if (h[t].cols() != d) throw InvalidArgument("observability_rank: H column count differs from F");
    rows += h[t].rows();
  }
  MatrixXd stack(rows, d);
  MatrixXd power = MatrixXd::Identity(d, d);
  Eigen::Index row = 0;
  for (int t = 0; t <= horizon; ++t) {
    stack.middleRows(row, h[t].rows()) = h[t] * power;
    row += h[t].rows();
    power = f * power;
  }
  ObservabilityRank out;
  if (stack.size() == 0) return out;
  const Eigen::JacobiSVD<MatrixXd> svd(stack);
  const auto& s = svd.singularValues();
  const double threshold = static_cast<double>(d) * std::numeric_limits<double>::epsilon() * s[0];
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s[k] > threshold) ++out.rank;
  out.full_column_rank = out.rank == d;
  return out;
}

MatrixXd aubs_predict(const MatrixXd& pi_hat, const MatrixXd& a, const MatrixXd& q) {
  const Eigen::Index n = pi_hat.rows();
  require_shape(a, n, n, "aubs_predict: A");
  require_shape(q, n, n, "aubs_predict: Q");
  MatrixXd out = a * pi_hat * a.transpose() + q;
  symmetrize(out);
  return out;
}

MatrixXd aubs_update(const MatrixXd& pi_bar, double alpha, const MatrixXd& info) {
  if (!(alpha > 0.0) || alpha > 1.0) throw InvalidArgument("aubs_update: alpha must lie in (0, 1]");
  require_shape(info, pi_bar.rows(), pi_bar.rows(), "aubs_update: information increment");
  MatrixXd total = alpha * spd_inverse(pi_bar, "aubs_update: predicted bound") + info;
  symmetrize(total);
  return spd_inverse(total, "aubs_update: posterior information");
}

AubsStep aubs_step(const MatrixXd& pi_hat_prev, const MatrixXd& a, const MatrixXd& q, const MatrixXd& h,
                   const MatrixXd& r, double alpha) {
  AubsStep out;
  out.predicted = aubs_predict(pi_hat_prev, a, q);
  require_shape(h, r.rows(), pi_hat_prev.rows(), "aubs_step: H");
  MatrixXd info = MatrixXd::Zero(pi_hat_prev.rows(), pi_hat_prev.rows());
  if (h.rows() > 0) {
    const MatrixXd rinv = spd_inverse(r, "aubs_step: R");
    info = h.transpose() * rinv * h;
    symmetrize(info);
  }
  out.posterior = aubs_update(out.predicted, alpha, info);
  return out;
}

}  // namespace dincikf
