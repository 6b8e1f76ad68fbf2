#pragma once

// Error metrics, consistency statistics, observability rank and the auxiliary
// upper-bound recursion used to check that the filter covariance is dominated.

#include "dincikf/liegroup.hpp"
#include "dincikf/linalg.hpp"

#include <map>
#include <span>
#include <utility>

namespace dincikf {

/// ||log(R_est^T R_true)||.
double rotation_error(const GroupElement& estimate, const GroupElement& truth);
/// ||p_est - p_true|| of the first translational column.
double position_error(const GroupElement& estimate, const GroupElement& truth);

/// log(X_true X_est^-1), the right-invariant error.
VectorXd right_invariant_error(const GroupElement& truth, const GroupElement& estimate);

struct Rmse {
  double rot = 0.0;
  double pos = 0.0;

  bool operator==(const Rmse&) const = default;
};

/// sqrt(mean ||log(R_est^T R)||^2) and sqrt(mean ||p_est - p||^2) over matched ids.
/// Throws InvalidArgument if the id sets differ or are empty.
Rmse rmse(const std::map<int, GroupElement>& estimates, const std::map<int, GroupElement>& truths);

/// zeta^T P^-1 zeta. Throws NumericalFailure for a singular P.
double nees(const Eigen::Ref<const VectorXd>& zeta, const Eigen::Ref<const MatrixXd>& cov);

/// Two-sided chi-squared interval for the mean of `runs` NEES samples of dimension dof.
std::pair<double, double> nees_mean_band(int dof, int runs, double confidence = 0.95);
double chi_squared_quantile(double p, double dof);

struct ObservabilityRank {
  int rank = 0;
  bool full_column_rank = false;
};

/// Rank of [H_0; H_1 F; ...; H_n F^n] with the SVD threshold d * eps * sigma_max.
/// `h` must hold at least horizon + 1 matrices.
ObservabilityRank observability_rank(const MatrixXd& f, std::span<const MatrixXd> h, int horizon);

/// Pi_bar = A Pi_hat A^T + Q.
MatrixXd aubs_predict(const MatrixXd& pi_hat, const MatrixXd& a, const MatrixXd& q);
/// Pi_hat = (alpha Pi_bar^-1 + info)^-1 for an information increment `info`.
/// Throws NumericalFailure if Pi_bar is singular.
MatrixXd aubs_update(const MatrixXd& pi_bar, double alpha, const MatrixXd& info);

struct AubsStep {
  MatrixXd predicted;
  MatrixXd posterior;
};

/// One step of Pi_bar = A Pi_hat A^T + Q, Pi_hat^-1 = alpha Pi_bar^-1 + H^T R^-1 H.
AubsStep aubs_step(const MatrixXd& pi_hat_prev, const MatrixXd& a, const MatrixXd& q, const MatrixXd& h,
                   const MatrixXd& r, double alpha);

}  // namespace dincikf
