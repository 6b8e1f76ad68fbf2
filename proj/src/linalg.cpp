#include "dincikf/linalg.hpp"

#include "dincikf/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dincikf {

void symmetrize(MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

double asymmetry(const Eigen::Ref<const MatrixXd>& m) {
  if (m.size() == 0) return 0.0;
  return (m - m.transpose()).cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Eigen::Ref<const MatrixXd>& m) {
  if (m.size() == 0) return 0.0;
  const MatrixXd s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

bool is_psd(const Eigen::Ref<const MatrixXd>& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  if (!m.allFinite()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (asymmetry(m) > tol * scale) return false;
  return min_eigenvalue(m) >= -tol * scale;
}

void require_psd(const Eigen::Ref<const MatrixXd>& m, const std::string& what) {
  if (!is_psd(m)) {
    throw InvalidArgument(what + " must be symmetric positive semi-definite");
  }
}

void require_shape(const Eigen::Ref<const MatrixXd>& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InvalidArgument(what + " must be " + std::to_string(rows) + "x" + std::to_string(cols) +
                          ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

double condition_number(const Eigen::Ref<const MatrixXd>& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  return smin > 0.0 ? s(0) / smin : std::numeric_limits<double>::infinity();
}

MatrixXd spd_inverse(const Eigen::Ref<const MatrixXd>& m, const std::string& what) {
  Eigen::LLT<MatrixXd> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure(what + " is not positive definite", condition_number(m));
  }
  MatrixXd inv = llt.solve(MatrixXd::Identity(m.rows(), m.cols()));
  symmetrize(inv);
  return inv;
}

MatrixXd psd_sqrt(const Eigen::Ref<const MatrixXd>& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()));
  const VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

MatrixXd block_diag(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out = MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace dincikf
