#pragma once

#include <Eigen/Core>

#include <string>

namespace dincikf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// (M + M^T) / 2, in place.
void symmetrize(MatrixXd& m);

/// Largest |M - M^T| entry.
double asymmetry(const Eigen::Ref<const MatrixXd>& m);

/// Smallest eigenvalue of the symmetric part of m.
double min_eigenvalue(const Eigen::Ref<const MatrixXd>& m);

/// True when m is square, symmetric within tol and has no eigenvalue below -tol * max(1, |m|).
bool is_psd(const Eigen::Ref<const MatrixXd>& m, double tol = 1e-9);

/// Throws InvalidArgument naming `what` unless m is symmetric PSD.
void require_psd(const Eigen::Ref<const MatrixXd>& m, const std::string& what);

/// Throws InvalidArgument naming `what` unless m is rows x cols.
void require_shape(const Eigen::Ref<const MatrixXd>& m, Eigen::Index rows, Eigen::Index cols,
                   const std::string& what);

/// 2-norm condition number.
double condition_number(const Eigen::Ref<const MatrixXd>& m);

/// Inverse of a symmetric positive-definite matrix. Throws NumericalFailure otherwise.
MatrixXd spd_inverse(const Eigen::Ref<const MatrixXd>& m, const std::string& what);

/// Square-root factor L with L L^T = m for a PSD m (zero directions allowed).
MatrixXd psd_sqrt(const Eigen::Ref<const MatrixXd>& m);

/// Block-diagonal assembly helper.
MatrixXd block_diag(const MatrixXd& a, const MatrixXd& b);

}  // namespace dincikf
