#pragma once

// Matrix Lie groups SO(3), SE(3) and SE_2(3).
//
// Tangent coordinates are always rotation-first: [omega; v_1; ...; v_n].
// For SE(3) v_1 is the translation, for SE_2(3) v_1 is position and v_2 is
// velocity. Every Jacobian and covariance in the library uses this ordering.

#include <Eigen/Core>

#include <array>
#include <string_view>

namespace dincikf {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector9 = Eigen::Matrix<double, 9, 1>;
using Matrix9 = Eigen::Matrix<double, 9, 9>;
using Matrix4 = Eigen::Matrix4d;

namespace lie {

enum class GroupKind { SO3, SE3, SE23 };

/// Coordinates of a tangent vector: up to 9 entries, stack allocated.
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 9, 1>;
/// d x d matrices acting on tangent coordinates (adjoint, Jacobians).
using TangentMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 9, 9>;
/// Matrix embedding of a group or algebra element (3x3, 4x4 or 5x5).
using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 5, 5>;

constexpr int tangent_dim(GroupKind kind) {
  return kind == GroupKind::SO3 ? 3 : (kind == GroupKind::SE3 ? 6 : 9);
}
constexpr int column_count(GroupKind kind) {
  return kind == GroupKind::SO3 ? 0 : (kind == GroupKind::SE3 ? 1 : 2);
}
constexpr int embedding_size(GroupKind kind) { return 3 + column_count(kind); }

std::string_view to_string(GroupKind kind);
GroupKind group_kind_from_string(std::string_view name);

/// Below this angle Rodrigues-type coefficients switch to Taylor expansions.
inline constexpr double kSmallAngle = 1e-7;

Matrix3 skew(const Vector3& w);

/// Element of SO(3). Construction through from_matrix checks orthonormality.
class Rotation {
 public:
  Rotation() : matrix_(Matrix3::Identity()) {}

  /// Throws InvalidArgument unless R R^T = I and det R = 1 within 1e-9.
  static Rotation from_matrix(const Matrix3& m);
  /// No validation; for results of closed-form maps that are orthonormal by construction.
  static Rotation unchecked(const Matrix3& m) { return Rotation(m); }

  const Matrix3& matrix() const { return matrix_; }
  Rotation inverse() const { return Rotation(matrix_.transpose()); }
  Rotation operator*(const Rotation& other) const { return Rotation(matrix_ * other.matrix_); }
  Vector3 operator*(const Vector3& v) const { return matrix_ * v; }

  /// Projects back onto SO(3) to remove accumulated round-off.
  Rotation normalized() const;

  /// Frobenius norm of R R^T - I.
  double orthogonality_error() const;

 private:
  explicit Rotation(const Matrix3& m) : matrix_(m) {}
  Matrix3 matrix_;
};

/// Coordinates of a Lie algebra element together with the group they belong to.
class TangentVector {
 public:
  TangentVector(GroupKind kind, const Eigen::Ref<const Eigen::VectorXd>& coords);

  static TangentVector zero(GroupKind kind);

  GroupKind kind() const { return kind_; }
  int dim() const { return static_cast<int>(coords_.size()); }
  const Coords& coords() const { return coords_; }
  Vector3 omega() const { return coords_.head<3>(); }
  /// Translational block i (0-based): translation/position for i = 0, velocity for i = 1.
  Vector3 column(int i) const { return coords_.segment<3>(3 + 3 * i); }
  double norm() const { return coords_.norm(); }

  TangentVector operator+(const TangentVector& other) const;
  TangentVector operator-(const TangentVector& other) const;
  TangentVector operator-() const { return TangentVector(kind_, -coords_); }
  TangentVector operator*(double s) const { return TangentVector(kind_, coords_ * s); }

 private:
  GroupKind kind_;
  Coords coords_;
};

class GroupElement {
 public:
  /// Identity of SE(3).
  GroupElement() : GroupElement(GroupKind::SE3) {}
  explicit GroupElement(GroupKind kind);

  static GroupElement identity(GroupKind kind) { return GroupElement(kind); }
  static GroupElement so3(const Rotation& r);
  static GroupElement se3(const Rotation& r, const Vector3& translation);
  static GroupElement se23(const Rotation& r, const Vector3& position, const Vector3& velocity);
  /// Validates block structure and the rotation invariants.
  static GroupElement from_matrix(GroupKind kind, const Eigen::Ref<const Eigen::MatrixXd>& m);

  GroupKind kind() const { return kind_; }
  int dim() const { return tangent_dim(kind_); }
  const Rotation& rotation() const { return rotation_; }
  Vector3 column(int i) const { return columns_.col(i); }
  Vector3 translation() const { return columns_.col(0); }
  Vector3 velocity() const { return columns_.col(1); }

  EmbeddingMatrix matrix() const;
  /// Row-major 4x4 pose entries (rotation and first column), used by serializers.
  std::array<double, 16> pose_row_major() const;

  GroupElement operator*(const GroupElement& other) const;
  GroupElement inverse() const;

  /// SE(3) part (R, t_1) of an SE(3) or SE_2(3) element.
  GroupElement pose() const;

  GroupElement normalized() const;

 private:
  GroupKind kind_;
  Rotation rotation_;
  Eigen::Matrix<double, 3, 2> columns_ = Eigen::Matrix<double, 3, 2>::Zero();
};

EmbeddingMatrix hat(const TangentVector& v);
/// Inverse of hat. Throws InvalidArgument if m lacks the algebra block structure.
TangentVector vee(GroupKind kind, const Eigen::Ref<const Eigen::MatrixXd>& m);

/// Closed-form exponential (Rodrigues plus left-Jacobian translation).
GroupElement exp(const TangentVector& v);
/// Principal logarithm. Throws BranchAmbiguity for rotation angles at pi.
TangentVector log(const GroupElement& x);

/// Ad_X with X exp(xi) = exp(Ad_X xi) X.
TangentMatrix adjoint(const GroupElement& x);
/// ad_xi, the matrix of the Lie bracket [xi, .].
TangentMatrix ad(const TangentVector& v);

/// Left Jacobian dexp_x: exp(x + e) ~ exp(dexp_x e) exp(x).
TangentMatrix left_jacobian(const TangentVector& x);
/// Throws Singularity when the rotation angle is a nonzero multiple of 2 pi.
TangentMatrix left_jacobian_inverse(const TangentVector& x);

/// First-order BCH: exp(x) exp(y) ~ exp(x + dexp_{-x}^{-1} y).
/// Accurate to O(|y|^2); validated for |y| < 0.1.
TangentVector bch_compose(const TangentVector& x, const TangentVector& y);

// SO(3) building blocks, exposed for the process models.
Matrix3 so3_exp(const Vector3& w);
Vector3 so3_log(const Matrix3& r);
Matrix3 so3_left_jacobian(const Vector3& w);
Matrix3 so3_left_jacobian_inverse(const Vector3& w);

}  // namespace lie

using lie::GroupElement;
using lie::GroupKind;
using lie::Rotation;
using lie::TangentVector;

}  // namespace dincikf
