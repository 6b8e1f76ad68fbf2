#include "dincikf/liegroup.hpp"

#include "dincikf/errors.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace dincikf::lie {

namespace {

// Coefficients whose closed forms lose digits to cancellation long before the
// argument reaches zero use their series below this angle instead.
constexpr double kSeriesAngle = 1e-3;

void require_kind(GroupKind a, GroupKind b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": group kind mismatch (" +
                          std::string(to_string(a)) + " vs " + std::string(to_string(b)) + ")");
  }
}

// Translational block of the SE(3) left Jacobian for rotation-first coordinates.
Matrix3 se3_q(const Vector3& rho, const Vector3& phi) {
  const double t = phi.norm();
  const double t2 = t * t;
  const Matrix3 p = skew(phi);
  const Matrix3 r = skew(rho);
  const Matrix3 pr = p * r;
  const Matrix3 rp = r * p;
  const Matrix3 prp = pr * p;

  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  if (t < kSeriesAngle) {
    c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
  } else {
    const double s = std::sin(t);
    const double c = std::cos(t);
    c1 = (t - s) / (t2 * t);
    c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t);
  }
  return 0.5 * r + c1 * (pr + rp + prp) + c2 * (p * pr + rp * p - 3.0 * prp) +
         c3 * (prp * p + p * prp);
}

}  // namespace

std::string_view to_string(GroupKind kind) {
  switch (kind) {
    case GroupKind::SO3:
      return "SO3";
    case GroupKind::SE3:
      return "SE3";
    case GroupKind::SE23:
      return "SE23";
  }
  return "?";
}

GroupKind group_kind_from_string(std::string_view name) {
  if (name == "SO3") return GroupKind::SO3;
  if (name == "SE3") return GroupKind::SE3;
  if (name == "SE23") return GroupKind::SE23;
  throw InvalidArgument("unknown group kind '" + std::string(name) + "'");
}

Matrix3 skew(const Vector3& w) {
  Matrix3 s;
  // clang-format off
  s <<  0.0,  -w.z(),  w.y(),
        w.z(),  0.0,  -w.x(),
       -w.y(),  w.x(),  0.0;
  // clang-format on
  return s;
}

// ---------------------------------------------------------------------------
// Rotation

Rotation Rotation::from_matrix(const Matrix3& m) {
  Rotation r(m);
  if (!m.allFinite() || r.orthogonality_error() > 1e-9 || std::abs(m.determinant() - 1.0) > 1e-9) {
    throw InvalidArgument("matrix is not a rotation (R R^T != I or det R != 1)");
  }
  return r;
}

Rotation Rotation::normalized() const {
  return Rotation(Eigen::Quaterniond(matrix_).normalized().toRotationMatrix());
}

double Rotation::orthogonality_error() const {
  return (matrix_ * matrix_.transpose() - Matrix3::Identity()).norm();
}

// ---------------------------------------------------------------------------
// TangentVector

TangentVector::TangentVector(GroupKind kind, const Eigen::Ref<const Eigen::VectorXd>& coords)
    : kind_(kind) {
  if (coords.size() != tangent_dim(kind)) {
    throw InvalidArgument("tangent vector of " + std::string(to_string(kind)) + " needs " +
                          std::to_string(tangent_dim(kind)) + " coordinates, got " +
                          std::to_string(coords.size()));
  }
  coords_ = coords;
}

TangentVector TangentVector::zero(GroupKind kind) {
  return TangentVector(kind, Eigen::VectorXd::Zero(tangent_dim(kind)));
}

TangentVector TangentVector::operator+(const TangentVector& other) const {
  require_kind(kind_, other.kind_, "tangent +");
  return TangentVector(kind_, coords_ + other.coords_);
}

TangentVector TangentVector::operator-(const TangentVector& other) const {
  require_kind(kind_, other.kind_, "tangent -");
  return TangentVector(kind_, coords_ - other.coords_);
}

// ---------------------------------------------------------------------------
// GroupElement

GroupElement::GroupElement(GroupKind kind) : kind_(kind) {}

GroupElement GroupElement::so3(const Rotation& r) {
  GroupElement g(GroupKind::SO3);
  g.rotation_ = r;
  return g;
}

GroupElement GroupElement::se3(const Rotation& r, const Vector3& translation) {
  GroupElement g(GroupKind::SE3);
  g.rotation_ = r;
  g.columns_.col(0) = translation;
  return g;
}

GroupElement GroupElement::se23(const Rotation& r, const Vector3& position, const Vector3& velocity) {
  GroupElement g(GroupKind::SE23);
  g.rotation_ = r;
  g.columns_.col(0) = position;
  g.columns_.col(1) = velocity;
  return g;
}

GroupElement GroupElement::from_matrix(GroupKind kind, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  const int n = embedding_size(kind);
  if (m.rows() != n || m.cols() != n) {
    throw InvalidArgument("embedding of " + std::string(to_string(kind)) + " must be " +
                          std::to_string(n) + "x" + std::to_string(n));
  }
  const int c = column_count(kind);
  if (c > 0) {
    const double bottom_err =
        m.bottomLeftCorner(c, 3).norm() +
        (m.bottomRightCorner(c, c) - Eigen::MatrixXd::Identity(c, c)).norm();
    if (bottom_err > 1e-12) {
      throw InvalidArgument("group embedding must have [0 I] as its bottom rows");
    }
  }
  GroupElement g(kind);
  g.rotation_ = Rotation::from_matrix(m.topLeftCorner<3, 3>());
  for (int i = 0; i < c; ++i) g.columns_.col(i) = m.block<3, 1>(0, 3 + i);
  return g;
}

EmbeddingMatrix GroupElement::matrix() const {
  const int n = embedding_size(kind_);
  EmbeddingMatrix m = EmbeddingMatrix::Identity(n, n);
  m.topLeftCorner<3, 3>() = rotation_.matrix();
  for (int i = 0; i < column_count(kind_); ++i) m.block<3, 1>(0, 3 + i) = columns_.col(i);
  return m;
}

std::array<double, 16> GroupElement::pose_row_major() const {
  std::array<double, 16> out{};
  const Matrix3& r = rotation_.matrix();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out[4 * i + j] = r(i, j);
    out[4 * i + 3] = kind_ == GroupKind::SO3 ? 0.0 : columns_(i, 0);
  }
  out[15] = 1.0;
  return out;
}

GroupElement GroupElement::operator*(const GroupElement& other) const {
  require_kind(kind_, other.kind_, "compose");
  GroupElement g(kind_);
  g.rotation_ = rotation_ * other.rotation_;
  for (int i = 0; i < column_count(kind_); ++i) {
    g.columns_.col(i) = rotation_.matrix() * other.columns_.col(i) + columns_.col(i);
  }
  return g;
}

GroupElement GroupElement::inverse() const {
  GroupElement g(kind_);
  g.rotation_ = rotation_.inverse();
  for (int i = 0; i < column_count(kind_); ++i) {
    g.columns_.col(i) = -(rotation_.matrix().transpose() * columns_.col(i));
  }
  return g;
}

GroupElement GroupElement::pose() const {
  if (kind_ == GroupKind::SO3) throw InvalidArgument("SO3 element has no pose part");
  return se3(rotation_, columns_.col(0));
}

GroupElement GroupElement::normalized() const {
  GroupElement g = *this;
  g.rotation_ = rotation_.normalized();
  return g;
}

// ---------------------------------------------------------------------------
// SO(3)

Matrix3 so3_exp(const Vector3& w) {
  const double t = w.norm();
  const Matrix3 k = skew(w);
  if (t < kSmallAngle) {
    return Matrix3::Identity() + k + 0.5 * k * k;
  }
  const double half = std::sin(0.5 * t);
  return Matrix3::Identity() + (std::sin(t) / t) * k + (2.0 * half * half / (t * t)) * k * k;
}

Vector3 so3_log(const Matrix3& r) {
  const Vector3 w(0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)), 0.5 * (r(1, 0) - r(0, 1)));
  const double s = w.norm();
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double t = std::atan2(s, c);

  if (t < kSmallAngle) {
    return w;
  }
  constexpr double pi = std::numbers::pi;
  if (pi - t < 1e-9) {
    throw BranchAmbiguity("rotation log is ambiguous at angle pi");
  }
  if (t < pi - kSeriesAngle) {
    return (t / s) * w;
  }
  // Near pi the skew part vanishes; recover the axis from the symmetric part
  // (R + R^T)/2 = cos t I + (1 - cos t) a a^T and fix its sign with the skew part.
  const Matrix3 aat = (0.5 * (r + r.transpose()) - c * Matrix3::Identity()) / (1.0 - c);
  int k = 0;
  aat.diagonal().maxCoeff(&k);
  Vector3 axis = aat.col(k) / std::sqrt(std::max(aat(k, k), 0.0));
  axis.normalize();
  if (axis.dot(w) < 0.0) axis = -axis;
  return t * axis;
}

Matrix3 so3_left_jacobian(const Vector3& w) {
  const double t = w.norm();
  const Matrix3 k = skew(w);
  if (t < kSmallAngle) {
    return Matrix3::Identity() + 0.5 * k + (1.0 / 6.0) * k * k;
  }
  const double t2 = t * t;
  const double half = std::sin(0.5 * t);
  const double b = 2.0 * half * half / t2;
  const double c = t < kSeriesAngle ? 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
                                    : (t - std::sin(t)) / (t2 * t);
  return Matrix3::Identity() + b * k + c * k * k;
}

Matrix3 so3_left_jacobian_inverse(const Vector3& w) {
  const double t = w.norm();
  const Matrix3 k = skew(w);
  if (t < kSeriesAngle) {
    const double t2 = t * t;
    return Matrix3::Identity() - 0.5 * k + (1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0) * k * k;
  }
  const double half_sin = std::sin(0.5 * t);
  if (std::abs(half_sin) < 1e-9) {
    throw Singularity("left Jacobian is singular at rotation angle " + std::to_string(t));
  }
  const double d = (1.0 - 0.5 * t * std::cos(0.5 * t) / half_sin) / (t * t);
  return Matrix3::Identity() - 0.5 * k + d * k * k;
}

// ---------------------------------------------------------------------------
// Group-generic maps

EmbeddingMatrix hat(const TangentVector& v) {
  const int n = embedding_size(v.kind());
  EmbeddingMatrix m = EmbeddingMatrix::Zero(n, n);
  m.topLeftCorner<3, 3>() = skew(v.omega());
  for (int i = 0; i < column_count(v.kind()); ++i) m.block<3, 1>(0, 3 + i) = v.column(i);
  return m;
}

TangentVector vee(GroupKind kind, const Eigen::Ref<const Eigen::MatrixXd>& m) {
  const int n = embedding_size(kind);
  if (m.rows() != n || m.cols() != n) {
    throw InvalidArgument("algebra matrix of " + std::string(to_string(kind)) + " must be " +
                          std::to_string(n) + "x" + std::to_string(n));
  }
  const Matrix3 w = m.topLeftCorner<3, 3>();
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  double structure_err = (w + w.transpose()).cwiseAbs().maxCoeff();
  if (n > 3) structure_err += m.bottomRows(n - 3).cwiseAbs().maxCoeff();
  if (structure_err > 1e-12 * scale) {
    throw InvalidArgument("matrix is not in the Lie algebra (skew block / zero bottom rows)");
  }
  Coords c(tangent_dim(kind));
  c.head<3>() << w(2, 1), w(0, 2), w(1, 0);
  for (int i = 0; i < column_count(kind); ++i) c.segment<3>(3 + 3 * i) = m.block<3, 1>(0, 3 + i);
  return TangentVector(kind, c);
}

GroupElement exp(const TangentVector& v) {
  const Vector3 w = v.omega();
  const Rotation r = Rotation::unchecked(so3_exp(w));
  switch (v.kind()) {
    case GroupKind::SO3:
      return GroupElement::so3(r);
    case GroupKind::SE3:
      return GroupElement::se3(r, so3_left_jacobian(w) * v.column(0));
    case GroupKind::SE23: {
      const Matrix3 j = so3_left_jacobian(w);
      return GroupElement::se23(r, j * v.column(0), j * v.column(1));
    }
  }
  return GroupElement(v.kind());
}

TangentVector log(const GroupElement& x) {
  const Vector3 w = so3_log(x.rotation().matrix());
  Coords c(x.dim());
  c.head<3>() = w;
  if (x.kind() != GroupKind::SO3) {
    const Matrix3 jinv = so3_left_jacobian_inverse(w);
    for (int i = 0; i < column_count(x.kind()); ++i) c.segment<3>(3 + 3 * i) = jinv * x.column(i);
  }
  return TangentVector(x.kind(), c);
}

TangentMatrix adjoint(const GroupElement& x) {
  const int d = x.dim();
  TangentMatrix a = TangentMatrix::Zero(d, d);
  const Matrix3& r = x.rotation().matrix();
  for (int b = 0; b < d / 3; ++b) a.block<3, 3>(3 * b, 3 * b) = r;
  for (int i = 0; i < column_count(x.kind()); ++i) {
    a.block<3, 3>(3 + 3 * i, 0) = skew(x.column(i)) * r;
  }
  return a;
}

TangentMatrix ad(const TangentVector& v) {
  const int d = v.dim();
  TangentMatrix a = TangentMatrix::Zero(d, d);
  const Matrix3 w = skew(v.omega());
  for (int b = 0; b < d / 3; ++b) a.block<3, 3>(3 * b, 3 * b) = w;
  for (int i = 0; i < column_count(v.kind()); ++i) {
    a.block<3, 3>(3 + 3 * i, 0) = skew(v.column(i));
  }
  return a;
}

TangentMatrix left_jacobian(const TangentVector& x) {
  const int d = x.dim();
  const Vector3 w = x.omega();
  const Matrix3 j = so3_left_jacobian(w);
  TangentMatrix out = TangentMatrix::Zero(d, d);
  for (int b = 0; b < d / 3; ++b) out.block<3, 3>(3 * b, 3 * b) = j;
  for (int i = 0; i < column_count(x.kind()); ++i) {
    out.block<3, 3>(3 + 3 * i, 0) = se3_q(x.column(i), w);
  }
  return out;
}

TangentMatrix left_jacobian_inverse(const TangentVector& x) {
  const int d = x.dim();
  const Vector3 w = x.omega();
  const Matrix3 jinv = so3_left_jacobian_inverse(w);
  TangentMatrix out = TangentMatrix::Zero(d, d);
  for (int b = 0; b < d / 3; ++b) out.block<3, 3>(3 * b, 3 * b) = jinv;
  for (int i = 0; i < column_count(x.kind()); ++i) {
    out.block<3, 3>(3 + 3 * i, 0) = -jinv * se3_q(x.column(i), w) * jinv;
  }
  return out;
}

TangentVector bch_compose(const TangentVector& x, const TangentVector& y) {
  require_kind(x.kind(), y.kind(), "bch_compose");
  const Coords step = left_jacobian_inverse(-x) * y.coords();
  return TangentVector(x.kind(), x.coords() + step);
}

}  // namespace dincikf::lie
