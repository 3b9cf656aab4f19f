#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "cryoforge/core/error.hpp"
#include "cryoforge/core/grid.hpp"
#include "cryoforge/core/interp.hpp"

// Rotations act on column vectors (x, y, z), where x runs along the volume's
// w axis, y along h and z along d. All rotations about a volume are taken
// about its geometric center ((W-1)/2, (H-1)/2, (D-1)/2).
namespace cryoforge::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using RotationMatrix = Eigen::Matrix3d;
using NineMat = Eigen::Matrix3d;

struct Quaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const noexcept { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quaternion normalized() const noexcept {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }
  Quaternion operator-() const noexcept { return {-w, -x, -y, -z}; }
  bool operator==(const Quaternion&) const = default;
};

/// Euler angles in radians, each nominally in [-pi, pi).
struct EulerAngles {
  double alpha = 0.0, beta = 0.0, gamma = 0.0;
};

/// Two unconstrained 3-vectors decoded by Gram-Schmidt.
struct SixVec {
  Vec3 nu1 = Vec3::UnitX();
  Vec3 nu2 = Vec3::UnitY();
};

struct RigidTransform {
  RotationMatrix rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
};

/// Max-abs deviation of RᵀR from the identity.
inline double orthogonality_error(const Mat3& r) { return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(); }

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return orthogonality_error(r) < tol && std::abs(r.determinant() - 1.0) < tol;
}

/// Right-handed rotation by `angle` radians about coordinate axis 0 (x), 1 (y) or 2 (z).
inline Mat3 axis_rotation(int axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r = Mat3::Identity();
  const int i = (axis + 1) % 3, j = (axis + 2) % 3;
  r(i, i) = c;
  r(i, j) = -s;
  r(j, i) = s;
  r(j, j) = c;
  return r;
}

inline Mat3 axis_angle_matrix(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

/// R = R3(gamma) R2(beta) R1(alpha), extrinsic rotations about x, then y, then z.
inline RotationMatrix euler_to_matrix(const EulerAngles& e) {
  return axis_rotation(2, e.gamma) * axis_rotation(1, e.beta) * axis_rotation(0, e.alpha);
}

namespace detail {
inline double wrap_angle(double a) {
  constexpr double pi = std::numbers::pi;
  if (a >= pi) a -= 2.0 * pi;
  if (a < -pi) a += 2.0 * pi;
  return a;
}
}  // namespace detail

/// Inverse of euler_to_matrix on the beta in [-pi/2, pi/2] branch. At gimbal
/// lock (|cos beta| < 1e-9) gamma is fixed to 0.
inline EulerAngles matrix_to_euler(const RotationMatrix& r) {
  EulerAngles e;
  const double sb = std::clamp(-r(2, 0), -1.0, 1.0);
  e.beta = std::asin(sb);
  if (std::abs(std::cos(e.beta)) < 1e-9) {
    e.gamma = 0.0;
    e.alpha = std::atan2(-r(1, 2), r(1, 1));
  } else {
    e.alpha = std::atan2(r(2, 1), r(2, 2));
    e.gamma = std::atan2(r(1, 0), r(0, 0));
  }
  e.alpha = detail::wrap_angle(e.alpha);
  e.beta = detail::wrap_angle(e.beta);
  e.gamma = detail::wrap_angle(e.gamma);
  return e;
}

/// Gram-Schmidt decoding of two free vectors into R = [v1 v2 v3].
inline RotationMatrix gso_to_matrix(const SixVec& v) {
  const double n1 = v.nu1.norm();
  if (!(n1 > 1e-9)) throw DegenerateInputError("gso_to_matrix: first vector is (near) zero");
  const Vec3 v1 = v.nu1 / n1;
  const double n2 = v.nu2.norm();
  if (!(n2 > 1e-9)) throw DegenerateInputError("gso_to_matrix: second vector is (near) zero");
  const Vec3 perp = v.nu2 - v.nu2.dot(v1) * v1;
  // The sine of the angle between nu1 and nu2.
  if (!(perp.norm() / n2 > 1e-6)) throw DegenerateInputError("gso_to_matrix: vectors are (near) parallel");
  const Vec3 v2 = perp.normalized();
  const Vec3 v3 = v1.cross(v2);
  RotationMatrix r;
  r.col(0) = v1;
  r.col(1) = v2;
  r.col(2) = v3;
  return r;
}

/// Closest rotation in Frobenius norm: U diag(1, 1, det(U Vᵀ)) Vᵀ.
inline RotationMatrix svd_to_matrix(const NineMat& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (!(svd.singularValues()(2) > 1e-9))
    throw DegenerateInputError("svd_to_matrix: matrix is rank deficient, projection is not unique");
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  d(2, 2) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return u * d * v.transpose();
}

inline RotationMatrix quaternion_to_matrix(const Quaternion& q_in) {
  const Quaternion q = q_in.normalized();
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Shepperd's method; returns the representative with w >= 0.
inline Quaternion matrix_to_quaternion(const RotationMatrix& r) {
  const double tr = r.trace();
  Quaternion q;
  if (tr > 0.0) {
    const double s = 2.0 * std::sqrt(tr + 1.0);
    q = {0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s, (r(1, 0) - r(0, 1)) / s};
  } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2));
    q = {(r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s, (r(0, 2) + r(2, 0)) / s};
  } else if (r(1, 1) > r(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2));
    q = {(r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s, (r(1, 2) + r(2, 1)) / s};
  } else {
    const double s = 2.0 * std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1));
    q = {(r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s, 0.25 * s};
  }
  q = q.normalized();
  return q.w < 0.0 ? -q : q;
}

/// Geodesic angle between two rotations, in degrees within [0, 180].
inline double rotation_error(const RotationMatrix& r_est, const RotationMatrix& r_gt) {
  const double c = std::clamp(((r_est.transpose() * r_gt).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

inline double translation_error(const Vec3& t_est, const Vec3& t_gt) { return (t_est - t_gt).norm(); }

/// Transform equivalent to applying `first` and then `second` with apply_rigid.
inline RigidTransform compose(const RigidTransform& second, const RigidTransform& first) {
  return {second.rotation * first.rotation, first.translation + first.rotation.transpose() * second.translation};
}

inline Vec3 volume_center(const Dims3& n) {
  return {(static_cast<double>(n.w) - 1.0) / 2.0, (static_cast<double>(n.h) - 1.0) / 2.0,
          (static_cast<double>(n.d) - 1.0) / 2.0};
}

/// Resamples a volume under a rigid transform:
/// out(x) = in(Rᵀ(x - c) + c - t), trilinear, zero outside.
inline DensityVolume apply_rigid(const DensityVolume& vol, const RigidTransform& t) {
  const auto& n = vol.dims();
  DensityVolume out(n, vol.voxel_size);
  out.origin = vol.origin;
  const Vec3 c = volume_center(n);
  const Mat3 rt = t.rotation.transpose();
  for (std::size_t d = 0; d < n.d; ++d)
    for (std::size_t h = 0; h < n.h; ++h)
      for (std::size_t w = 0; w < n.w; ++w) {
        const Vec3 x(static_cast<double>(w), static_cast<double>(h), static_cast<double>(d));
        const Vec3 s = rt * (x - c) + c - t.translation;
        out(d, h, w) = static_cast<float>(sample_trilinear(vol.data, s.z(), s.y(), s.x()));
      }
  return out;
}

}  // namespace cryoforge::geometry
