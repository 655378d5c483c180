#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <numbers>

#include "vbt/error.hpp"

namespace vbt {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix36d = Eigen::Matrix<double, 3, 6>;

/// Pinhole model of the tactile camera. Pixel pitch is isotropic.
struct CameraIntrinsics {
  double focal_length = 0.020;  // m; f / Z0 = 1 at the nominal contact depth
  double pixel_pitch = 6.0e-5;  // m/px
  double cu = 160.0;
  double cv = 120.0;
  int width = 320;
  int height = 240;

  /// Focal length expressed in pixels (f / rho).
  double focal_px() const { return focal_length / pixel_pitch; }
  bool inside(double u, double v) const {
    return u >= 0.0 && u <= width - 1.0 && v >= 0.0 && v <= height - 1.0;
  }
  void validate() const;
};

struct Twist {
  Eigen::Vector3d linear = Eigen::Vector3d::Zero();   // m/s
  Eigen::Vector3d angular = Eigen::Vector3d::Zero();  // rad/s

  static Twist from_vector(const Vector6d& v) {
    return {v.head<3>(), v.tail<3>()};
  }
  Vector6d vector() const {
    Vector6d out;
    out << linear, angular;
    return out;
  }
  bool finite() const { return linear.allFinite() && angular.allFinite(); }
};

/// Rigid transform mapping child-frame coordinates into the parent frame.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  Eigen::Vector3d apply_inverse(const Eigen::Vector3d& p) const {
    return rotation.transpose() * (p - translation);
  }
  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Pose inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
  /// max |R^T R - I| and |det R - 1|
  double orthonormality_error() const;
};

struct PointFeature {
  double u = 0.0;      // px
  double v = 0.0;      // px
  double depth = 0.0;  // m, camera-frame z of the contact point

  Eigen::Vector3d vector() const { return {u, v, depth}; }
  static PointFeature from_vector(const Eigen::Vector3d& s) { return {s(0), s(1), s(2)}; }
};

/// Wraps to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(a + std::numbers::pi, two_pi);
  if (w < 0.0) w += two_pi;
  w -= std::numbers::pi;
  return w == -std::numbers::pi ? std::numbers::pi : w;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w);
Eigen::Matrix3d so3_exp(const Eigen::Vector3d& rotation_vector);
/// Exponential of a body twist [v; w] (already multiplied by the duration).
Pose se3_exp(const Vector6d& xi);
/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r);

PointFeature project(const Eigen::Vector3d& point_camera, const CameraIntrinsics& k);
Eigen::Vector3d unproject(const PointFeature& feature, const CameraIntrinsics& k);

/// Interaction matrix of an image point with depth, in pixel units for rows
/// u and v and metres for the depth row. Templated so the dynamics can be
/// differentiated with forward-mode scalars.
template <typename T>
Eigen::Matrix<T, 3, 6> point_jacobian(const T& u, const T& v, const T& z, const CameraIntrinsics& k) {
  const double fp = k.focal_px();
  const double s = k.pixel_pitch / k.focal_length;
  const T x = (u - k.cu) * s;
  const T y = (v - k.cv) * s;
  const T inv_z = T(1.0) / z;
  Eigen::Matrix<T, 3, 6> j;
  j(0, 0) = -fp * inv_z;
  j(0, 1) = T(0.0);
  j(0, 2) = fp * x * inv_z;
  j(0, 3) = fp * x * y;
  j(0, 4) = -fp * (T(1.0) + x * x);
  j(0, 5) = fp * y;
  j(1, 0) = T(0.0);
  j(1, 1) = -fp * inv_z;
  j(1, 2) = fp * y * inv_z;
  j(1, 3) = fp * (T(1.0) + y * y);
  j(1, 4) = -fp * x * y;
  j(1, 5) = -fp * x;
  j(2, 0) = T(0.0);
  j(2, 1) = T(0.0);
  j(2, 2) = T(-1.0);
  j(2, 3) = -y * z;
  j(2, 4) = x * z;
  j(2, 5) = T(0.0);
  return j;
}

Matrix36d point_interaction_matrix(const PointFeature& feature, const CameraIntrinsics& k);

}  // namespace vbt
