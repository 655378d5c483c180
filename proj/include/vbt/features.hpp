#pragma once

#include <Eigen/Core>
#include <cmath>
#include <unsupported/Eigen/AutoDiff>

#include "vbt/geometry.hpp"

namespace vbt {

using Vector4d = Eigen::Vector4d;
using Vector10d = Eigen::Matrix<double, 10, 1>;
using Matrix46d = Eigen::Matrix<double, 4, 6>;
using Matrix10d = Eigen::Matrix<double, 10, 10>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Contour line seen by the sensor: offset r [m] and orientation beta [rad] in
/// the metric image plane, sensor pitch alpha [rad] and contact depth delta [m].
struct ContourFeatures {
  double r = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  double delta = 0.0;

  Vector4d vector() const { return {r, beta, alpha, delta}; }
  static ContourFeatures from_vector(const Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

/// Layout: [u1 v1 Z1 u2 v2 Z2 r beta alpha delta].
struct TactileState {
  PointFeature p1;
  PointFeature p2;
  ContourFeatures xi;

  Vector10d vector() const;
  static TactileState from_vector(const Vector10d& x);
};

struct DecoupledJacobians {
  Eigen::Matrix4d j_xy;                 // columns v_x, v_y, w_x, w_y
  Eigen::Matrix<double, 4, 2> j_z;      // columns v_z, w_z
};

namespace detail {

/// True when p1/p2 must be swapped so that beta lands in (-pi/2, pi/2].
inline bool needs_swap(double du, double dv) { return du < 0.0 || (du == 0.0 && dv < 0.0); }

inline double value_of(double t) { return t; }
template <typename D>
double value_of(const Eigen::AutoDiffScalar<D>& t) { return t.value(); }

/// E(s1, s2) for already canonically ordered points.
template <typename T>
Eigen::Matrix<T, 4, 1> contour_ordered(const Eigen::Matrix<T, 3, 1>& s1, const Eigen::Matrix<T, 3, 1>& s2,
                                       const CameraIntrinsics& k) {
  using std::atan2;
  using std::cos;
  using std::sin;
  using std::sqrt;
  const double rho = k.pixel_pitch;
  const T m1x = (s1(0) - k.cu) * rho, m1y = (s1(1) - k.cv) * rho;
  const T m2x = (s2(0) - k.cu) * rho, m2y = (s2(1) - k.cv) * rho;
  const T beta = atan2(m2y - m1y, m2x - m1x);
  const T cx = (m1x + m2x) * 0.5, cy = (m1y + m2y) * 0.5;
  const T r = -sin(beta) * cx + cos(beta) * cy;
  const double inv_f = 1.0 / k.focal_length;
  const T qx = (m2x * s2(2) - m1x * s1(2)) * inv_f;
  const T qy = (m2y * s2(2) - m1y * s1(2)) * inv_f;
  const T len = sqrt(qx * qx + qy * qy);
  const T alpha = atan2(s1(2) - s2(2), len);
  const T delta = (s1(2) + s2(2)) * 0.5;
  Eigen::Matrix<T, 4, 1> xi;
  xi << r, beta, alpha, delta;
  return xi;
}

/// d xi / d [s1; s2] for canonically ordered points.
template <typename T>
Eigen::Matrix<T, 4, 6> contour_partials_ordered(const Eigen::Matrix<T, 3, 1>& s1,
                                                const Eigen::Matrix<T, 3, 1>& s2,
                                                const CameraIntrinsics& k) {
  using std::sqrt;
  const double rho = k.pixel_pitch;
  const double inv_f = 1.0 / k.focal_length;
  const T m1x = (s1(0) - k.cu) * rho, m1y = (s1(1) - k.cv) * rho;
  const T m2x = (s2(0) - k.cu) * rho, m2y = (s2(1) - k.cv) * rho;
  const T dx = m2x - m1x, dy = m2y - m1y;
  const T ell = sqrt(dx * dx + dy * dy);
  const T ex = dx / ell, ey = dy / ell;
  const T nx = -ey, ny = ex;
  const T cx = (m1x + m2x) * 0.5, cy = (m1y + m2y) * 0.5;
  const T ec = ex * cx + ey * cy;

  const T z1 = s1(2), z2 = s2(2);
  const T qx = (m2x * z2 - m1x * z1) * inv_f;
  const T qy = (m2y * z2 - m1y * z1) * inv_f;
  const T len = sqrt(qx * qx + qy * qy);
  const T d = z1 - z2;
  const T den = len * len + d * d;
  const T da_dlen = -d / den;
  const T da_dd = len / den;
  const T qhx = qx / len, qhy = qy / len;

  Eigen::Matrix<T, 4, 6> out;
  out.setZero();
  // beta
  out(1, 0) = -nx / ell * rho;
  out(1, 1) = -ny / ell * rho;
  out(1, 3) = nx / ell * rho;
  out(1, 4) = ny / ell * rho;
  // r
  out(0, 0) = (nx * 0.5 + ec * nx / ell) * rho;
  out(0, 1) = (ny * 0.5 + ec * ny / ell) * rho;
  out(0, 3) = (nx * 0.5 - ec * nx / ell) * rho;
  out(0, 4) = (ny * 0.5 - ec * ny / ell) * rho;
  // alpha
  out(2, 0) = da_dlen * (-qhx * z1 * inv_f) * rho;
  out(2, 1) = da_dlen * (-qhy * z1 * inv_f) * rho;
  out(2, 2) = da_dd + da_dlen * (-(qhx * m1x + qhy * m1y) * inv_f);
  out(2, 3) = da_dlen * (qhx * z2 * inv_f) * rho;
  out(2, 4) = da_dlen * (qhy * z2 * inv_f) * rho;
  out(2, 5) = -da_dd + da_dlen * ((qhx * m2x + qhy * m2y) * inv_f);
  // delta
  out(3, 2) = T(0.5);
  out(3, 5) = T(0.5);
  return out;
}

template <typename T>
void check_segment(const Eigen::Matrix<T, 3, 1>& s1, const Eigen::Matrix<T, 3, 1>& s2) {
  const double du = value_of(s2(0) - s1(0));
  const double dv = value_of(s2(1) - s1(1));
  if (!(std::hypot(du, dv) >= 1.0)) {
    throw Error(ErrorCode::DegenerateSegment, "feature points closer than 1 px");
  }
}

/// E(s1, s2) with canonical reordering.
template <typename T>
Eigen::Matrix<T, 4, 1> contour(const Eigen::Matrix<T, 3, 1>& s1, const Eigen::Matrix<T, 3, 1>& s2,
                               const CameraIntrinsics& k) {
  check_segment(s1, s2);
  if (needs_swap(value_of(s2(0) - s1(0)), value_of(s2(1) - s1(1)))) return contour_ordered<T>(s2, s1, k);
  return contour_ordered<T>(s1, s2, k);
}

/// d xi / d [s1; s2] in the caller's point order.
template <typename T>
Eigen::Matrix<T, 4, 6> contour_partials(const Eigen::Matrix<T, 3, 1>& s1, const Eigen::Matrix<T, 3, 1>& s2,
                                        const CameraIntrinsics& k) {
  check_segment(s1, s2);
  if (needs_swap(value_of(s2(0) - s1(0)), value_of(s2(1) - s1(1)))) {
    const Eigen::Matrix<T, 4, 6> p = contour_partials_ordered<T>(s2, s1, k);
    Eigen::Matrix<T, 4, 6> out;
    out.template leftCols<3>() = p.template rightCols<3>();
    out.template rightCols<3>() = p.template leftCols<3>();
    return out;
  }
  return contour_partials_ordered<T>(s1, s2, k);
}

/// x_dot = f(x, u): stacked point and contour interaction matrices times u.
/// The contour block of x does not enter the right-hand side.
template <typename T, typename U>
Eigen::Matrix<T, 10, 1> dynamics(const Eigen::Matrix<T, 10, 1>& x, const Eigen::Matrix<U, 6, 1>& u,
                                 const CameraIntrinsics& k) {
  const Eigen::Matrix<T, 3, 1> s1 = x.template segment<3>(0);
  const Eigen::Matrix<T, 3, 1> s2 = x.template segment<3>(3);
  const Eigen::Matrix<T, 3, 6> j1 = point_jacobian<T>(s1(0), s1(1), s1(2), k);
  const Eigen::Matrix<T, 3, 6> j2 = point_jacobian<T>(s2(0), s2(1), s2(2), k);
  Eigen::Matrix<T, 6, 1> ut;
  for (int i = 0; i < 6; ++i) ut(i) = T(u(i));
  Eigen::Matrix<T, 6, 1> sdot;
  sdot.template head<3>() = j1 * ut;
  sdot.template tail<3>() = j2 * ut;
  Eigen::Matrix<T, 10, 1> out;
  out.template head<6>() = sdot;
  out.template tail<4>() = contour_partials<T>(s1, s2, k) * sdot;
  return out;
}

}  // namespace detail

ContourFeatures contour_from_points(const PointFeature& p1, const PointFeature& p2, const CameraIntrinsics& k);

/// Analytic chain rule: d xi / d s times the stacked point interaction matrices.
Matrix46d contour_interaction_matrix(const PointFeature& p1, const PointFeature& p2, const CameraIntrinsics& k);

DecoupledJacobians decouple(const Matrix46d& j_e);
/// Inverse of the column split used by decouple: [v_x v_y w_x w_y] + [v_z w_z] -> 6-twist.
Vector6d interleave(const Eigen::Vector4d& twist_xy, const Eigen::Vector2d& twist_z);

Vector10d system_dynamics(const TactileState& x, const Twist& u, const CameraIntrinsics& k);
Vector10d system_dynamics(const Vector10d& x, const Vector6d& u, const CameraIntrinsics& k);

/// Recomputes the contour block from the point block.
TactileState synchronize(const TactileState& x, const CameraIntrinsics& k);

/// Slides both points along their 3D line to where it crosses the border band
/// (margin in px), keeping their order; xi is re-derived. Throws
/// DegenerateSegment when the line does not cross the band.
TactileState anchor_on_border(const TactileState& x, const CameraIntrinsics& k, double margin_px);

/// Pulls both points toward their 3D midpoint by `factor` (0 < factor <= 1).
/// r, beta, alpha and delta are unchanged.
TactileState shrink_about_midpoint(const TactileState& x, const CameraIntrinsics& k, double factor);

}  // namespace vbt
