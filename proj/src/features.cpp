#include "vbt/features.hpp"

#include <limits>

namespace vbt {

Vector10d TactileState::vector() const {
  Vector10d x;
  x << p1.u, p1.v, p1.depth, p2.u, p2.v, p2.depth, xi.r, xi.beta, xi.alpha, xi.delta;
  return x;
}

TactileState TactileState::from_vector(const Vector10d& x) {
  return {PointFeature{x(0), x(1), x(2)}, PointFeature{x(3), x(4), x(5)},
          ContourFeatures{x(6), x(7), x(8), x(9)}};
}

ContourFeatures contour_from_points(const PointFeature& p1, const PointFeature& p2, const CameraIntrinsics& k) {
  return ContourFeatures::from_vector(detail::contour<double>(p1.vector(), p2.vector(), k));
}

Matrix46d contour_interaction_matrix(const PointFeature& p1, const PointFeature& p2, const CameraIntrinsics& k) {
  Eigen::Matrix<double, 6, 6> jp;
  jp.topRows<3>() = point_interaction_matrix(p1, k);
  jp.bottomRows<3>() = point_interaction_matrix(p2, k);
  return detail::contour_partials<double>(p1.vector(), p2.vector(), k) * jp;
}

DecoupledJacobians decouple(const Matrix46d& j_e) {
  DecoupledJacobians out;
  out.j_xy.col(0) = j_e.col(0);
  out.j_xy.col(1) = j_e.col(1);
  out.j_xy.col(2) = j_e.col(3);
  out.j_xy.col(3) = j_e.col(4);
  out.j_z.col(0) = j_e.col(2);
  out.j_z.col(1) = j_e.col(5);
  return out;
}

Vector6d interleave(const Eigen::Vector4d& xy, const Eigen::Vector2d& z) {
  Vector6d u;
  u << xy(0), xy(1), z(0), xy(2), xy(3), z(1);
  return u;
}

Vector10d system_dynamics(const Vector10d& x, const Vector6d& u, const CameraIntrinsics& k) {
  if (!(x(2) > 0.0) || !(x(5) > 0.0)) throw Error(ErrorCode::NonPositiveDepth, "state depth <= 0");
  return detail::dynamics<double, double>(x, u, k);
}

Vector10d system_dynamics(const TactileState& x, const Twist& u, const CameraIntrinsics& k) {
  return system_dynamics(x.vector(), u.vector(), k);
}

TactileState synchronize(const TactileState& x, const CameraIntrinsics& k) {
  TactileState out = x;
  out.xi = contour_from_points(x.p1, x.p2, k);
  return out;
}

TactileState anchor_on_border(const TactileState& x, const CameraIntrinsics& k, double margin_px) {
  const Eigen::Vector3d a = unproject(x.p1, k);
  const Eigen::Vector3d d = unproject(x.p2, k) - a;
  const double fp = k.focal_px();
  const double umin = margin_px - k.cu, umax = k.width - margin_px - k.cu;
  const double vmin = margin_px - k.cv, vmax = k.height - margin_px - k.cv;
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  // each bound is c0 + c1 * t >= 0 once multiplied through by depth
  const double c[5][2] = {{a.z() - 1e-6, d.z()},
                          {fp * a.x() - umin * a.z(), fp * d.x() - umin * d.z()},
                          {umax * a.z() - fp * a.x(), umax * d.z() - fp * d.x()},
                          {fp * a.y() - vmin * a.z(), fp * d.y() - vmin * d.z()},
                          {vmax * a.z() - fp * a.y(), vmax * d.z() - fp * d.y()}};
  for (const auto& [c0, c1] : c) {
    if (c1 == 0.0) {
      if (c0 < 0.0) t1 = -std::numeric_limits<double>::infinity();
      continue;
    }
    if (c1 > 0.0) {
      t0 = std::max(t0, -c0 / c1);
    } else {
      t1 = std::min(t1, -c0 / c1);
    }
  }
  if (!(t0 < t1) || !std::isfinite(t0) || !std::isfinite(t1)) {
    throw Error(ErrorCode::DegenerateSegment, "contour line does not cross the border band");
  }
  TactileState out;
  out.p1 = project(a + t0 * d, k);
  out.p2 = project(a + t1 * d, k);
  out.xi = contour_from_points(out.p1, out.p2, k);
  return out;
}

TactileState shrink_about_midpoint(const TactileState& x, const CameraIntrinsics& k, double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw Error(ErrorCode::InvalidBounds, "shrink factor must lie in (0, 1]");
  const Eigen::Vector3d a = unproject(x.p1, k), b = unproject(x.p2, k);
  const Eigen::Vector3d mid = 0.5 * (a + b);
  TactileState out = x;
  out.p1 = project(mid + factor * (a - mid), k);
  out.p2 = project(mid + factor * (b - mid), k);
  return out;
}

}  // namespace vbt
