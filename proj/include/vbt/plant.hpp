#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vbt/depth_image.hpp"
#include "vbt/features.hpp"
#include "vbt/geometry.hpp"

namespace vbt {

/// Admissible contact-depth band [m]; outside it the sensor has lost contact
/// (too shallow) or is over-pressed.
inline constexpr double kDeltaMin = 0.0182;
inline constexpr double kDeltaMax = 0.022;
/// Ground-truth endpoints are clipped to this distance from the image border.
inline constexpr double kBorderMarginPx = 10.0;

enum class ContourKind { Line, SShape, Hexagon, Circle, Polyline };

const char* to_string(ContourKind kind);
ContourKind contour_kind_from_string(const std::string& name);

/// Parametric contour on the surface, stored as a world-XY polyline.
/// Smooth kinds (s_shape, circle) are densely sampled; polygonal kinds keep
/// their true vertices so that corners stay sharp.
class ContourPath {
 public:
  struct Params {
    ContourKind kind = ContourKind::Line;
    Eigen::Vector2d origin = Eigen::Vector2d::Zero();  // start of the path
    double heading = 0.0;                              // initial tangent, rad
    double length = 0.30;                              // line, s_shape
    double amplitude = 0.02;                           // s_shape
    double wavelength = 0.12;                          // s_shape
    double circumradius = 0.04;                        // hexagon
    double radius = 0.03;                              // circle
    std::vector<Eigen::Vector2d> vertices;             // polyline
  };

  explicit ContourPath(Params params);

  const Params& params() const { return params_; }
  ContourKind kind() const { return params_.kind; }
  bool smooth() const { return params_.kind == ContourKind::SShape || params_.kind == ContourKind::Circle; }
  const std::vector<Eigen::Vector2d>& vertices() const { return vertices_; }
  /// Cumulative arc length at each vertex.
  const std::vector<double>& arclength() const { return cumulative_; }
  double total_length() const { return cumulative_.back(); }

  Eigen::Vector2d point_at(double s) const;
  Eigen::Vector2d tangent_at(double s) const;
  /// Arc length of the closest path point, searched within [s_hint - window, s_hint + window].
  double closest_arclength(const Eigen::Vector2d& p, double s_hint, double window) const;
  /// Unsigned distance from p to the polyline.
  double distance(const Eigen::Vector2d& p) const;

 private:
  Params params_;
  std::vector<Eigen::Vector2d> vertices_;
  std::vector<double> cumulative_;
};

/// Surface plane z = z0 + gx * x + gy * y in world coordinates.
struct SurfacePlane {
  double z0 = 0.0;
  double gx = 0.0;
  double gy = 0.0;
  double height(double x, double y) const { return z0 + gx * x + gy * y; }
};

struct WorldModel {
  ContourPath contour{ContourPath::Params{}};
  SurfacePlane surface;
  double ridge_height = 5.0e-4;  // m
  double ridge_sigma = 4.0e-4;   // m
  void validate() const;
};

struct SensorState {
  Pose pose;  // camera frame expressed in the world frame
  double clock = 0.0;
};

struct Disturbance {
  double time = 0.0;
  Vector6d offset = Vector6d::Zero();  // [translation m; rotation vector rad], camera frame
};

/// Camera looking straight down at the surface with its x axis along `heading`,
/// optical centre at height `depth` above the surface point (x, y).
Pose nominal_pose(const WorldModel& world, const Eigen::Vector2d& xy, double heading, double depth);

enum class NoContactReason { None, NoCrossing, DepthBand };

struct GroundTruth {
  std::optional<TactileState> state;
  NoContactReason reason = NoContactReason::None;
  int segment = -1;  // index of the polyline segment that produced the line (polygonal paths)
  bool in_contact() const { return state.has_value(); }
};

/// Line features of the contour seen through the sensor footprint: the two
/// points where the centreline crosses the border band (10 px margin).
GroundTruth ground_truth_features(const SensorState& sensor, const WorldModel& world, const CameraIntrinsics& k);

namespace detail {

template <typename T, typename U>
Eigen::Matrix<T, 10, 1> rk4(const Eigen::Matrix<T, 10, 1>& x, const Eigen::Matrix<U, 6, 1>& u, double dt,
                            const CameraIntrinsics& k) {
  const Eigen::Matrix<T, 10, 1> k1 = dynamics<T, U>(x, u, k);
  const Eigen::Matrix<T, 10, 1> x2 = x + k1 * (0.5 * dt);
  const Eigen::Matrix<T, 10, 1> k2 = dynamics<T, U>(x2, u, k);
  const Eigen::Matrix<T, 10, 1> x3 = x + k2 * (0.5 * dt);
  const Eigen::Matrix<T, 10, 1> k3 = dynamics<T, U>(x3, u, k);
  const Eigen::Matrix<T, 10, 1> x4 = x + k3 * dt;
  const Eigen::Matrix<T, 10, 1> k4 = dynamics<T, U>(x4, u, k);
  return x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
}

}  // namespace detail

Vector10d rk4_step(const Vector10d& x, const Twist& u, double dt, const CameraIntrinsics& k);

/// Step-map Jacobians of rk4_step, by forward-mode differentiation.
struct StepJacobians {
  Vector10d next;
  Matrix10d a;                       // d x+ / d x
  Eigen::Matrix<double, 10, 6> b;    // d x+ / d u
};
StepJacobians rk4_step_jacobians(const Vector10d& x, const Vector6d& u, double dt, const CameraIntrinsics& k);

SensorState apply_twist(const SensorState& sensor, const Twist& u, double dt);
SensorState inject_disturbance(const SensorState& sensor, const Disturbance& d);

/// Applies each disturbance once, at the first tick whose time reaches it.
class DisturbanceSchedule {
 public:
  explicit DisturbanceSchedule(std::vector<Disturbance> items);
  SensorState apply_due(const SensorState& sensor, double now, double dt);
  int applied_count() const;

 private:
  std::vector<Disturbance> items_;
  std::vector<bool> applied_;
};

/// Synthetic tactile depth image: per-pixel camera-frame depth of the surface
/// plus a Gaussian ridge along the contour, plus Gaussian noise.
DepthImage render_depth_image(const SensorState& sensor, const WorldModel& world, const CameraIntrinsics& k,
                              double noise_sigma, std::uint64_t seed);

}  // namespace vbt
