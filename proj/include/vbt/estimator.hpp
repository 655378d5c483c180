#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>
#include <vector>

#include "vbt/features.hpp"
#include "vbt/geometry.hpp"

namespace vbt {

struct EkfState {
  Vector10d mean = Vector10d::Zero();
  Matrix10d covariance = Matrix10d::Identity();
};

struct EkfConfig {
  Matrix10d process_noise;      // per second
  Matrix6d measurement_noise;   // [u1 v1 Z1 u2 v2 Z2]
  double predict_rate = 50.0;   // Hz
  double measure_rate = 15.0;   // Hz
  double border_margin = 10.0;  // px, measurement convention for the endpoints

  /// Pixel terms 1e-4 px^2/s, metric terms 1e-8; measurement 1 px^2 and 1e-8 m^2.
  static EkfConfig defaults();
  void validate() const;
};

EkfState predict(const EkfState& state, const Twist& u, double dt, const CameraIntrinsics& k, const EkfConfig& cfg);

/// Central-difference transition Jacobian of the step map (cross-check for the forward-mode one).
Matrix10d transition_jacobian_fd(const Vector10d& x, const Vector6d& u, double dt, const CameraIntrinsics& k);

struct UpdateInfo {
  Eigen::Matrix<double, 6, 1> innovation = Eigen::Matrix<double, 6, 1>::Zero();
  double nis = 0.0;  // normalised innovation squared
  bool swapped = false;  // measurement endpoints were matched in reverse order
};

/// Point-block measurement update (Joseph form). The endpoints are matched to
/// the state in whichever order gives the smaller innovation; xi is re-derived
/// from the updated points.
EkfState update(const EkfState& state, const PointFeature& z1, const PointFeature& z2, const CameraIntrinsics& k,
                const EkfConfig& cfg, UpdateInfo* info = nullptr);

/// Slides the mean's endpoints to the border band so they follow the same
/// convention as the measurements. The covariance is kept.
EkfState reanchor(const EkfState& state, const CameraIntrinsics& k, const EkfConfig& cfg);

struct TimedMeasurement {
  double time = 0.0;
  PointFeature p1, p2;
};

struct TimedTwist {
  double time = 0.0;
  Twist twist;
};

/// Multi-rate filter: one predict per control tick with the twist active over
/// the previous interval, an update at the tick nearest each measurement.
/// Returns one state per twist sample (tick 0 included). Throws ClockSkew
/// when either stream's timestamps regress.
std::vector<EkfState> run_filter(const std::vector<TimedMeasurement>& measurements,
                                 const std::vector<TimedTwist>& twists, const EkfState& initial,
                                 const CameraIntrinsics& k, const EkfConfig& cfg,
                                 std::vector<UpdateInfo>* updates = nullptr);

/// Tick index nearest to a timestamp at the given rate.
long nearest_tick(double time, double rate);

}  // namespace vbt
