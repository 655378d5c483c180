#pragma once

#include <Eigen/Core>
#include <utility>

#include "vbt/features.hpp"
#include "vbt/geometry.hpp"

namespace vbt {

struct ContourReference {
  ContourFeatures xi_d{0.0, 0.0, 0.0, 0.020};
  double v_x_max = 0.005;  // m/s
  Eigen::Matrix4d weight_w;

  /// W = Q / trace(Q) for the default Q.
  static ContourReference defaults();
  void validate() const;
};

struct ControllerGains {
  Eigen::Matrix4d servo_gain = Eigen::Vector4d::Constant(2.0).asDiagonal();  // 1/s
  double damping = 1e-6;
  double k_z = 2.0;      // 1/s, depth sub-gain of the decoupled law
  double k_alpha = 2.0;  // 1/s, pitch sub-gain of the decoupled law
  Eigen::Matrix4d q;
  Matrix6d r;
  int horizon_steps = 25;
  double dt = 0.02;
  Vector10d state_lower, state_upper;
  Vector6d input_lower, input_upper;

  /// Q = diag(1e6, 10, 10, 1e6), R = diag(10, 10, 10, 100, 100, 1), field-of-view and
  /// contact-band state bounds, |v| <= 0.02 m/s and |w| <= 0.5 rad/s.
  static ControllerGains defaults();
  void validate() const;
};

/// xi_d - xi with the angular components wrapped to (-pi, pi].
Eigen::Vector4d contour_error(const ContourFeatures& xi_d, const ContourFeatures& xi);

/// v_x_max / (1 + |xi_e|_W^2).
double forward_velocity_reference(const Eigen::Vector4d& xi_e, const ContourReference& ref);

/// J^T (J J^T + damping^2 I)^-1.
Eigen::MatrixXd damped_pinv(const Eigen::MatrixXd& j, double damping);

/// Classical law: J_E^+ (servo_gain xi_e) + (I - J_E^+ J_E) [v_xd 0 0 0 0 0].
Twist coupled_servo(const TactileState& state, const ContourReference& ref, const ControllerGains& gains,
                    const CameraIntrinsics& k = {});

/// Two-stage law: [v_z w_z] from the beta row, then [v_x v_y w_x w_y] from the r
/// row with the z motion compensated; depth and pitch regulated in the null spaces.
Twist decoupled_servo(const TactileState& state, const ContourReference& ref, const ControllerGains& gains,
                      const CameraIntrinsics& k = {});

/// Desired twist [v_xd 0 0 0 0 0] and desired features for one MPC solve.
std::pair<Twist, ContourFeatures> mpc_reference(const Eigen::Vector4d& xi_e, const ContourReference& ref);

}  // namespace vbt
