#include "vbt/control.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "vbt/error.hpp"
#include "vbt/plant.hpp"

namespace vbt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_psd(const Eigen::MatrixXd& m) {
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
    return false;
  }
  return Eigen::LDLT<Eigen::MatrixXd>(m).isPositive();
}

double sign_of(double x) { return x < 0.0 ? -1.0 : 1.0; }

}  // namespace

ContourReference ContourReference::defaults() {
  ContourReference ref;
  const Eigen::Matrix4d q = ControllerGains::defaults().q;
  ref.weight_w = q / q.trace();
  return ref;
}

void ContourReference::validate() const {
  if (!(v_x_max > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "reference.v_x_max must be > 0");
  if (!is_psd(weight_w)) throw Error(ErrorCode::ScenarioInvalid, "reference.weight_w must be symmetric PSD");
}

ControllerGains ControllerGains::defaults() {
  ControllerGains g;
  g.q = Eigen::Vector4d(1e6, 10.0, 10.0, 1e6).asDiagonal();
  Vector6d r;
  r << 10.0, 10.0, 10.0, 100.0, 100.0, 1.0;
  g.r = r.asDiagonal();
  const CameraIntrinsics k;
  const double m = kBorderMarginPx;
  g.state_lower << m, m, 0.0, m, m, 0.0, -kInf, -kInf, -kInf, kDeltaMin;
  g.state_upper << k.width - m, k.height - m, kInf, k.width - m, k.height - m, kInf, kInf, kInf, kInf, kDeltaMax;
  g.input_lower << -0.02, -0.02, -0.02, -0.5, -0.5, -0.5;
  g.input_upper = -g.input_lower;
  return g;
}

void ControllerGains::validate() const {
  const Eigen::Vector4d d = servo_gain.diagonal();
  if (!(d.minCoeff() > 0.0) || (servo_gain - Eigen::Matrix4d(d.asDiagonal())).cwiseAbs().maxCoeff() != 0.0) {
    throw Error(ErrorCode::ScenarioInvalid, "gains.servo_gain must be positive diagonal");
  }
  if (!(damping >= 0.0)) throw Error(ErrorCode::ScenarioInvalid, "gains.damping must be >= 0");
  if (!(k_z >= 0.0) || !(k_alpha >= 0.0)) throw Error(ErrorCode::ScenarioInvalid, "gains.k_z/k_alpha must be >= 0");
  if (!is_psd(q)) throw Error(ErrorCode::ScenarioInvalid, "gains.q must be symmetric PSD");
  if (!is_psd(r) || Eigen::LLT<Matrix6d>(r).info() != Eigen::Success) {
    throw Error(ErrorCode::ScenarioInvalid, "gains.r must be symmetric PD");
  }
  if (horizon_steps < 2) throw Error(ErrorCode::ScenarioInvalid, "gains.horizon_steps must be >= 2");
  if (!(dt > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "gains.dt must be > 0");
  if ((state_lower.array() > state_upper.array()).any() || (input_lower.array() > input_upper.array()).any()) {
    throw Error(ErrorCode::InvalidBounds, "gains bounds must satisfy lower <= upper");
  }
  if (!input_lower.allFinite() || !input_upper.allFinite()) {
    throw Error(ErrorCode::InvalidBounds, "gains input bounds must be finite");
  }
}

Eigen::Vector4d contour_error(const ContourFeatures& xi_d, const ContourFeatures& xi) {
  return {xi_d.r - xi.r, wrap_angle(xi_d.beta - xi.beta), wrap_angle(xi_d.alpha - xi.alpha), xi_d.delta - xi.delta};
}

double forward_velocity_reference(const Eigen::Vector4d& xi_e, const ContourReference& ref) {
  return ref.v_x_max / (1.0 + xi_e.dot(ref.weight_w * xi_e));
}

Eigen::MatrixXd damped_pinv(const Eigen::MatrixXd& j, double damping) {
  const Eigen::MatrixXd jjt = j * j.transpose() + damping * damping * Eigen::MatrixXd::Identity(j.rows(), j.rows());
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(jjt);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) {
    throw Error(ErrorCode::LinearAlgebraFailure, "pseudo-inverse of a rank-deficient Jacobian");
  }
  return ldlt.solve(j).transpose();
}

Twist coupled_servo(const TactileState& state, const ContourReference& ref, const ControllerGains& gains,
                    const CameraIntrinsics& k) {
  const Matrix46d j = contour_interaction_matrix(state.p1, state.p2, k);
  const Eigen::Vector4d xi_e = contour_error(ref.xi_d, state.xi);
  Vector6d lambda = Vector6d::Zero();
  lambda(0) = forward_velocity_reference(xi_e, ref);
  const Eigen::Matrix<double, 6, 4> pinv = damped_pinv(j, gains.damping);
  const Vector6d u = pinv * (gains.servo_gain * xi_e) + (Matrix6d::Identity() - pinv * j) * lambda;
  return Twist::from_vector(u);
}

Twist decoupled_servo(const TactileState& state, const ContourReference& ref, const ControllerGains& gains,
                      const CameraIntrinsics& k) {
  const Matrix46d j = contour_interaction_matrix(state.p1, state.p2, k);
  const DecoupledJacobians d = decouple(j);
  const Eigen::Vector4d xi_e = contour_error(ref.xi_d, state.xi);

  // Null-space targets take the sign of the matching interaction entry so that
  // they drive delta and alpha toward the reference.
  const Eigen::Vector2d lambda_z(gains.k_z * xi_e(3) * sign_of(j(3, 2)), 0.0);
  const Eigen::Matrix<double, 1, 2> j_z_beta = d.j_z.row(1);
  const Eigen::Matrix<double, 2, 1> pz = damped_pinv(j_z_beta, gains.damping);
  const Eigen::Vector2d twist_z =
      pz * (gains.servo_gain(1, 1) * xi_e(1)) + (Eigen::Matrix2d::Identity() - pz * j_z_beta) * lambda_z;

  const Eigen::Vector4d lambda_xy(forward_velocity_reference(xi_e, ref), 0.0, 0.0,
                                  gains.k_alpha * xi_e(2) * sign_of(j(2, 4)));
  const Eigen::Matrix<double, 1, 4> j_xy_r = d.j_xy.row(0);
  const Eigen::Matrix<double, 4, 1> pxy = damped_pinv(j_xy_r, gains.damping);
  const double r_task = gains.servo_gain(0, 0) * xi_e(0) - d.j_z.row(0).dot(twist_z);
  const Eigen::Vector4d twist_xy = pxy * r_task + (Eigen::Matrix4d::Identity() - pxy * j_xy_r) * lambda_xy;

  return Twist::from_vector(interleave(twist_xy, twist_z));
}

std::pair<Twist, ContourFeatures> mpc_reference(const Eigen::Vector4d& xi_e, const ContourReference& ref) {
  Twist u_d;
  u_d.linear.x() = forward_velocity_reference(xi_e, ref);
  return {u_d, ref.xi_d};
}

}  // namespace vbt
