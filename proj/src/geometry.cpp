#include "vbt/geometry.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <string>

namespace vbt {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::OutOfContact: return "OutOfContact";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::ClockSkew: return "ClockSkew";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::InfeasibleBox: return "InfeasibleBox";
    case ErrorCode::LinearAlgebraFailure: return "LinearAlgebraFailure";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::ScenarioInvalid: return "ScenarioInvalid";
    case ErrorCode::MismatchedScenarios: return "MismatchedScenarios";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

void CameraIntrinsics::validate() const {
  if (!(focal_length > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "focal_length must be > 0");
  if (!(pixel_pitch > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "pixel_pitch must be > 0");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::ScenarioInvalid, "image size must be positive");
  if (!inside(cu, cv)) throw Error(ErrorCode::ScenarioInvalid, "principal point outside image");
}

double Pose::orthonormality_error() const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation.determinant() - 1.0));
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d s;
  s << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return s;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& rotation_vector) {
  const double theta = rotation_vector.norm();
  if (theta < 1e-12) return Eigen::Matrix3d::Identity() + skew(rotation_vector);
  return Eigen::AngleAxisd(theta, rotation_vector / theta).toRotationMatrix();
}

Pose se3_exp(const Vector6d& xi) {
  const Eigen::Vector3d v = xi.head<3>();
  const Eigen::Vector3d w = xi.tail<3>();
  const double theta = w.norm();
  const Eigen::Matrix3d w_hat = skew(w);
  Eigen::Matrix3d left_jacobian;
  if (theta < 1e-8) {
    left_jacobian = Eigen::Matrix3d::Identity() + 0.5 * w_hat + (1.0 / 6.0) * w_hat * w_hat;
  } else {
    const double t2 = theta * theta;
    left_jacobian = Eigen::Matrix3d::Identity() + ((1.0 - std::cos(theta)) / t2) * w_hat +
                    ((theta - std::sin(theta)) / (t2 * theta)) * w_hat * w_hat;
  }
  return {so3_exp(w), left_jacobian * v};
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& r) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1.0;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

PointFeature project(const Eigen::Vector3d& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "point z = " + std::to_string(p.z()));
  }
  const double scale = k.focal_length / (p.z() * k.pixel_pitch);
  return {k.cu + p.x() * scale, k.cv + p.y() * scale, p.z()};
}

Eigen::Vector3d unproject(const PointFeature& s, const CameraIntrinsics& k) {
  if (!(s.depth > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "feature depth = " + std::to_string(s.depth));
  }
  const double scale = s.depth * k.pixel_pitch / k.focal_length;
  return {(s.u - k.cu) * scale, (s.v - k.cv) * scale, s.depth};
}

Matrix36d point_interaction_matrix(const PointFeature& s, const CameraIntrinsics& k) {
  if (!(s.depth > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "feature depth = " + std::to_string(s.depth));
  }
  return point_jacobian<double>(s.u, s.v, s.depth, k);
}

}  // namespace vbt
