#include "vbt/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "vbt/error.hpp"
#include "vbt/plant.hpp"

namespace vbt {

namespace {

void symmetrize_and_check(Matrix10d& p) {
  p = 0.5 * (p + p.transpose()).eval();
  if (!p.allFinite() || p.llt().info() != Eigen::Success) {
    throw Error(ErrorCode::LinearAlgebraFailure, "EKF covariance lost positive definiteness");
  }
}

}  // namespace

EkfConfig EkfConfig::defaults() {
  EkfConfig c;
  Vector10d q;
  q << 1e-4, 1e-4, 1e-8, 1e-4, 1e-4, 1e-8, 1e-8, 1e-8, 1e-8, 1e-8;
  c.process_noise = q.asDiagonal();
  Eigen::Matrix<double, 6, 1> r;
  r << 1.0, 1.0, 1e-8, 1.0, 1.0, 1e-8;
  c.measurement_noise = r.asDiagonal();
  return c;
}

void EkfConfig::validate() const {
  if (!(predict_rate > 0.0) || !(measure_rate > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "ekf rates must be > 0");
  if (predict_rate < measure_rate) throw Error(ErrorCode::ScenarioInvalid, "ekf predict_rate must be >= measure_rate");
  if (!process_noise.allFinite() || !measurement_noise.allFinite()) {
    throw Error(ErrorCode::ScenarioInvalid, "ekf noise matrices must be finite");
  }
  Eigen::SelfAdjointEigenSolver<Matrix10d> q(0.5 * (process_noise + process_noise.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix6d> r(0.5 * (measurement_noise + measurement_noise.transpose()));
  if (q.eigenvalues().minCoeff() < 0.0) throw Error(ErrorCode::ScenarioInvalid, "ekf process_noise must be PSD");
  if (!(r.eigenvalues().minCoeff() > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "ekf measurement_noise must be PD");
}

EkfState predict(const EkfState& state, const Twist& u, double dt, const CameraIntrinsics& k, const EkfConfig& cfg) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "predict needs dt > 0");
  const StepJacobians j = rk4_step_jacobians(state.mean, u.vector(), dt, k);
  EkfState out;
  out.mean = j.next;
  out.covariance = j.a * state.covariance * j.a.transpose() + cfg.process_noise * dt;
  symmetrize_and_check(out.covariance);
  return out;
}

Matrix10d transition_jacobian_fd(const Vector10d& x, const Vector6d& u, double dt, const CameraIntrinsics& k) {
  Matrix10d f;
  const Twist tw = Twist::from_vector(u);
  for (int c = 0; c < 10; ++c) {
    const double h = 1e-6 * std::max(1.0, std::abs(x(c)));
    Vector10d xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    f.col(c) = (rk4_step(xp, tw, dt, k) - rk4_step(xm, tw, dt, k)) / (2.0 * h);
  }
  return f;
}

EkfState update(const EkfState& state, const PointFeature& z1, const PointFeature& z2, const CameraIntrinsics& k,
                const EkfConfig& cfg, UpdateInfo* info) {
  Eigen::Matrix<double, 6, 1> direct, swapped;
  direct << z1.vector(), z2.vector();
  swapped << z2.vector(), z1.vector();
  if (!direct.allFinite()) throw Error(ErrorCode::ScenarioInvalid, "measurement is not finite");

  const Matrix6d s = state.covariance.topLeftCorner<6, 6>() + cfg.measurement_noise;
  const Eigen::LLT<Matrix6d> llt(s);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::LinearAlgebraFailure, "innovation covariance not PD");
  const Eigen::Matrix<double, 6, 1> y_direct = direct - state.mean.head<6>();
  const Eigen::Matrix<double, 6, 1> y_swapped = swapped - state.mean.head<6>();
  const double nis_direct = y_direct.dot(llt.solve(y_direct));
  const double nis_swapped = y_swapped.dot(llt.solve(y_swapped));
  const bool use_swap = nis_swapped < nis_direct;
  const Eigen::Matrix<double, 6, 1> y = use_swap ? y_swapped : y_direct;

  // K = P H^T S^-1 with H = [I 0]
  const Eigen::Matrix<double, 10, 6> pht = state.covariance.leftCols<6>();
  const Eigen::Matrix<double, 10, 6> gain = llt.solve(pht.transpose()).transpose();
  Matrix10d ikh = Matrix10d::Identity();
  ikh.leftCols<6>() -= gain;

  EkfState out;
  out.mean = state.mean + gain * y;
  out.covariance = ikh * state.covariance * ikh.transpose() + gain * cfg.measurement_noise * gain.transpose();
  symmetrize_and_check(out.covariance);
  const TactileState synced = synchronize(TactileState::from_vector(out.mean), k);
  out.mean = synced.vector();
  if (info) {
    info->innovation = y;
    info->nis = use_swap ? nis_swapped : nis_direct;
    info->swapped = use_swap;
  }
  return out;
}

EkfState reanchor(const EkfState& state, const CameraIntrinsics& k, const EkfConfig& cfg) {
  EkfState out = state;
  out.mean = anchor_on_border(TactileState::from_vector(state.mean), k, cfg.border_margin).vector();
  return out;
}

long nearest_tick(double time, double rate) { return std::lround(time * rate); }

std::vector<EkfState> run_filter(const std::vector<TimedMeasurement>& measurements,
                                 const std::vector<TimedTwist>& twists, const EkfState& initial,
                                 const CameraIntrinsics& k, const EkfConfig& cfg, std::vector<UpdateInfo>* updates) {
  cfg.validate();
  for (std::size_t i = 1; i < twists.size(); ++i) {
    if (!(twists[i].time > twists[i - 1].time)) throw Error(ErrorCode::ClockSkew, "twist timestamps regress");
  }
  for (std::size_t i = 1; i < measurements.size(); ++i) {
    if (measurements[i].time < measurements[i - 1].time) throw Error(ErrorCode::ClockSkew, "measurement timestamps regress");
  }
  std::vector<EkfState> out;
  if (twists.empty()) return out;
  out.reserve(twists.size());
  const double t0 = twists.front().time;
  std::size_t next = 0;
  EkfState state = initial;
  for (std::size_t i = 0; i < twists.size(); ++i) {
    if (i > 0) state = predict(state, twists[i - 1].twist, twists[i].time - twists[i - 1].time, k, cfg);
    while (next < measurements.size() && nearest_tick(measurements[next].time - t0, cfg.predict_rate) <= static_cast<long>(i)) {
      UpdateInfo info;
      state = update(reanchor(state, k, cfg), measurements[next].p1, measurements[next].p2, k, cfg, &info);
      if (updates) updates->push_back(info);
      ++next;
    }
    out.push_back(state);
  }
  return out;
}

}  // namespace vbt
