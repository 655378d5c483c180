#pragma once

#include <cstdint>

namespace vbt {

/// Largest relative error of each analytic Jacobian against central finite
/// differences over `count` random states. Entry-wise: |J - J_fd| / (|J_fd| + 1e-3 |row of J_fd|_inf).
struct JacobianCheck {
  double point = 0.0;       // J_P
  double contour = 0.0;     // J_E
  double transition = 0.0;  // d x+ / d x of the RK4 step (EKF F)
  int states = 0;
};
JacobianCheck check_jacobians(std::uint64_t seed, int count = 100);

/// Worst |du_condensed - du_sparse| / (1 + |du_sparse|_inf) over random
/// problems with 2 <= N <= 5, active penalty rows and non-zero defects.
double condensing_check(std::uint64_t seed, int count = 20);

/// Smallest ratio err(dt) / err(dt / 2) of the RK4 step map against a fine
/// reference, over `count` random states and twists. Draws whose trajectory
/// degenerates are replaced.
double rk4_order_ratio(std::uint64_t seed, int count = 20);

/// Largest projected-gradient KKT residual of solve_qp on random box QPs.
double qp_kkt_check(std::uint64_t seed, int count = 100, int size = 40);

}  // namespace vbt
