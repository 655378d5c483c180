#pragma once

#include <Eigen/Core>
#include <limits>
#include <vector>

#include "vbt/control.hpp"
#include "vbt/features.hpp"
#include "vbt/geometry.hpp"

namespace vbt {

struct MpcProblem {
  int horizon_steps = 25;  // N: states x_1..x_N, inputs u_1..u_{N-1}
  double dt = 0.02;
  Vector10d initial_state = Vector10d::Zero();
  ContourFeatures xi_d;
  Twist u_d;
  Eigen::Matrix4d q = Eigen::Matrix4d::Identity();
  Matrix6d r = Matrix6d::Identity();
  Eigen::Matrix4d q_terminal = Eigen::Matrix4d::Identity();
  Vector10d state_lower = Vector10d::Constant(-std::numeric_limits<double>::infinity());
  Vector10d state_upper = Vector10d::Constant(std::numeric_limits<double>::infinity());
  Vector6d input_lower = Vector6d::Constant(-1.0);
  Vector6d input_upper = Vector6d::Constant(1.0);
  double slack_penalty = 1e8;
  CameraIntrinsics camera;

  static MpcProblem from_gains(const ControllerGains& gains, const Vector10d& x0, const Twist& u_d,
                               const ContourFeatures& xi_d);
  void validate() const;
};

struct MpcIterate {
  std::vector<Vector6d> inputs;   // N - 1
  std::vector<Vector10d> states;  // N, states[0] is the initial state
};

struct MpcSolution : MpcIterate {
  double cost = 0.0;
  double kkt_residual = 0.0;
  int sqp_iterations = 0;
  double solve_time_ms = 0.0;
  double slack_max = 0.0;  // largest state-bound violation over the predicted states
  int active_bounds = 0;   // inputs on a bound plus violated state bounds
};

struct SolverOptions {
  int max_sqp_iterations = 3;
  double kkt_tolerance = 1e-6;
  double levenberg_shift = 1e-8;
  int max_shifts = 3;
};

/// Box-constrained QP min 0.5 z'Hz + g'z s.t. lower <= z <= upper.
struct QpResult {
  Eigen::VectorXd z;
  int iterations = 0;
  double kkt_residual = 0.0;  // infinity norm of the projected gradient
};

/// Primal active-set method. H must be symmetric positive definite.
/// Throws InfeasibleBox when lower > upper anywhere.
QpResult solve_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                  const Eigen::VectorXd& upper, const Eigen::VectorXd* z0 = nullptr);

/// |z - clamp(z - (Hz + g))|_inf.
double qp_kkt_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const Eigen::VectorXd& z);

/// Dynamics linearised along an iterate: x_{k+1} + dx_{k+1} = f(x_k, u_k) + A_k dx_k + B_k du_k.
struct Linearization {
  std::vector<Matrix10d> a;
  std::vector<Eigen::Matrix<double, 10, 6>> b;
  std::vector<Vector10d> defect;  // f(x_k, u_k) - x_{k+1}
};

/// Dense QP in the input steps du (states eliminated).
struct CondensedQp {
  Eigen::MatrixXd h;
  Eigen::VectorXd g;
  Eigen::VectorXd lower, upper;
  /// dx_k = s[k] du + c[k] for k = 0..N-1 (dx_0 = 0).
  std::vector<Eigen::MatrixXd> s;
  std::vector<Vector10d> c;
};

/// One soft state bound: component `index` of state `stage`, upper or lower side.
struct BoundRow {
  int stage = 0;
  int index = 0;
  bool upper = false;
  bool operator==(const BoundRow&) const = default;
};

/// The transcribed multiple-shooting program. Cost (no 1/2 factor):
///   sum_{k<N} |xi_d - xi_k|_Q^2 + |u_d - u_k|_R^2 + |xi_d - xi_N|_QN^2
///   + slack_penalty * sum_{k>1} |max(0, x_k - upper, lower - x_k)|^2
class Nlp {
 public:
  explicit Nlp(MpcProblem problem);

  const MpcProblem& problem() const { return p_; }
  int num_inputs() const { return p_.horizon_steps - 1; }

  MpcIterate rollout(const std::vector<Vector6d>& inputs) const;
  double cost(const MpcIterate& it) const;
  double defect_norm(const MpcIterate& it) const;
  double slack_max(const MpcIterate& it) const;
  Linearization linearize(const MpcIterate& it) const;
  /// Gauss-Newton condensed QP, with penalty rows for the listed state bounds.
  CondensedQp condense(const MpcIterate& it, const Linearization& lin, const std::vector<BoundRow>& active) const;
  /// Adds the penalty rows for `rows` to an already condensed QP.
  void add_penalty_rows(CondensedQp& qp, const MpcIterate& it, const std::vector<BoundRow>& rows) const;
  /// State bounds violated by the linear prediction x_k + s[k] du + c[k].
  std::vector<BoundRow> violated_rows(const MpcIterate& it, const CondensedQp& qp, const Eigen::VectorXd& du) const;
  /// Gradient of the cost w.r.t. the inputs along a dynamics-consistent iterate.
  Eigen::VectorXd gradient(const MpcIterate& it) const;

 private:
  MpcProblem p_;
};

Nlp transcribe(const MpcProblem& problem);

struct StepInfo {
  double kkt_residual = 0.0;  // at the iterate the step starts from
  int shifts = 0;             // Levenberg shifts applied
  int penalty_rounds = 0;
  Eigen::VectorXd du;
};

/// One Gauss-Newton SQP step: linearise, condense, solve the box QP, expand.
MpcIterate sqp_step(const Nlp& nlp, const MpcIterate& it, const SolverOptions& opt = {}, StepInfo* info = nullptr);

/// Previous solution shifted by one stage, the last stage duplicated.
MpcIterate shift_warm_start(const MpcIterate& previous, const Vector10d& x0);

/// Real-time iteration: up to max_sqp_iterations steps or until the KKT residual
/// drops below kkt_tolerance.
MpcSolution solve(const MpcProblem& problem, const MpcSolution* warm_start = nullptr, const SolverOptions& opt = {});

}  // namespace vbt
