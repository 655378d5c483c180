#include "vbt/nmpc.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>

#include "vbt/error.hpp"
#include "vbt/plant.hpp"

namespace vbt {

namespace {

Eigen::VectorXd clamp(const Eigen::VectorXd& z, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return z.cwiseMax(lo).cwiseMin(hi);
}

Eigen::Vector4d xi_of(const Vector10d& x) { return x.tail<4>(); }

Eigen::Vector4d xi_error(const ContourFeatures& xi_d, const Vector10d& x) {
  return contour_error(xi_d, ContourFeatures::from_vector(xi_of(x)));
}

bool psd(const Eigen::MatrixXd& m) {
  return m.allFinite() && (m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()) &&
         Eigen::LDLT<Eigen::MatrixXd>(m).isPositive();
}

}  // namespace

MpcProblem MpcProblem::from_gains(const ControllerGains& gains, const Vector10d& x0, const Twist& u_d,
                                  const ContourFeatures& xi_d) {
  MpcProblem p;
  p.horizon_steps = gains.horizon_steps;
  p.dt = gains.dt;
  p.initial_state = x0;
  p.xi_d = xi_d;
  p.u_d = u_d;
  p.q = gains.q;
  p.r = gains.r;
  p.q_terminal = gains.q;
  p.state_lower = gains.state_lower;
  p.state_upper = gains.state_upper;
  p.input_lower = gains.input_lower;
  p.input_upper = gains.input_upper;
  return p;
}

void MpcProblem::validate() const {
  if (horizon_steps < 2) throw Error(ErrorCode::ScenarioInvalid, "mpc horizon_steps must be >= 2");
  if (!(dt > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "mpc dt must be > 0");
  if ((state_lower.array() > state_upper.array()).any() || (input_lower.array() > input_upper.array()).any() ||
      state_lower.hasNaN() || state_upper.hasNaN() || !input_lower.allFinite() || !input_upper.allFinite()) {
    throw Error(ErrorCode::InvalidBounds, "mpc bounds must satisfy lower <= upper (inputs finite)");
  }
  if (!psd(q) || !psd(q_terminal) || !psd(r)) throw Error(ErrorCode::ScenarioInvalid, "mpc weights must be PSD");
  if (!(slack_penalty >= 0.0)) throw Error(ErrorCode::ScenarioInvalid, "mpc slack_penalty must be >= 0");
  if (!initial_state.allFinite()) throw Error(ErrorCode::ScenarioInvalid, "mpc initial state not finite");
}

double qp_kkt_residual(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                       const Eigen::VectorXd& upper, const Eigen::VectorXd& z) {
  if (z.size() == 0) return 0.0;
  const Eigen::VectorXd grad = h * z + g;
  return (z - clamp(z - grad, lower, upper)).cwiseAbs().maxCoeff();
}

QpResult solve_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::VectorXd& lower,
                  const Eigen::VectorXd& upper, const Eigen::VectorXd* z0) {
  const Eigen::Index n = g.size();
  if (h.rows() != n || h.cols() != n || lower.size() != n || upper.size() != n) {
    throw Error(ErrorCode::InvalidBounds, "qp dimensions disagree");
  }
  if ((lower.array() > upper.array()).any()) throw Error(ErrorCode::InfeasibleBox, "qp lower > upper");

  QpResult res;
  res.z = clamp(z0 ? *z0 : Eigen::VectorXd::Zero(n), lower, upper);
  if (n == 0) return res;
  Eigen::VectorXd& z = res.z;
  const double tol = 1e-14 * (1.0 + g.cwiseAbs().maxCoeff() + h.cwiseAbs().maxCoeff());

  // Primal active set: -1 held at lower, +1 held at upper, 0 free.
  std::vector<int> held(n, 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z(i) <= lower(i)) held[i] = -1;
    else if (z(i) >= upper(i)) held[i] = 1;
  }
  const int max_iter = 50 + 10 * static_cast<int>(n);
  std::vector<Eigen::Index> free;
  free.reserve(n);
  for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
    free.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (held[i] == 0) free.push_back(i);
    }
    Eigen::VectorXd grad = h * z + g;
    const auto nf = static_cast<Eigen::Index>(free.size());
    if (nf > 0) {
      Eigen::MatrixXd hff(nf, nf);
      Eigen::VectorXd gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        gf(a) = grad(free[a]);
        for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = h(free[a], free[b]);
      }
      const Eigen::LLT<Eigen::MatrixXd> llt(hff);
      if (llt.info() != Eigen::Success) throw Error(ErrorCode::LinearAlgebraFailure, "qp free-set Hessian not PD");
      const Eigen::VectorXd step = -llt.solve(gf);

      // Move toward the free-subspace minimum, stopping at the first bound.
      double alpha = 1.0;
      Eigen::Index block = -1;
      int block_side = 0;
      for (Eigen::Index a = 0; a < nf; ++a) {
        const Eigen::Index i = free[a];
        if (step(a) > 0.0 && z(i) + step(a) > upper(i)) {
          const double t = (upper(i) - z(i)) / step(a);
          if (t < alpha) alpha = t, block = i, block_side = 1;
        } else if (step(a) < 0.0 && z(i) + step(a) < lower(i)) {
          const double t = (lower(i) - z(i)) / step(a);
          if (t < alpha) alpha = t, block = i, block_side = -1;
        }
      }
      for (Eigen::Index a = 0; a < nf; ++a) z(free[a]) += alpha * step(a);
      z = clamp(z, lower, upper);
      if (block >= 0) {
        z(block) = block_side > 0 ? upper(block) : lower(block);
        held[block] = block_side;
        continue;
      }
      grad = h * z + g;
    }

    // Subspace minimum reached: release the bound with the worst multiplier.
    Eigen::Index release = -1;
    double worst = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (held[i] == 0 || lower(i) == upper(i)) continue;
      const double wrong = held[i] < 0 ? -grad(i) : grad(i);
      if (wrong > worst) worst = wrong, release = i;
    }
    if (release < 0) {
      ++res.iterations;
      break;
    }
    held[release] = 0;
  }
  res.kkt_residual = qp_kkt_residual(h, g, lower, upper, res.z);
  return res;
}

Nlp::Nlp(MpcProblem problem) : p_(std::move(problem)) { p_.validate(); }

Nlp transcribe(const MpcProblem& problem) { return Nlp(problem); }

MpcIterate Nlp::rollout(const std::vector<Vector6d>& inputs) const {
  if (static_cast<int>(inputs.size()) != num_inputs()) throw Error(ErrorCode::ScenarioInvalid, "rollout input count");
  MpcIterate it;
  it.inputs = inputs;
  it.states.reserve(p_.horizon_steps);
  it.states.push_back(p_.initial_state);
  for (const Vector6d& u : inputs) {
    it.states.push_back(rk4_step(it.states.back(), Twist::from_vector(u), p_.dt, p_.camera));
  }
  return it;
}

double Nlp::cost(const MpcIterate& it) const {
  const int n = p_.horizon_steps;
  const Vector6d u_d = p_.u_d.vector();
  double c = 0.0;
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector4d e = xi_error(p_.xi_d, it.states[k]);
    c += e.dot((k == n - 1 ? p_.q_terminal : p_.q) * e);
    if (k < n - 1) {
      const Vector6d ue = u_d - it.inputs[k];
      c += ue.dot(p_.r * ue);
    }
    if (k > 0) {
      const Vector10d over = (it.states[k] - p_.state_upper).cwiseMax(0.0);
      const Vector10d under = (p_.state_lower - it.states[k]).cwiseMax(0.0);
      c += p_.slack_penalty * (over.squaredNorm() + under.squaredNorm());
    }
  }
  return c;
}

double Nlp::defect_norm(const MpcIterate& it) const {
  double worst = 0.0;
  for (int k = 0; k < num_inputs(); ++k) {
    const Vector10d f = rk4_step(it.states[k], Twist::from_vector(it.inputs[k]), p_.dt, p_.camera);
    worst = std::max(worst, (f - it.states[k + 1]).cwiseAbs().maxCoeff());
  }
  return worst;
}

double Nlp::slack_max(const MpcIterate& it) const {
  double worst = 0.0;
  for (int k = 1; k < p_.horizon_steps; ++k) {
    worst = std::max(worst, (it.states[k] - p_.state_upper).maxCoeff());
    worst = std::max(worst, (p_.state_lower - it.states[k]).maxCoeff());
  }
  return worst;
}

Linearization Nlp::linearize(const MpcIterate& it) const {
  Linearization lin;
  const int m = num_inputs();
  lin.a.resize(m);
  lin.b.resize(m);
  lin.defect.resize(m);
  for (int k = 0; k < m; ++k) {
    const StepJacobians j = rk4_step_jacobians(it.states[k], it.inputs[k], p_.dt, p_.camera);
    lin.a[k] = j.a;
    lin.b[k] = j.b;
    lin.defect[k] = j.next - it.states[k + 1];
  }
  return lin;
}

CondensedQp Nlp::condense(const MpcIterate& it, const Linearization& lin, const std::vector<BoundRow>& active) const {
  const int n = p_.horizon_steps;
  const int m = num_inputs();
  const Eigen::Index nu = 6 * m;
  CondensedQp qp;
  qp.h = Eigen::MatrixXd::Zero(nu, nu);
  qp.g = Eigen::VectorXd::Zero(nu);
  qp.lower.resize(nu);
  qp.upper.resize(nu);
  qp.s.assign(n, Eigen::MatrixXd::Zero(10, nu));
  qp.c.assign(n, Vector10d::Zero());
  for (int k = 0; k < m; ++k) {
    qp.s[k + 1] = lin.a[k] * qp.s[k];
    qp.s[k + 1].middleCols(6 * k, 6) += lin.b[k];
    qp.c[k + 1] = lin.a[k] * qp.c[k] + lin.defect[k];
  }

  // xi residual e_k - S_xi du with e_k the error at the linear prediction.
  const Vector6d u_d = p_.u_d.vector();
  for (int k = 1; k < n; ++k) {
    const Eigen::Matrix4d& w = k == n - 1 ? p_.q_terminal : p_.q;
    const Eigen::Vector4d e = xi_error(p_.xi_d, it.states[k]) - qp.c[k].tail<4>();
    const auto sk = qp.s[k].bottomRows<4>().leftCols(6 * k);
    const Eigen::MatrixXd wsk = w * sk;
    qp.h.topLeftCorner(6 * k, 6 * k).noalias() += 2.0 * sk.transpose() * wsk;
    qp.g.head(6 * k).noalias() -= 2.0 * wsk.transpose() * e;
  }
  for (int k = 0; k < m; ++k) {
    qp.h.block(6 * k, 6 * k, 6, 6) += 2.0 * p_.r;
    qp.g.segment(6 * k, 6) -= 2.0 * p_.r * (u_d - it.inputs[k]);
    qp.lower.segment(6 * k, 6) = p_.input_lower - it.inputs[k];
    qp.upper.segment(6 * k, 6) = p_.input_upper - it.inputs[k];
  }
  add_penalty_rows(qp, it, active);
  return qp;
}

void Nlp::add_penalty_rows(CondensedQp& qp, const MpcIterate& it, const std::vector<BoundRow>& rows) const {
  const double rho = p_.slack_penalty;
  for (const BoundRow& row : rows) {
    const int k = row.stage, i = row.index;
    const Eigen::Index w = 6 * k;
    const auto s = qp.s[k].row(i).head(w);
    // violation v = v0 + sign * s du
    const double x = it.states[k](i) + qp.c[k](i);
    const double v0 = row.upper ? x - p_.state_upper(i) : p_.state_lower(i) - x;
    const double sign = row.upper ? 1.0 : -1.0;
    qp.h.topLeftCorner(w, w).noalias() += 2.0 * rho * s.transpose() * s;
    qp.g.head(w) += 2.0 * rho * v0 * sign * s.transpose();
  }
}

std::vector<BoundRow> Nlp::violated_rows(const MpcIterate& it, const CondensedQp& qp, const Eigen::VectorXd& du) const {
  std::vector<BoundRow> rows;
  for (int k = 1; k < p_.horizon_steps; ++k) {
    for (int i = 0; i < 10; ++i) {
      const bool has_upper = std::isfinite(p_.state_upper(i)), has_lower = std::isfinite(p_.state_lower(i));
      if (!has_upper && !has_lower) continue;
      const double x = it.states[k](i) + qp.c[k](i) + qp.s[k].row(i).head(6 * k).dot(du.head(6 * k));
      if (has_upper && x > p_.state_upper(i)) rows.push_back({k, i, true});
      if (has_lower && x < p_.state_lower(i)) rows.push_back({k, i, false});
    }
  }
  return rows;
}

Eigen::VectorXd Nlp::gradient(const MpcIterate& it) const {
  const Linearization lin = linearize(it);
  CondensedQp qp = condense(it, lin, {});
  add_penalty_rows(qp, it, violated_rows(it, qp, Eigen::VectorXd::Zero(qp.g.size())));
  return qp.g;
}

MpcIterate sqp_step(const Nlp& nlp, const MpcIterate& it, const SolverOptions& opt, StepInfo* info) {
  const Linearization lin = nlp.linearize(it);
  const CondensedQp base = nlp.condense(it, lin, {});
  const Eigen::Index nu = base.g.size();

  std::vector<BoundRow> active = nlp.violated_rows(it, base, Eigen::VectorXd::Zero(nu));
  Eigen::VectorXd du = Eigen::VectorXd::Zero(nu);
  StepInfo local;
  {
    CondensedQp qp0 = base;
    nlp.add_penalty_rows(qp0, it, active);
    double defect = 0.0;
    for (const Vector10d& d : lin.defect) defect = std::max(defect, d.cwiseAbs().maxCoeff());
    local.kkt_residual = std::max(qp_kkt_residual(qp0.h, qp0.g, qp0.lower, qp0.upper, du), defect);
  }

  CondensedQp qp;
  for (int round = 0; round < 20; ++round) {
    qp = base;
    nlp.add_penalty_rows(qp, it, active);
    double shift = opt.levenberg_shift;
    int shifts = 0;
    while (Eigen::LLT<Eigen::MatrixXd>(qp.h).info() != Eigen::Success) {
      if (shifts == opt.max_shifts) throw Error(ErrorCode::LinearAlgebraFailure, "condensed Hessian not PD");
      qp.h.diagonal().array() += shift;
      shift *= 10.0;
      ++shifts;
    }
    local.shifts = std::max(local.shifts, shifts);
    du = solve_qp(qp.h, qp.g, qp.lower, qp.upper, &du).z;
    local.penalty_rounds = round + 1;
    std::vector<BoundRow> next = nlp.violated_rows(it, base, du);
    if (next == active) break;
    active = std::move(next);
  }

  MpcIterate out = it;
  for (int k = 0; k < nlp.num_inputs(); ++k) out.inputs[k] += du.segment(6 * k, 6);
  for (int k = 1; k < nlp.problem().horizon_steps; ++k) {
    out.states[k] += qp.s[k] * du + qp.c[k];
  }
  local.du = du;
  if (info) *info = std::move(local);
  return out;
}

MpcIterate shift_warm_start(const MpcIterate& previous, const Vector10d& x0) {
  MpcIterate out = previous;
  if (out.inputs.empty()) return out;
  std::rotate(out.inputs.begin(), out.inputs.begin() + 1, out.inputs.end());
  if (out.inputs.size() >= 2) out.inputs.back() = out.inputs[out.inputs.size() - 2];
  std::rotate(out.states.begin(), out.states.begin() + 1, out.states.end());
  out.states.back() = out.states[out.states.size() - 2];
  out.states.front() = x0;
  return out;
}

MpcSolution solve(const MpcProblem& problem, const MpcSolution* warm_start, const SolverOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Nlp nlp(problem);
  const int m = nlp.num_inputs();

  MpcIterate it;
  if (warm_start && static_cast<int>(warm_start->inputs.size()) == m) {
    it = shift_warm_start(*warm_start, problem.initial_state);
    for (Vector6d& u : it.inputs) u = u.cwiseMax(problem.input_lower).cwiseMin(problem.input_upper);
  } else {
    const Vector6d u = problem.u_d.vector().cwiseMax(problem.input_lower).cwiseMin(problem.input_upper);
    it = nlp.rollout(std::vector<Vector6d>(m, u));
  }

  MpcSolution sol;
  StepInfo info;
  for (int i = 0; i < opt.max_sqp_iterations; ++i) {
    MpcIterate next = sqp_step(nlp, it, opt, &info);
    if (!next.inputs.empty() && !(next.states.back().allFinite())) {
      throw Error(ErrorCode::SolverFailure, "sqp iterate diverged");
    }
    it = std::move(next);
    ++sol.sqp_iterations;
    if (info.kkt_residual <= opt.kkt_tolerance) break;
  }
  // Inputs are kept in the box exactly.
  for (Vector6d& u : it.inputs) u = u.cwiseMax(problem.input_lower).cwiseMin(problem.input_upper);

  sol.inputs = std::move(it.inputs);
  sol.states = std::move(it.states);
  sol.kkt_residual = info.kkt_residual;
  sol.cost = nlp.cost(sol);
  sol.slack_max = nlp.slack_max(sol);
  for (const Vector6d& u : sol.inputs) {
    sol.active_bounds += static_cast<int>(((u.array() <= problem.input_lower.array()) ||
                                           (u.array() >= problem.input_upper.array())).count());
  }
  for (int k = 1; k < problem.horizon_steps; ++k) {
    sol.active_bounds += static_cast<int>(((sol.states[k].array() > problem.state_upper.array()) ||
                                           (sol.states[k].array() < problem.state_lower.array())).count());
  }
  sol.solve_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

}  // namespace vbt
