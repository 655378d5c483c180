#include "vbt/diagnostics.hpp"

#include <cmath>
#include <random>

#include "vbt/control.hpp"
#include "vbt/error.hpp"
#include "vbt/estimator.hpp"
#include "vbt/nmpc.hpp"
#include "vbt/plant.hpp"

namespace vbt {

namespace {

struct Rng {
  explicit Rng(std::uint64_t seed) : gen(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  double normal(double sigma) { return std::normal_distribution<double>(0.0, sigma)(gen); }
  std::mt19937_64 gen;
};

const CameraIntrinsics kCam;

PointFeature random_point(Rng& rng) {
  return {rng.uniform(20.0, kCam.width - 20.0), rng.uniform(20.0, kCam.height - 20.0), rng.uniform(0.0185, 0.0215)};
}

std::pair<PointFeature, PointFeature> random_pair(Rng& rng) {
  for (;;) {
    const PointFeature a = random_point(rng), b = random_point(rng);
    if (std::hypot(a.u - b.u, a.v - b.v) > 60.0) return {a, b};
  }
}

Vector6d random_twist(Rng& rng) {
  Vector6d u;
  for (int i = 0; i < 3; ++i) u(i) = rng.uniform(-0.02, 0.02);
  for (int i = 3; i < 6; ++i) u(i) = rng.uniform(-0.5, 0.5);
  return u;
}

template <typename A, typename B>
double relative(const A& analytic, const B& fd) {
  double worst = 0.0;
  for (int i = 0; i < fd.rows(); ++i) {
    const double row = fd.row(i).cwiseAbs().maxCoeff();
    for (int j = 0; j < fd.cols(); ++j) {
      const double denom = std::abs(fd(i, j)) + 1e-3 * row;
      if (denom > 0.0) worst = std::max(worst, std::abs(analytic(i, j) - fd(i, j)) / denom);
    }
  }
  return worst;
}

/// Camera-frame point after the camera moves by exp(xi).
Eigen::Vector3d moved(const Eigen::Vector3d& p, const Vector6d& xi) { return se3_exp(xi).apply_inverse(p); }

}  // namespace

JacobianCheck check_jacobians(std::uint64_t seed, int count) {
  Rng rng(seed);
  JacobianCheck out;
  const double h = 1e-6;
  for (int n = 0; n < count; ++n) {
    const auto [a, b] = random_pair(rng);
    const Eigen::Vector3d pa = unproject(a, kCam), pb = unproject(b, kCam);

    Matrix36d jp_fd;
    Matrix46d je_fd;
    for (int j = 0; j < 6; ++j) {
      const Vector6d e = Vector6d::Unit(j) * h;
      jp_fd.col(j) = (project(moved(pa, e), kCam).vector() - project(moved(pa, -e), kCam).vector()) / (2.0 * h);
      const ContourFeatures plus = contour_from_points(project(moved(pa, e), kCam), project(moved(pb, e), kCam), kCam);
      const ContourFeatures minus =
          contour_from_points(project(moved(pa, -e), kCam), project(moved(pb, -e), kCam), kCam);
      Eigen::Vector4d d = plus.vector() - minus.vector();
      d(1) = wrap_angle(d(1));
      je_fd.col(j) = d / (2.0 * h);
    }
    out.point = std::max(out.point, relative(point_interaction_matrix(a, kCam), jp_fd));
    out.contour = std::max(out.contour, relative(contour_interaction_matrix(a, b, kCam), je_fd));

    const Vector10d x = TactileState{a, b, contour_from_points(a, b, kCam)}.vector();
    const Vector6d u = random_twist(rng);
    const Matrix10d f = rk4_step_jacobians(x, u, 0.02, kCam).a;
    out.transition = std::max(out.transition, relative(f, transition_jacobian_fd(x, u, 0.02, kCam)));
    ++out.states;
  }
  return out;
}

double condensing_check(std::uint64_t seed, int count) {
  Rng rng(seed);
  double worst = 0.0;
  for (int trial = 0; trial < count; ++trial) {
    const int n = 2 + trial % 4;
    const int m = n - 1;
    const auto [a, b] = random_pair(rng);
    MpcProblem p;
    p.horizon_steps = n;
    p.initial_state = TactileState{a, b, contour_from_points(a, b, kCam)}.vector();
    p.xi_d = {0.0, 0.0, 0.0, 0.02};
    p.u_d = Twist::from_vector(random_twist(rng));
    p.q = Eigen::Vector4d(1e6, 10, 10, 1e6).asDiagonal();
    p.q_terminal = p.q;
    p.r = (Vector6d() << 10, 10, 10, 100, 100, 1).finished().asDiagonal();
    p.input_lower = Vector6d::Constant(-10.0);
    p.input_upper = Vector6d::Constant(10.0);
    std::vector<Vector6d> inputs;
    for (int k = 0; k < m; ++k) inputs.push_back(random_twist(rng));
    p.state_upper(9) = Nlp(p).rollout(inputs).states.back()(9) - 1e-4;
    const Nlp nlp(p);
    MpcIterate it = nlp.rollout(inputs);
    for (int k = 1; k < n; ++k) it.states[k](0) += rng.normal(0.5);
    const Linearization lin = nlp.linearize(it);
    const CondensedQp base = nlp.condense(it, lin, {});
    const std::vector<BoundRow> rows = nlp.violated_rows(it, base, Eigen::VectorXd::Zero(6 * m));
    const CondensedQp qp = nlp.condense(it, lin, rows);
    const Eigen::VectorXd du = -qp.h.llt().solve(qp.g);

    // Sparse form: [dx_1 .. dx_{N-1}, du_0 .. du_{m-1}] with the dynamics as equalities.
    const int nx = 10 * (n - 1), nv = nx + 6 * m;
    auto xcol = [&](int k) { return 10 * (k - 1); };
    auto ucol = [&](int k) { return nx + 6 * k; };
    Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(nv, nv);
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(nv);
    for (int k = 1; k < n; ++k) {
      const Eigen::Matrix4d& w = k == n - 1 ? p.q_terminal : p.q;
      const Eigen::Vector4d e = contour_error(p.xi_d, ContourFeatures::from_vector(it.states[k].tail<4>()));
      hs.block(xcol(k) + 6, xcol(k) + 6, 4, 4) += 2.0 * w;
      gs.segment(xcol(k) + 6, 4) -= 2.0 * w * e;
    }
    for (int k = 0; k < m; ++k) {
      hs.block(ucol(k), ucol(k), 6, 6) += 2.0 * p.r;
      gs.segment(ucol(k), 6) -= 2.0 * p.r * (p.u_d.vector() - it.inputs[k]);
    }
    for (const BoundRow& row : rows) {
      const double sign = row.upper ? 1.0 : -1.0;
      const double v0 = row.upper ? it.states[row.stage](row.index) - p.state_upper(row.index)
                                  : p.state_lower(row.index) - it.states[row.stage](row.index);
      const int c = xcol(row.stage) + row.index;
      hs(c, c) += 2.0 * p.slack_penalty;
      gs(c) += 2.0 * p.slack_penalty * v0 * sign;
    }
    Eigen::MatrixXd aeq = Eigen::MatrixXd::Zero(nx, nv);
    Eigen::VectorXd beq(nx);
    for (int k = 0; k < m; ++k) {
      aeq.block(10 * k, xcol(k + 1), 10, 10) = Matrix10d::Identity();
      if (k > 0) aeq.block(10 * k, xcol(k), 10, 10) = -lin.a[k];
      aeq.block(10 * k, ucol(k), 10, 6) = -lin.b[k];
      beq.segment(10 * k, 10) = lin.defect[k];
    }
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nv + nx, nv + nx);
    kkt.topLeftCorner(nv, nv) = hs;
    kkt.topRightCorner(nv, nx) = aeq.transpose();
    kkt.bottomLeftCorner(nx, nv) = aeq;
    Eigen::VectorXd rhs(nv + nx);
    rhs << -gs, beq;
    const Eigen::VectorXd du_sparse = kkt.fullPivLu().solve(rhs).segment(nx, 6 * m);
    worst = std::max(worst, (du - du_sparse).cwiseAbs().maxCoeff() / (1.0 + du_sparse.cwiseAbs().maxCoeff()));
  }
  return worst;
}

double rk4_order_ratio(std::uint64_t seed, int count) {
  Rng rng(seed);
  const double horizon = 0.4, dt = 0.02;  // one control period, twists inside the input box
  auto integrate = [](Vector10d x, const Twist& u, double step, int steps) {
    for (int i = 0; i < steps; ++i) x = rk4_step(x, u, step, kCam);
    return x;
  };
  double worst = std::numeric_limits<double>::infinity();
  for (int n = 0; n < count;) {
    const auto [a, b] = random_pair(rng);
    const Vector10d x = TactileState{a, b, contour_from_points(a, b, kCam)}.vector();
    const Twist u = Twist::from_vector(random_twist(rng));
    const int steps = static_cast<int>(std::lround(horizon / dt));
    try {
      const Vector10d ref = integrate(x, u, dt / 64.0, steps * 64);
      const double coarse = (integrate(x, u, dt, steps) - ref).head<6>().cwiseAbs().maxCoeff();
      const double fine = (integrate(x, u, dt / 2.0, steps * 2) - ref).head<6>().cwiseAbs().maxCoeff();
      if (fine > 0.0) worst = std::min(worst, coarse / fine);
      ++n;
    } catch (const Error&) {
      // the segment collapsed or left the depth range; draw another state
    }
  }
  return worst;
}

double qp_kkt_check(std::uint64_t seed, int count, int size) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < count; ++t) {
    Eigen::MatrixXd a(size, size);
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j) a(i, j) = rng.normal(1.0);
    const Eigen::MatrixXd h = a * a.transpose() / size + 0.1 * Eigen::MatrixXd::Identity(size, size);
    Eigen::VectorXd g(size), lo(size), hi(size);
    for (int i = 0; i < size; ++i) {
      g(i) = rng.normal(3.0);
      const double x = rng.normal(1.0), y = rng.normal(1.0);
      lo(i) = std::min(x, y);
      hi(i) = std::max(x, y);
    }
    const QpResult r = solve_qp(h, g, lo, hi);
    worst = std::max(worst, qp_kkt_residual(h, g, lo, hi, r.z));
  }
  return worst;
}

}  // namespace vbt
