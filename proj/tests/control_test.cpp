#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "vbt/control.hpp"
#include "vbt/error.hpp"
#include "vbt/plant.hpp"

using namespace vbt;

namespace {

const CameraIntrinsics kCam;

TactileState random_state(oracle::Rng& rng) {
  auto [a, b] = oracle::random_feature_pair(rng, kCam);
  const PointFeature p1 = PointFeature::from_vector(a), p2 = PointFeature::from_vector(b);
  return {p1, p2, contour_from_points(p1, p2, kCam)};
}

WorldModel straight_world() {
  ContourPath::Params p;
  p.origin = {-0.05, 0.0};
  p.length = 0.4;
  return {ContourPath(p), {}, 5e-4, 4e-4};
}

TactileState truth_at(const SensorState& s, const WorldModel& w) {
  const GroundTruth gt = ground_truth_features(s, w, kCam);
  REQUIRE(gt.in_contact());
  return *gt.state;
}

}  // namespace

TEST_CASE("defaults validate") {
  CHECK_NOTHROW(ControllerGains::defaults().validate());
  CHECK_NOTHROW(ContourReference::defaults().validate());
  const ContourReference ref = ContourReference::defaults();
  CHECK(ref.weight_w.trace() == doctest::Approx(1.0));
  CHECK(ref.xi_d.delta == 0.020);
  ControllerGains g = ControllerGains::defaults();
  g.horizon_steps = 1;
  CHECK_THROWS_AS(g.validate(), Error);
  g = ControllerGains::defaults();
  g.input_lower(2) = 1.0;
  try {
    g.validate();
    FAIL("expected InvalidBounds");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidBounds);
  }
}

TEST_CASE("contour_error") {
  const ContourFeatures d{0.0, 0.0, 0.0, 0.02};
  CHECK(contour_error(d, d).isZero(0.0));
  CHECK(contour_error(d, {1e-3, 0.0, 0.0, 0.02})(0) == -1e-3);
  const Eigen::Vector4d e = contour_error(d, {0.0, std::numbers::pi - 0.01, 0.0, 0.02});
  CHECK(std::abs(e(1)) <= std::numbers::pi);
  CHECK(e(1) == doctest::Approx(-std::numbers::pi + 0.01));
  const Eigen::Vector4d a = contour_error({0.0, 3.1, -3.1, 0.02}, {0.0, -3.1, 3.1, 0.02});
  CHECK(a(1) == doctest::Approx(6.2 - 2 * std::numbers::pi));
  CHECK(a(2) == doctest::Approx(-6.2 + 2 * std::numbers::pi));
}

TEST_CASE("forward velocity reference") {
  ContourReference ref = ContourReference::defaults();
  ref.weight_w = Eigen::Matrix4d::Identity();
  CHECK(forward_velocity_reference(Eigen::Vector4d::Zero(), ref) == 0.005);
  CHECK(forward_velocity_reference({1.0, 0.0, 0.0, 0.0}, ref) == doctest::Approx(0.0025));
  CHECK(forward_velocity_reference({1.0, 1.0, 1.0, 0.0}, ref) == doctest::Approx(0.00125));
  double prev = ref.v_x_max;
  for (double s = 0.1; s < 1e6; s *= 3.0) {
    const double v = forward_velocity_reference(Eigen::Vector4d::Constant(s), ref);
    CHECK(v > 0.0);
    CHECK(v < prev);
    prev = v;
  }
  const auto [u_d, xi_d] = mpc_reference(Eigen::Vector4d::Zero(), ref);
  CHECK(u_d.vector() == (Vector6d() << 0.005, 0, 0, 0, 0, 0).finished());
  CHECK(xi_d.delta == 0.020);
  CHECK(mpc_reference(Eigen::Vector4d::Constant(1e4), ref).first.linear.x() > 0.0);
  CHECK(mpc_reference({0.5, 0, 0, 0}, ref).first.linear.x() >= mpc_reference({1.0, 0, 0, 0}, ref).first.linear.x());
}

TEST_CASE("damped pseudo-inverse") {
  oracle::Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Matrix46d j = contour_interaction_matrix(random_state(rng).p1, random_state(rng).p2, kCam);
    const Eigen::MatrixXd p0 = damped_pinv(j, 0.0);
    const Eigen::MatrixXd ref = j.completeOrthogonalDecomposition().pseudoInverse();
    CHECK((p0 - ref).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + ref.cwiseAbs().maxCoeff()));
  }
  CHECK_THROWS_AS(damped_pinv(Eigen::MatrixXd::Zero(2, 3), 0.0), Error);
}

TEST_CASE("coupled servo") {
  oracle::Rng rng(11);
  const ControllerGains g = ControllerGains::defaults();
  for (int i = 0; i < 50; ++i) {
    const TactileState x = random_state(rng);
    const Matrix46d j = contour_interaction_matrix(x.p1, x.p2, kCam);
    SUBCASE("zero error leaves only null-space motion") {
      ContourReference ref = ContourReference::defaults();
      ref.xi_d = x.xi;
      const Vector6d u = coupled_servo(x, ref, g, kCam).vector();
      CHECK((j * u).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(u(0) != 0.0);
    }
    SUBCASE("without the forward term the solution realises the task") {
      ContourReference ref = ContourReference::defaults();
      ref.v_x_max = 1e-300;
      const Eigen::Vector4d e = contour_error(ref.xi_d, x.xi);
      const Vector6d u = coupled_servo(x, ref, g, kCam).vector();
      const Eigen::Vector4d task = g.servo_gain * e;
      CHECK((j * u - task).cwiseAbs().maxCoeff() < 1e-5 * (1.0 + task.cwiseAbs().maxCoeff()));
      // minimum norm: no component in the null space of J
      const Eigen::MatrixXd n = Eigen::FullPivLU<Eigen::MatrixXd>(j).kernel();
      CHECK((n.transpose() * u).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + u.norm()));
    }
    SUBCASE("pure function") {
      const ContourReference ref = ContourReference::defaults();
      CHECK(coupled_servo(x, ref, g, kCam).vector() == coupled_servo(x, ref, g, kCam).vector());
    }
  }
}

TEST_CASE("null-space projector leaves the task untouched") {
  oracle::Rng rng(12);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const TactileState x = random_state(rng);
    const Matrix46d j = contour_interaction_matrix(x.p1, x.p2, kCam);
    const Eigen::Matrix<double, 6, 4> p = damped_pinv(j, 1e-6);
    const Vector6d lambda = oracle::random_twist(rng);
    worst = std::max(worst, (j * (Matrix6d::Identity() - p * j) * lambda).cwiseAbs().maxCoeff());
  }
  MESSAGE("max |J (I - J+J) lambda|: " << worst);
  CHECK(worst < 1e-8);
}

TEST_CASE("decoupled servo") {
  const WorldModel w = straight_world();
  const ControllerGains g = ControllerGains::defaults();
  const ContourReference ref = ContourReference::defaults();

  SUBCASE("at the reference only the forward motion remains") {
    const TactileState x = truth_at({nominal_pose(w, {0.0, 0.0}, 0.0, 0.02), 0.0}, w);
    const Vector6d u = decoupled_servo(x, ref, g, kCam).vector();
    CHECK(u(0) == doctest::Approx(0.005));
    CHECK(u.tail<5>().cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("the recombined twist reproduces J_E u") {
    oracle::Rng rng(5);
    for (int i = 0; i < 20; ++i) {
      const TactileState x = random_state(rng);
      const Vector6d u = decoupled_servo(x, ref, g, kCam).vector();
      const Matrix46d j = contour_interaction_matrix(x.p1, x.p2, kCam);
      const DecoupledJacobians d = decouple(j);
      const Eigen::Vector4d xy(u(0), u(1), u(3), u(4));
      const Eigen::Vector2d z(u(2), u(5));
      CHECK((d.j_xy * xy + d.j_z * z - j * u).cwiseAbs().maxCoeff() < 1e-15);
    }
  }
  SUBCASE("too deep a press is relieved") {
    const TactileState x = truth_at({nominal_pose(w, {0.0, 0.0}, 0.0, 0.0195), 0.0}, w);
    const Vector6d u = decoupled_servo(x, ref, g, kCam).vector();
    const Matrix46d j = contour_interaction_matrix(x.p1, x.p2, kCam);
    CHECK(j.row(3).dot(u) > 0.0);
    CHECK((j.row(3) * u)(0) == doctest::Approx(g.k_z * 5e-4).epsilon(1e-6));
  }
}

TEST_CASE("closed loop on a straight edge from a level start") {
  const WorldModel w = straight_world();
  const ControllerGains g = ControllerGains::defaults();
  const ContourReference ref = ContourReference::defaults();
  for (const bool coupled : {false, true}) {
    CAPTURE(coupled);
    SensorState s{nominal_pose(w, {0.0, 0.0015}, 0.15, 0.0195), 0.0};
    for (int i = 0; i < 1500; ++i) {
      const TactileState x = truth_at(s, w);
      const Twist u = coupled ? coupled_servo(x, ref, g, kCam) : decoupled_servo(x, ref, g, kCam);
      const Vector6d clipped = u.vector().cwiseMax(g.input_lower).cwiseMin(g.input_upper);
      s = apply_twist(s, Twist::from_vector(clipped), 0.02);
    }
    const TactileState x = truth_at(s, w);
    CHECK(std::abs(x.xi.r) < 1e-6);
    CHECK(std::abs(x.xi.beta) < 1e-5);
    CHECK(std::abs(x.xi.delta - 0.02) < 1e-6);
  }
}
