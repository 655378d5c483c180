#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "vbt/plant.hpp"

using namespace vbt;

namespace {

const CameraIntrinsics kCam;

WorldModel straight_world(double heading = 0.0) {
  ContourPath::Params p;
  p.kind = ContourKind::Line;
  p.origin = {-0.15 * std::cos(heading), -0.15 * std::sin(heading)};
  p.heading = heading;
  p.length = 0.30;
  return WorldModel{ContourPath(p), {}, 5e-4, 4e-4};
}

SensorState centred(const WorldModel& w, double depth = 0.02) { return {nominal_pose(w, {0, 0}, 0.0, depth), 0.0}; }

SensorState shifted(const SensorState& s, const Eigen::Vector3d& camera_offset) {
  SensorState out = s;
  out.pose.translation += s.pose.rotation * camera_offset;
  return out;
}

}  // namespace

TEST_CASE("contour path construction") {
  ContourPath::Params p;
  p.kind = ContourKind::Hexagon;
  p.circumradius = 0.04;
  const ContourPath hex(p);
  CHECK(hex.total_length() == doctest::Approx(0.24).epsilon(1e-12));
  CHECK((hex.vertices().front() - hex.vertices().back()).norm() < 1e-15);
  CHECK(!hex.smooth());
  // every corner sits on the circumcircle
  const Eigen::Vector2d center(0.0, 0.04 * std::sqrt(3.0) / 2.0);
  for (std::size_t i = 1; i + 1 < hex.vertices().size(); ++i) {
    CHECK((hex.vertices()[i] - center).norm() == doctest::Approx(0.04).epsilon(1e-12));
  }

  p.kind = ContourKind::Circle;
  p.radius = 0.03;
  const ContourPath circle(p);
  CHECK(circle.total_length() == doctest::Approx(2 * std::numbers::pi * 0.03).epsilon(1e-5));

  p.kind = ContourKind::SShape;
  p.length = 0.24;
  const ContourPath s(p);
  CHECK(s.smooth());
  CHECK(s.vertices().back().x() == doctest::Approx(0.24));
  CHECK(std::abs(s.vertices().back().y()) < 1e-12);
  const double s_mid = s.closest_arclength({0.03, 0.02}, 0.0, 1.0);
  CHECK((s.point_at(s_mid) - Eigen::Vector2d(0.03, 0.02)).norm() < 1e-6);

  p.kind = ContourKind::Polyline;
  p.vertices = {{0, 0}};
  CHECK_THROWS_AS(ContourPath{p}, Error);
  CHECK_THROWS_AS(contour_kind_from_string("spiral"), Error);
  CHECK(contour_kind_from_string(to_string(ContourKind::SShape)) == ContourKind::SShape);
}

TEST_CASE("ground truth: nominal alignment") {
  const WorldModel w = straight_world();
  const GroundTruth gt = ground_truth_features(centred(w), w, kCam);
  REQUIRE(gt.in_contact());
  const ContourFeatures xi = gt.state->xi;
  CHECK(std::abs(xi.r) < 1e-15);
  CHECK(std::abs(xi.beta) < 1e-12);
  CHECK(std::abs(xi.alpha) < 1e-12);
  CHECK(xi.delta == doctest::Approx(0.02).epsilon(1e-12));
  // endpoints land on the 10 px border band
  CHECK(std::min(gt.state->p1.u, gt.state->p2.u) == doctest::Approx(10.0));
  CHECK(std::max(gt.state->p1.u, gt.state->p2.u) == doctest::Approx(310.0));
}

TEST_CASE("ground truth: lateral offset along camera y") {
  const WorldModel w = straight_world();
  const GroundTruth gt = ground_truth_features(shifted(centred(w), {0, 1e-3, 0}), w, kCam);
  REQUIRE(gt.in_contact());
  CHECK(gt.state->xi.r == doctest::Approx(-1e-3).epsilon(1e-9));
  CHECK(std::abs(gt.state->xi.beta) < 1e-12);
  // agrees with an independent projection of the two clipped endpoints
  const auto ref = contour_from_points(gt.state->p1, gt.state->p2, kCam);
  CHECK((ref.vector() - gt.state->xi.vector()).norm() < 1e-15);
  const Eigen::Vector3d img = oracle::pinhole({0.0, -1e-3, 0.02}, kCam);
  CHECK(gt.state->p1.v == doctest::Approx(img(1)).epsilon(1e-12));
}

TEST_CASE("ground truth: contact band and missing contour") {
  const WorldModel w = straight_world();
  GroundTruth gt = ground_truth_features(centred(w, 0.0221), w, kCam);
  CHECK(!gt.in_contact());
  CHECK(gt.reason == NoContactReason::DepthBand);
  gt = ground_truth_features(centred(w, 0.0181), w, kCam);
  CHECK(gt.reason == NoContactReason::DepthBand);
  CHECK(ground_truth_features(centred(w, 0.0219), w, kCam).in_contact());
  gt = ground_truth_features(shifted(centred(w), {0, 0.01, 0}), w, kCam);
  CHECK(gt.reason == NoContactReason::NoCrossing);
}

TEST_CASE("ground truth: hexagon corner follows the dominant segment") {
  ContourPath::Params p;
  p.kind = ContourKind::Hexagon;
  p.circumradius = 0.04;
  const WorldModel w{ContourPath(p), {}, 5e-4, 4e-4};
  const Eigen::Vector2d corner = w.contour.vertices()[1];
  // before the corner the incoming side dominates, after it the outgoing side
  SensorState before{nominal_pose(w, corner - Eigen::Vector2d(0.003, 0), 0.0, 0.02), 0.0};
  SensorState after{nominal_pose(w, corner + 0.003 * Eigen::Vector2d(0.5, std::sqrt(3.0) / 2), 0.0, 0.02), 0.0};
  GroundTruth a = ground_truth_features(before, w, kCam), b = ground_truth_features(after, w, kCam);
  REQUIRE(a.in_contact());
  REQUIRE(b.in_contact());
  CHECK(a.segment == 0);
  CHECK(b.segment == 1);
  CHECK(std::abs(a.state->xi.beta) < 1e-9);
  // camera y is world -y, so the +60 deg side appears at -60 deg in the image
  CHECK(b.state->xi.beta == doctest::Approx(-std::numbers::pi / 3).epsilon(1e-9));
}

TEST_CASE("rk4_step: zero input, Euler agreement, fourth order") {
  oracle::Rng rng(7);
  const WorldModel w = straight_world(0.2);
  const SensorState s = shifted(centred(w), {0.0005, -0.0007, 0.0003});
  const TactileState x0 = *ground_truth_features(s, w, kCam).state;
  CHECK(rk4_step(x0.vector(), Twist{}, 0.02, kCam) == x0.vector());
  CHECK_THROWS_AS(rk4_step(x0.vector(), Twist{}, 0.0, kCam), Error);

  const Vector6d u = oracle::random_twist(rng, 0.005, 0.2);
  const double tiny = 1e-6;
  const Vector10d euler = x0.vector() + system_dynamics(x0.vector(), u, kCam) * tiny;
  const Vector10d rk = rk4_step(x0.vector(), Twist::from_vector(u), tiny, kCam);
  CHECK((rk - euler).cwiseAbs().maxCoeff() < 1e-9);

  auto integrate = [&](double dt, double horizon) {
    Vector10d x = x0.vector();
    const int n = static_cast<int>(std::lround(horizon / dt));
    for (int i = 0; i < n; ++i) x = rk4_step(x, Twist::from_vector(u), dt, kCam);
    return x;
  };
  const Vector10d reference = integrate(1e-5, 0.4);
  const Eigen::Array<double, 10, 1> scale = reference.cwiseAbs().array().max(1e-6);
  const double e1 = ((integrate(0.04, 0.4) - reference).array() / scale).abs().maxCoeff();
  const double e2 = ((integrate(0.02, 0.4) - reference).array() / scale).abs().maxCoeff();
  MESSAGE("rk4 error ratio: " << e1 / e2);
  CHECK(e1 / e2 >= 12.0);
}

TEST_CASE("rk4 step Jacobians match central differences") {
  oracle::Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto [a, b] = oracle::random_feature_pair(rng, kCam);
    const PointFeature p1 = PointFeature::from_vector(a), p2 = PointFeature::from_vector(b);
    const Vector10d x = TactileState{p1, p2, contour_from_points(p1, p2, kCam)}.vector();
    const Vector6d u = oracle::random_twist(rng);
    const StepJacobians j = rk4_step_jacobians(x, u, 0.02, kCam);
    CHECK((j.next - rk4_step(x, Twist::from_vector(u), 0.02, kCam)).norm() < 1e-15);
    for (int c = 0; c < 16; ++c) {
      const double h = c < 10 ? 1e-6 * std::max(1.0, std::abs(x(c))) : 1e-7;
      auto f = [&](double t) {
        Vector10d xx = x;
        Vector6d uu = u;
        if (c < 10) xx(c) += t; else uu(c - 10) += t;
        return rk4_step(xx, Twist::from_vector(uu), 0.02, kCam);
      };
      const Vector10d fd = oracle::central_difference(f, h);
      const Vector10d an = c < 10 ? Vector10d(j.a.col(c)) : Vector10d(j.b.col(c - 10));
      const double denom = std::max(1.0, fd.cwiseAbs().maxCoeff());
      worst = std::max(worst, (an - fd).cwiseAbs().maxCoeff() / denom);
    }
  }
  MESSAGE("max step-Jacobian error: " << worst);
  CHECK(worst < 1e-5);
}

TEST_CASE("plant geometry agrees with the propagated model") {
  const WorldModel w = straight_world(0.1);
  SensorState s = shifted(centred(w), {0.001, 0.0008, 0.0005});
  Vector10d x = ground_truth_features(s, w, kCam).state->vector();
  Vector6d u;
  u << 0.005, -0.002, 0.001, 0.02, -0.03, 0.1;
  const double dt = 0.02;
  double worst = 0.0;
  // Per step: the border endpoints slide along a pitched line, so delta drifts
  // from the material-point model over many steps by construction.
  for (int i = 0; i < 50; ++i) {
    x = rk4_step(x, Twist::from_vector(u), dt, kCam);
    s = apply_twist(s, Twist::from_vector(u), dt);
    const GroundTruth gt = ground_truth_features(s, w, kCam);
    REQUIRE(gt.in_contact());
    const Vector10d reseed = gt.state->vector();
    const Vector4d truth = gt.state->xi.vector();
    worst = std::max(worst, oracle::rel_error(Vector4d(x.tail<4>()), truth, Eigen::Vector4d(1e-3, 1e-2, 1e-2, 1e-3)));
    x = reseed;
  }
  MESSAGE("model vs geometry: " << worst);
  CHECK(worst < 1e-3);
}

TEST_CASE("apply_twist examples") {
  const SensorState s0{Pose::identity(), 1.0};
  CHECK(apply_twist(s0, Twist{}, 0.02).pose.orthonormality_error() < 1e-15);
  CHECK((apply_twist(s0, Twist{}, 0.02).pose.translation).isZero(0));
  CHECK(apply_twist(s0, Twist{}, 0.02).clock == doctest::Approx(1.02));

  Twist vx;
  vx.linear.x() = 0.005;
  const SensorState moved = apply_twist(s0, vx, 1.0);
  CHECK((moved.pose.translation - Eigen::Vector3d(0.005, 0, 0)).norm() < 1e-15);

  Twist wz;
  wz.angular.z() = std::numbers::pi;
  const SensorState spun = apply_twist(s0, wz, 1.0);
  const Eigen::Matrix3d expected = Eigen::Vector3d(-1, -1, 1).asDiagonal();
  CHECK((spun.pose.rotation - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(spun.pose.translation.isZero(1e-15));
  CHECK_THROWS_AS(apply_twist(s0, wz, -1.0), Error);
}

TEST_CASE("apply_twist keeps the rotation orthonormal over 1e4 steps") {
  oracle::Rng rng(3);
  SensorState s{Pose::identity(), 0.0};
  for (int i = 0; i < 10000; ++i) s = apply_twist(s, Twist::from_vector(oracle::random_twist(rng)), 0.02);
  MESSAGE("orthonormality error: " << s.pose.orthonormality_error());
  CHECK(s.pose.orthonormality_error() < 1e-9);
}

TEST_CASE("disturbances") {
  const WorldModel w = straight_world();
  const SensorState s = centred(w);
  CHECK((inject_disturbance(s, Disturbance{}).pose.translation - s.pose.translation).norm() < 1e-15);

  Disturbance kick;
  kick.time = 1.0;
  kick.offset(1) = 5e-3;
  const SensorState hit = inject_disturbance(s, kick);
  CHECK(std::abs(ground_truth_features(hit, w, kCam).state->xi.r) == doctest::Approx(5e-3).epsilon(1e-9));

  DisturbanceSchedule schedule({kick, Disturbance{40.0, Vector6d::Constant(1e-3)}});
  SensorState t = s;
  for (int i = 0; i < 1500; ++i) t = schedule.apply_due(t, i * 0.02, 0.02);
  CHECK(schedule.applied_count() == 1);
  CHECK((t.pose.translation - hit.pose.translation).norm() < 1e-15);
}

TEST_CASE("render: flat surface without ridge is the ray depth") {
  WorldModel w = straight_world();
  ContourPath::Params far;
  far.origin = {1.0, 1.0};
  w.contour = ContourPath(far);
  const DepthImage img = render_depth_image(centred(w), w, kCam, 0.0, 1);
  CHECK(img.valid());
  const auto [lo, hi] = std::minmax_element(img.depths.begin(), img.depths.end());
  CHECK(*lo == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(*hi == doctest::Approx(0.02).epsilon(1e-12));

  // a pitched camera sees depth grow with image row
  SensorState tilted = centred(w);
  tilted.pose = tilted.pose * se3_exp((Vector6d() << 0, 0, 0, 0.1, 0, 0).finished());
  const DepthImage t = render_depth_image(tilted, w, kCam, 0.0, 1);
  CHECK(t.at(160, 10) != doctest::Approx(t.at(160, 230)));
  CHECK_THROWS_AS(render_depth_image(centred(w, 0.03), w, kCam, 0.0, 1), Error);
}

TEST_CASE("render: ridge crest recovers beta, seeds are deterministic") {
  const WorldModel w = straight_world(0.3);
  const SensorState s = centred(w);
  const DepthImage img = render_depth_image(s, w, kCam, 0.0, 5);
  // crest row per column, refined with a parabola through the three samples
  std::vector<double> us, vs;
  for (int x = 20; x < 300; ++x) {
    int best = 1;
    for (int y = 1; y < img.height - 1; ++y) {
      if (img.at(x, y) > img.at(x, best)) best = y;
    }
    if (best <= 1 || best >= img.height - 2) continue;
    const double a = img.at(x, best - 1), b = img.at(x, best), c = img.at(x, best + 1);
    us.push_back(x);
    vs.push_back(best + 0.5 * (a - c) / (a - 2 * b + c));
  }
  REQUIRE(us.size() > 100);
  const double n = us.size();
  double su = 0, sv = 0, suu = 0, suv = 0;
  for (std::size_t i = 0; i < us.size(); ++i) {
    su += us[i]; sv += vs[i]; suu += us[i] * us[i]; suv += us[i] * vs[i];
  }
  const double slope = (n * suv - su * sv) / (n * suu - su * su);
  const double beta_fit = std::atan(slope);
  const double beta_truth = ground_truth_features(s, w, kCam).state->xi.beta;
  MESSAGE("beta fit " << beta_fit << " truth " << beta_truth);
  CHECK(std::abs(beta_fit - beta_truth) < 0.01);

  const DepthImage n1 = render_depth_image(s, w, kCam, 2e-5, 99);
  const DepthImage n2 = render_depth_image(s, w, kCam, 2e-5, 99);
  const DepthImage n3 = render_depth_image(s, w, kCam, 2e-5, 100);
  CHECK(n1.depths == n2.depths);
  CHECK(n1.depths != n3.depths);
}

TEST_CASE("pgm16 round trip") {
  const WorldModel w = straight_world(0.3);
  const DepthImage img = render_depth_image(centred(w), w, kCam, 2e-5, 5);
  const auto path = std::filesystem::temp_directory_path() / "vbt_plant_test.pgm";
  write_pgm16(img, path);
  const DepthImage back = read_pgm16(path);
  REQUIRE(back.size() == img.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < img.size(); ++i) worst = std::max(worst, std::abs(back.depths[i] - img.depths[i]));
  CHECK(worst <= 0.5e-6 + 1e-12);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_pgm16(path), Error);
}
