#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "vbt/error.hpp"
#include "vbt/extraction.hpp"
#include "vbt/plant.hpp"

#ifdef VBT_HAVE_OPENCV
#include <opencv2/imgproc.hpp>
#include <opencv2/ximgproc.hpp>
#endif

using namespace vbt;

namespace {

const CameraIntrinsics kCam;

struct Scene {
  DepthImage image;
  TactileState truth;
};

/// Straight ridge through the footprint centre, world heading `heading`.
Scene ridge_scene(double heading, double noise = 0.0, double lateral = 0.0, std::uint64_t seed = 1) {
  ContourPath::Params p;
  p.origin = {-0.15 * std::cos(heading), -0.15 * std::sin(heading)};
  p.heading = heading;
  const WorldModel w{ContourPath(p), {}, 5e-4, 4e-4};
  const SensorState s{nominal_pose(w, {-lateral * std::sin(heading), lateral * std::cos(heading)}, 0.0, 0.02), 0.0};
  return {render_depth_image(s, w, kCam, noise, seed), *ground_truth_features(s, w, kCam).state};
}

DepthImage blank(double noise = 0.0, std::uint64_t seed = 1) {
  ContourPath::Params p;
  p.origin = {1.0, 1.0};
  const WorldModel w{ContourPath(p), {}, 5e-4, 4e-4};
  ContourPath::Params line;
  const SensorState s{nominal_pose(w, {0, 0}, 0.0, 0.02), 0.0};
  return render_depth_image(s, w, kCam, noise, seed);
}

Eigen::Vector2d truth_mid(const TactileState& t) { return {0.5 * (t.p1.u + t.p2.u), 0.5 * (t.p1.v + t.p2.v)}; }

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::IoFailure;
}

}  // namespace

TEST_CASE("line angle helpers") {
  CHECK(canonical_line_angle(std::numbers::pi) == doctest::Approx(0.0));
  CHECK(canonical_line_angle(-std::numbers::pi / 2) == doctest::Approx(std::numbers::pi / 2));
  CHECK(canonical_line_angle(2.0) == doctest::Approx(2.0 - std::numbers::pi));
  CHECK(line_angle_error(1.5, -1.5) == doctest::Approx(std::numbers::pi - 3.0));
  CHECK(line_angle_error(0.1, 0.1 + std::numbers::pi) < 1e-12);
}

TEST_CASE("binarize") {
  SUBCASE("constant image has no contact signal") {
    const DepthImage flat(320, 240, 6e-5, 0.02);
    CHECK(code_of([&] { binarize(flat, 0.9); }) == ErrorCode::EmptyMask);
  }
  SUBCASE("noise-free ridge gives one band around the centreline") {
    const Scene sc = ridge_scene(0.3);
    const BinaryMask m = binarize(sc.image, 0.9);
    int comps = 0;
    imgproc::label_components(m, &comps);
    CHECK(comps == 1);
    const Eigen::Vector4d line(sc.truth.p1.u, sc.truth.p1.v, sc.truth.p2.u, sc.truth.p2.v);
    double worst = 0.0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (m.at(x, y)) worst = std::max(worst, distance_to_line({x, y}, line));
    // sigma of the ridge is ~6.7 px at 20 mm depth
    CHECK(worst < 20.0);
    CHECK(m.count() > 0.08 * m.data.size());
    CHECK(m.at(160, static_cast<int>(std::lround(sc.truth.p1.v + (160 - sc.truth.p1.u) * std::tan(sc.truth.xi.beta)))) == 1);
  }
  SUBCASE("pure noise at quantile 0.99 is rejected by the area filter") {
    int empty = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      try {
        binarize(blank(2e-5, seed), 0.99);
      } catch (const Error& e) {
        empty += e.code() == ErrorCode::EmptyMask;
      }
    }
    CHECK(empty == 100);
  }
  CHECK_THROWS_AS(binarize(ridge_scene(0.3).image, 1.0), Error);
}

TEST_CASE("EaLF") {
  const Scene sc = ridge_scene(-0.3);
  REQUIRE(sc.truth.xi.beta == doctest::Approx(0.3));
  const ExtractedLine l = extract_ealf(sc.image);
  CHECK(line_angle_error(l.orientation, 0.3) < 0.02);
  CHECK((l.midpoint - truth_mid(sc.truth)).norm() < 3.0);

  const Scene vertical = ridge_scene(std::numbers::pi / 2);
  const ExtractedLine v = extract_ealf(vertical.image);
  CHECK(line_angle_error(v.orientation, std::numbers::pi / 2) < 0.02);
  CHECK(v.orientation > -std::numbers::pi / 2);
  CHECK(v.orientation <= std::numbers::pi / 2);
  CHECK(code_of([] { extract_ealf(blank()); }) == ErrorCode::EmptyMask);
}

TEST_CASE("EaEF") {
  const Scene sc = ridge_scene(-0.3);
  CHECK(line_angle_error(extract_eaef(sc.image).orientation, 0.3) < 0.05);
  CHECK(code_of([] { extract_eaef(blank()); }) == ErrorCode::EmptyMask);

  // a small closed ring has no dominant axis
  ContourPath::Params p;
  p.kind = ContourKind::Circle;
  p.radius = 0.003;
  p.origin = {0.0, -0.003};
  const WorldModel w{ContourPath(p), {}, 5e-4, 4e-4};
  const DepthImage ring = render_depth_image({nominal_pose(w, {0, 0}, 0.0, 0.02), 0.0}, w, kCam, 0.0, 1);
  CHECK(code_of([&] { extract_eaef(ring); }) == ErrorCode::DegenerateFit);
}

TEST_CASE("CaEF") {
  const Scene sc = ridge_scene(-0.3);
  const ExtractedLine l = extract_caef(sc.image);
  CHECK(line_angle_error(l.orientation, 0.3) < 0.08);
  CHECK(l.inlier_count >= 6);
  CHECK(code_of([] { extract_caef(blank()); }) == ErrorCode::EmptyMask);
  const std::vector<Eigen::Vector2d> five{{0, 0}, {1, 0}, {2, 1}, {1, 2}, {0, 1}};
  CHECK(code_of([&] { imgproc::fit_ellipse(five); }) == ErrorCode::DegenerateFit);
}

TEST_CASE("TSaLF") {
  const Scene sc = ridge_scene(-0.3);
  const ExtractedLine l = extract_tsalf(sc.image);
  CHECK(line_angle_error(l.orientation, 0.3) < 0.01);
  CHECK((l.midpoint - truth_mid(sc.truth)).norm() < 2.0);
  CHECK(code_of([] { extract_tsalf(blank()); }) == ErrorCode::EmptyMask);

  SUBCASE("two parallel ridges: the deeper one wins in either order") {
    DepthImage img(320, 240, 6e-5);
    const double s2 = 2.0 * 6.7 * 6.7;
    for (int y = 0; y < 240; ++y)
      for (int x = 0; x < 320; ++x)
        img.at(x, y) = 0.02 + 5e-4 * std::exp(-(y - 70.0) * (y - 70.0) / s2) + 3e-4 * std::exp(-(y - 170.0) * (y - 170.0) / s2);
    DepthImage flipped = img;
    for (int y = 0; y < 240; ++y)
      for (int x = 0; x < 320; ++x) flipped.at(x, y) = img.at(x, 239 - y);
    ExtractionConfig cfg;
    cfg.quantile = 0.8;
    const ExtractedLine a = extract_tsalf(img, cfg), b = extract_tsalf(flipped, cfg);
    CHECK(a.midpoint.y() == doctest::Approx(70.0).epsilon(0.02));
    CHECK(b.midpoint.y() == doctest::Approx(169.0).epsilon(0.02));
  }
}

TEST_CASE("extracted lines satisfy the line invariants and are deterministic") {
  const Scene sc = ridge_scene(0.7, 2e-5, 5e-4, 3);
  for (Extractor e : kAllExtractors) {
    CAPTURE(to_string(e));
    const ExtractedLine l = extract(e, sc.image);
    const ExtractedLine again = extract(e, sc.image);
    CHECK(l.midpoint == again.midpoint);
    CHECK(l.orientation == again.orientation);
    CHECK(l.orientation > -std::numbers::pi / 2);
    CHECK(l.orientation <= std::numbers::pi / 2);
    const Eigen::Vector2d d = l.endpoints[1] - l.endpoints[0];
    CHECK(line_angle_error(std::atan2(d.y(), d.x()), l.orientation) < 1e-9);
    const Eigen::Vector4d self(l.midpoint.x(), l.midpoint.y(), l.midpoint.x() + std::cos(l.orientation),
                               l.midpoint.y() + std::sin(l.orientation));
    CHECK(distance_to_line(l.endpoints[0], self) < 0.5);
    CHECK(distance_to_line(l.endpoints[1], self) < 0.5);
  }
}

TEST_CASE("extractors are rotation covariant on noise-free images") {
  for (Extractor e : kAllExtractors) {
    CAPTURE(to_string(e));
    const double base = extract(e, ridge_scene(-0.3).image).orientation;
    for (double theta : {0.4, 1.1, -0.9}) {
      // the camera y axis is world -y, so a world rotation by theta turns the image line by -theta
      const double turned = extract(e, ridge_scene(-0.3 - theta).image).orientation;
      CHECK(line_angle_error(turned - base, theta) < 0.02);
    }
  }
}

TEST_CASE("line_to_features lands on the border band with surface depths") {
  const Scene sc = ridge_scene(-0.3, 2e-5, 3e-4, 8);
  const ExtractedLine l = extract_tsalf(sc.image);
  const auto [a, b] = line_to_features(l, sc.image, kCam);
  auto on_band = [](const PointFeature& p) {
    return std::abs(p.u - 10) < 1e-9 || std::abs(p.u - 310) < 1e-9 || std::abs(p.v - 10) < 1e-9 ||
           std::abs(p.v - 230) < 1e-9;
  };
  CHECK(on_band(a));
  CHECK(on_band(b));
  const ContourFeatures xi = contour_from_points(a, b, kCam);
  CHECK(xi.beta == doctest::Approx(sc.truth.xi.beta).epsilon(0.01));
  CHECK(std::abs(xi.r - sc.truth.xi.r) < 1e-4);
  CHECK(std::abs(xi.delta - sc.truth.xi.delta) < 2e-5);
}

TEST_CASE("evaluate") {
  const std::vector<LabeledImage> data = synthetic_dataset(12, 2e-5, 4);
  auto oracle_fn = [&](std::size_t shift) {
    return [&data, shift](const DepthImage& img) {
      // look the frame up by identity; returns the truth displaced along its normal
      for (const LabeledImage& item : data) {
        if (&item.image != &img) continue;
        const Eigen::Vector2d a(item.truth(0), item.truth(1)), b(item.truth(2), item.truth(3));
        const Eigen::Vector2d d = (b - a).normalized(), n(-d.y(), d.x());
        ExtractedLine l;
        l.endpoints = {a + static_cast<double>(shift) * n, b + static_cast<double>(shift) * n};
        l.midpoint = 0.5 * (l.endpoints[0] + l.endpoints[1]);
        l.orientation = canonical_line_angle(std::atan2(d.y(), d.x()));
        return l;
      }
      throw Error(ErrorCode::DegenerateFit, "unknown frame");
    };
  };
  const ExtractionMetrics exact = evaluate(oracle_fn(0), data);
  CHECK(exact.position_rmse < 1e-9);
  CHECK(exact.orientation_rmse < 1e-12);
  CHECK(exact.discrepancy_rate == 0.0);
  CHECK(exact.failures == 0);
  const ExtractionMetrics shifted = evaluate(oracle_fn(3), data);
  CHECK(shifted.position_rmse == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(shifted.position_std < 1e-9);

  const ExtractionMetrics failing = evaluate([](const DepthImage&) -> ExtractedLine { throw Error(ErrorCode::EmptyMask, "x"); }, data);
  CHECK(failing.failures == 12);
  CHECK(failing.discrepancy_rate == 100.0);
  CHECK(failing.failure_rate == 100.0);

  // permutation invariance (runtime aside)
  const ExtractorFn tsalf = [](const DepthImage& img) { return extract_tsalf(img); };
  std::vector<LabeledImage> reversed(data.rbegin(), data.rend());
  const ExtractionMetrics m1 = evaluate(tsalf, data), m2 = evaluate(tsalf, reversed);
  CHECK(m1.position_rmse == m2.position_rmse);
  CHECK(m1.orientation_rmse == m2.orientation_rmse);
  CHECK(m1.discrepancy_rate == m2.discrepancy_rate);
  CHECK_THROWS_AS(evaluate(tsalf, {}), Error);
}

TEST_CASE("TSaLF beats EaLF on position on the synthetic suite") {
  const std::vector<LabeledImage> data = synthetic_dataset(40, 2e-5, 11);
  const ExtractionMetrics ts = evaluate([](const DepthImage& i) { return extract_tsalf(i); }, data);
  const ExtractionMetrics ea = evaluate([](const DepthImage& i) { return extract_ealf(i); }, data);
  MESSAGE("tsalf " << ts.position_rmse << " px, ealf " << ea.position_rmse << " px");
  CHECK(ts.position_rmse <= ea.position_rmse);
}

TEST_CASE("dataset round trip") {
  const std::vector<LabeledImage> data = synthetic_dataset(3, 2e-5, 2);
  const auto dir = std::filesystem::temp_directory_path() / "vbt_dataset_test";
  std::filesystem::remove_all(dir);
  write_dataset(data, dir);
  const std::vector<LabeledImage> back = read_dataset(dir);
  REQUIRE(back.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(back[i].truth == data[i].truth);
    CHECK(std::abs(back[i].image.at(100, 100) - data[i].image.at(100, 100)) <= 0.5e-6 + 1e-12);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("ellipse fit recovers an analytic ellipse") {
  oracle::Rng rng(2);
  std::vector<Eigen::Vector2d> pts;
  const double a = 60, b = 15, phi = 0.6;
  const Eigen::Vector2d c(140, 110);
  for (int i = 0; i < 50; ++i) {
    const double t = rng.uniform(0, 2 * std::numbers::pi);
    const Eigen::Vector2d local(a * std::cos(t), b * std::sin(t));
    pts.push_back(c + Eigen::Vector2d(std::cos(phi) * local.x() - std::sin(phi) * local.y(),
                                      std::sin(phi) * local.x() + std::cos(phi) * local.y()));
  }
  const imgproc::Ellipse e = imgproc::fit_ellipse(pts);
  CHECK((e.center - c).norm() < 1e-6);
  CHECK(e.semi_major == doctest::Approx(a).epsilon(1e-8));
  CHECK(e.semi_minor == doctest::Approx(b).epsilon(1e-8));
  CHECK(line_angle_error(e.angle, phi) < 1e-8);
}

TEST_CASE("weighted line fit") {
  std::vector<double> xs{0, 1, 2, 3, 4}, ys{1, 3, 5, 7, 9}, ws{1, 1, 1, 1, 1};
  const auto l = imgproc::fit_line_weighted(xs, ys, ws);
  CHECK(l.angle == doctest::Approx(std::atan(2.0)));
  CHECK(l.centroid.x() == doctest::Approx(2.0));
  // a zero-weight outlier is ignored
  xs.push_back(2);
  ys.push_back(-50);
  ws.push_back(0);
  CHECK(imgproc::fit_line_weighted(xs, ys, ws).angle == doctest::Approx(std::atan(2.0)));
}

#ifdef VBT_HAVE_OPENCV
namespace {

BinaryMask random_blobs(oracle::Rng& rng, int w, int h) {
  BinaryMask m(w, h);
  for (int k = 0; k < 6; ++k) {
    const double cx = rng.uniform(10, w - 10), cy = rng.uniform(10, h - 10), rx = rng.uniform(3, 15), ry = rng.uniform(3, 15);
    for (int y = 1; y < h - 1; ++y)
      for (int x = 1; x < w - 1; ++x)
        if ((x - cx) * (x - cx) / (rx * rx) + (y - cy) * (y - cy) / (ry * ry) <= 1.0) m.at(x, y) = 1;
  }
  return m;
}

cv::Mat to_cv(const BinaryMask& m) {
  cv::Mat out(m.height, m.width, CV_8U);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.at<std::uint8_t>(y, x) = m.at(x, y) ? 255 : 0;
  return out;
}

}  // namespace

TEST_CASE("thinning and labelling agree with OpenCV") {
  oracle::Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const BinaryMask m = random_blobs(rng, 96, 72);
    cv::Mat thin;
    cv::ximgproc::thinning(to_cv(m), thin, cv::ximgproc::THINNING_ZHANGSUEN);
    const BinaryMask mine = imgproc::thin_zhang_suen(m);
    int diff = 0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) diff += (mine.at(x, y) != 0) != (thin.at<std::uint8_t>(y, x) != 0);
    CHECK(diff == 0);

    int count = 0;
    imgproc::label_components(m, &count);
    cv::Mat labels;
    const int cv_count = cv::connectedComponents(to_cv(m), labels, 8) - 1;
    CHECK(count == cv_count);
  }
}

TEST_CASE("ellipse fit agrees with OpenCV's direct fit on noisy points") {
  oracle::Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Eigen::Vector2d> pts;
    std::vector<cv::Point2f> cvpts;
    const double a = rng.uniform(30, 80), b = rng.uniform(8, 25), phi = rng.uniform(-1.5, 1.5);
    for (int i = 0; i < 80; ++i) {
      const double t = rng.uniform(0, 2 * std::numbers::pi);
      const double lx = a * std::cos(t) + rng.normal(0.5), ly = b * std::sin(t) + rng.normal(0.5);
      const Eigen::Vector2d p(160 + std::cos(phi) * lx - std::sin(phi) * ly, 120 + std::sin(phi) * lx + std::cos(phi) * ly);
      pts.push_back(p);
      cvpts.emplace_back(static_cast<float>(p.x()), static_cast<float>(p.y()));
    }
    const imgproc::Ellipse e = imgproc::fit_ellipse(pts);
    const cv::RotatedRect r = cv::fitEllipseDirect(cvpts);
    const double cv_major = std::max(r.size.width, r.size.height) / 2.0;
    const double cv_angle = r.size.width >= r.size.height ? r.angle * std::numbers::pi / 180.0
                                                          : (r.angle + 90.0) * std::numbers::pi / 180.0;
    CHECK(std::abs(e.center.x() - r.center.x) < 0.05);
    CHECK(std::abs(e.center.y() - r.center.y) < 0.05);
    CHECK(e.semi_major == doctest::Approx(cv_major).epsilon(2e-3));
    CHECK(line_angle_error(e.angle, cv_angle) < 2e-3);
  }
}
#endif
