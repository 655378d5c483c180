#include "vbt/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <unsupported/Eigen/AutoDiff>

namespace vbt {

namespace {

constexpr double kSampleSpacing = 2.5e-4;  // m, smooth contours

Eigen::Vector2d rotate(const Eigen::Vector2d& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

std::vector<Eigen::Vector2d> build_vertices(const ContourPath::Params& p) {
  std::vector<Eigen::Vector2d> out;
  const Eigen::Vector2d t(std::cos(p.heading), std::sin(p.heading));
  const Eigen::Vector2d n_left(-t.y(), t.x());
  switch (p.kind) {
    case ContourKind::Line:
      out = {p.origin, p.origin + p.length * t};
      break;
    case ContourKind::SShape: {
      const int n = std::max(2, static_cast<int>(std::ceil(p.length / kSampleSpacing)) + 1);
      for (int i = 0; i < n; ++i) {
        const double x = p.length * i / (n - 1);
        const double y = p.amplitude * std::sin(2.0 * std::numbers::pi * x / p.wavelength);
        out.push_back(p.origin + rotate({x, y}, p.heading));
      }
      break;
    }
    case ContourKind::Hexagon: {
      const double r = p.circumradius;
      const Eigen::Vector2d center = p.origin + (r * std::sqrt(3.0) / 2.0) * n_left;
      Eigen::Vector2d corner = p.origin + 0.5 * r * t;
      out.push_back(p.origin);
      for (int i = 0; i < 6; ++i) {
        out.push_back(corner);
        corner = center + rotate(corner - center, std::numbers::pi / 3.0);
      }
      out.push_back(p.origin);
      break;
    }
    case ContourKind::Circle: {
      const Eigen::Vector2d center = p.origin + p.radius * n_left;
      const double circumference = 2.0 * std::numbers::pi * p.radius;
      const int n = std::max(8, static_cast<int>(std::ceil(circumference / kSampleSpacing)));
      for (int i = 0; i <= n; ++i) {
        out.push_back(center + rotate(p.origin - center, 2.0 * std::numbers::pi * i / n));
      }
      out.back() = p.origin;
      break;
    }
    case ContourKind::Polyline:
      out = p.vertices;
      break;
  }
  return out;
}

double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b, double* t_out) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  if (t_out) *t_out = t;
  return (a + t * ab - p).norm();
}

}  // namespace

const char* to_string(ContourKind kind) {
  switch (kind) {
    case ContourKind::Line: return "line";
    case ContourKind::SShape: return "s_shape";
    case ContourKind::Hexagon: return "hexagon";
    case ContourKind::Circle: return "circle";
    case ContourKind::Polyline: return "polyline";
  }
  return "line";
}

ContourKind contour_kind_from_string(const std::string& name) {
  if (name == "line") return ContourKind::Line;
  if (name == "s_shape") return ContourKind::SShape;
  if (name == "hexagon") return ContourKind::Hexagon;
  if (name == "circle") return ContourKind::Circle;
  if (name == "polyline") return ContourKind::Polyline;
  throw Error(ErrorCode::ScenarioInvalid, "unknown contour kind '" + name + "'");
}

ContourPath::ContourPath(Params params) : params_(std::move(params)) {
  vertices_ = build_vertices(params_);
  if (vertices_.size() < 2) throw Error(ErrorCode::ScenarioInvalid, "contour needs at least two vertices");
  cumulative_.resize(vertices_.size());
  cumulative_[0] = 0.0;
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    cumulative_[i] = cumulative_[i - 1] + (vertices_[i] - vertices_[i - 1]).norm();
  }
  if (!(total_length() > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "contour has zero length");
}

Eigen::Vector2d ContourPath::point_at(double s) const {
  s = std::clamp(s, 0.0, total_length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cumulative_.begin(), 1), vertices_.size() - 1);
  const double seg = cumulative_[i] - cumulative_[i - 1];
  const double t = seg > 0.0 ? (s - cumulative_[i - 1]) / seg : 0.0;
  return vertices_[i - 1] + t * (vertices_[i] - vertices_[i - 1]);
}

Eigen::Vector2d ContourPath::tangent_at(double s) const {
  s = std::clamp(s, 0.0, total_length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cumulative_.begin(), 1), vertices_.size() - 1);
  return (vertices_[i] - vertices_[i - 1]).normalized();
}

double ContourPath::closest_arclength(const Eigen::Vector2d& p, double s_hint, double window) const {
  double best_d = std::numeric_limits<double>::infinity();
  double best_s = s_hint;
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    if (cumulative_[i] < s_hint - window || cumulative_[i - 1] > s_hint + window) continue;
    double t = 0.0;
    const double d = segment_distance(p, vertices_[i - 1], vertices_[i], &t);
    if (d < best_d) {
      best_d = d;
      best_s = cumulative_[i - 1] + t * (cumulative_[i] - cumulative_[i - 1]);
    }
  }
  return best_s;
}

double ContourPath::distance(const Eigen::Vector2d& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < vertices_.size(); ++i) {
    best = std::min(best, segment_distance(p, vertices_[i - 1], vertices_[i], nullptr));
  }
  return best;
}

void WorldModel::validate() const {
  if (!(ridge_height > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "world.ridge_height must be > 0");
  if (!(ridge_sigma > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "world.ridge_sigma must be > 0");
}

Pose nominal_pose(const WorldModel& world, const Eigen::Vector2d& xy, double heading, double depth) {
  // camera x along heading, camera z pointing down into the surface
  const Eigen::Vector3d x_axis(std::cos(heading), std::sin(heading), 0.0);
  const Eigen::Vector3d z_axis(0.0, 0.0, -1.0);
  const Eigen::Vector3d y_axis = z_axis.cross(x_axis);
  Pose pose;
  pose.rotation.col(0) = x_axis;
  pose.rotation.col(1) = y_axis;
  pose.rotation.col(2) = z_axis;
  pose.translation = Eigen::Vector3d(xy.x(), xy.y(), world.surface.height(xy.x(), xy.y()) + depth);
  return pose;
}

namespace {

struct ClippedSegment {
  int index = 0;
  double t0 = 0.0;
  double t1 = 1.0;
  double length_px = 0.0;
  Eigen::Vector3d a, b;  // camera-frame endpoints of the visible part
};

/// Liang-Barsky on constraints c0 + c1 * t >= 0, t in [t0, t1].
bool clip(double c0, double c1, double& t0, double& t1) {
  if (std::abs(c1) < 1e-300) return c0 >= 0.0;
  const double t = -c0 / c1;
  if (c1 > 0.0) {
    t0 = std::max(t0, t);
  } else {
    t1 = std::min(t1, t);
  }
  return t0 <= t1;
}

PointFeature to_feature(const Eigen::Vector3d& p, const CameraIntrinsics& k) { return project(p, k); }

}  // namespace

GroundTruth ground_truth_features(const SensorState& sensor, const WorldModel& world, const CameraIntrinsics& k) {
  const auto& verts = world.contour.vertices();
  const std::size_t n = verts.size();
  std::vector<Eigen::Vector3d> pc(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d pw(verts[i].x(), verts[i].y(), world.surface.height(verts[i].x(), verts[i].y()));
    pc[i] = sensor.pose.apply_inverse(pw);
  }
  const double fp = k.focal_px();
  const double umin = kBorderMarginPx - k.cu, umax = (k.width - kBorderMarginPx) - k.cu;
  const double vmin = kBorderMarginPx - k.cv, vmax = (k.height - kBorderMarginPx) - k.cv;

  std::vector<ClippedSegment> visible;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Eigen::Vector3d& a = pc[i];
    const Eigen::Vector3d d = pc[i + 1] - a;
    double t0 = 0.0, t1 = 1.0;
    // z > 0, then the four border lines; each is linear in t once multiplied by z.
    const bool ok = clip(a.z() - 1e-6, d.z(), t0, t1) &&
                    clip(fp * a.x() - umin * a.z(), fp * d.x() - umin * d.z(), t0, t1) &&
                    clip(umax * a.z() - fp * a.x(), umax * d.z() - fp * d.x(), t0, t1) &&
                    clip(fp * a.y() - vmin * a.z(), fp * d.y() - vmin * d.z(), t0, t1) &&
                    clip(vmax * a.z() - fp * a.y(), vmax * d.z() - fp * d.y(), t0, t1);
    if (!ok || t1 - t0 <= 1e-12) continue;
    ClippedSegment seg;
    seg.index = static_cast<int>(i);
    seg.t0 = t0;
    seg.t1 = t1;
    seg.a = a + t0 * d;
    seg.b = a + t1 * d;
    const PointFeature fa = to_feature(seg.a, k), fb = to_feature(seg.b, k);
    seg.length_px = std::hypot(fb.u - fa.u, fb.v - fa.v);
    visible.push_back(seg);
  }

  GroundTruth out;
  if (visible.empty()) {
    out.reason = NoContactReason::NoCrossing;
    return out;
  }

  Eigen::Vector3d entry, exit;
  if (world.contour.smooth()) {
    // Group consecutive clipped segments into continuous visible pieces and keep the longest.
    struct Piece {
      std::size_t first, last;
      double length;
    };
    std::vector<Piece> pieces;
    for (std::size_t i = 0; i < visible.size(); ++i) {
      const bool joins = !pieces.empty() && visible[i].index == visible[pieces.back().last].index + 1 &&
                         visible[i].t0 <= 1e-12 && visible[pieces.back().last].t1 >= 1.0 - 1e-12;
      if (joins) {
        pieces.back().last = i;
        pieces.back().length += visible[i].length_px;
      } else {
        pieces.push_back({i, i, visible[i].length_px});
      }
    }
    const auto best = std::max_element(pieces.begin(), pieces.end(),
                                       [](const Piece& a, const Piece& b) { return a.length < b.length; });
    entry = visible[best->first].a;
    exit = visible[best->last].b;
    out.segment = visible[best->first].index;
  } else {
    // Dominant straight segment; ties go to the segment further along the path.
    std::size_t best = 0;
    for (std::size_t i = 1; i < visible.size(); ++i) {
      if (visible[i].length_px >= visible[best].length_px * (1.0 - 1e-12)) best = i;
    }
    entry = visible[best].a;
    exit = visible[best].b;
    out.segment = visible[best].index;
  }

  const PointFeature p1 = to_feature(entry, k), p2 = to_feature(exit, k);
  if (std::hypot(p2.u - p1.u, p2.v - p1.v) < 1.0) {
    out.reason = NoContactReason::NoCrossing;
    return out;
  }
  const double delta = 0.5 * (p1.depth + p2.depth);
  if (delta < kDeltaMin || delta > kDeltaMax) {
    out.reason = NoContactReason::DepthBand;
    return out;
  }
  out.state = TactileState{p1, p2, contour_from_points(p1, p2, k)};
  return out;
}

Vector10d rk4_step(const Vector10d& x, const Twist& u, double dt, const CameraIntrinsics& k) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "rk4_step needs dt > 0");
  return detail::rk4<double, double>(x, u.vector(), dt, k);
}

StepJacobians rk4_step_jacobians(const Vector10d& x, const Vector6d& u, double dt, const CameraIntrinsics& k) {
  using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 16, 1>>;
  Eigen::Matrix<Ad, 10, 1> xa;
  Eigen::Matrix<Ad, 6, 1> ua;
  for (int i = 0; i < 10; ++i) xa(i) = Ad(x(i), 16, i);
  for (int i = 0; i < 6; ++i) ua(i) = Ad(u(i), 16, 10 + i);
  const Eigen::Matrix<Ad, 10, 1> next = detail::rk4<Ad, Ad>(xa, ua, dt, k);
  StepJacobians out;
  for (int i = 0; i < 10; ++i) {
    out.next(i) = next(i).value();
    out.a.row(i) = next(i).derivatives().head<10>().transpose();
    out.b.row(i) = next(i).derivatives().tail<6>().transpose();
  }
  return out;
}

SensorState apply_twist(const SensorState& sensor, const Twist& u, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::ScenarioInvalid, "apply_twist needs dt > 0");
  SensorState out = sensor;
  out.pose = sensor.pose * se3_exp(u.vector() * dt);
  out.pose.rotation = orthonormalize(out.pose.rotation);
  out.clock = sensor.clock + dt;
  return out;
}

SensorState inject_disturbance(const SensorState& sensor, const Disturbance& d) {
  SensorState out = sensor;
  out.pose = sensor.pose * se3_exp(d.offset);
  out.pose.rotation = orthonormalize(out.pose.rotation);
  return out;
}

DisturbanceSchedule::DisturbanceSchedule(std::vector<Disturbance> items)
    : items_(std::move(items)), applied_(items_.size(), false) {}

SensorState DisturbanceSchedule::apply_due(const SensorState& sensor, double now, double dt) {
  SensorState out = sensor;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (!applied_[i] && items_[i].time <= now + 0.5 * dt) {
      out = inject_disturbance(out, items_[i]);
      applied_[i] = true;
    }
  }
  return out;
}

int DisturbanceSchedule::applied_count() const {
  return static_cast<int>(std::count(applied_.begin(), applied_.end(), true));
}

DepthImage render_depth_image(const SensorState& sensor, const WorldModel& world, const CameraIntrinsics& k,
                              double noise_sigma, std::uint64_t seed) {
  const Eigen::Matrix3d& rot = sensor.pose.rotation;
  const Eigen::Vector3d& origin = sensor.pose.translation;
  const SurfacePlane& plane = world.surface;
  const double inv_fp = 1.0 / k.focal_px();

  auto hit = [&](double u, double v, Eigen::Vector3d* world_point) {
    const Eigen::Vector3d dc((u - k.cu) * inv_fp, (v - k.cv) * inv_fp, 1.0);
    const Eigen::Vector3d dw = rot * dc;
    const double den = dw.z() - plane.gx * dw.x() - plane.gy * dw.y();
    const double num = plane.z0 + plane.gx * origin.x() + plane.gy * origin.y() - origin.z();
    if (std::abs(den) < 1e-12) return -1.0;
    const double lambda = num / den;
    if (world_point) *world_point = origin + lambda * dw;
    return lambda;  // camera-frame z of the hit, since dc.z == 1
  };

  Eigen::Vector3d center_w;
  const double center_depth = hit(k.cu, k.cv, &center_w);
  if (!(center_depth > 0.0) || center_depth < kDeltaMin || center_depth > kDeltaMax) {
    throw Error(ErrorCode::OutOfContact, "principal ray depth " + std::to_string(center_depth) + " m");
  }
  double radius = 0.0;
  for (const auto& [u, v] : {std::pair{0.0, 0.0}, {k.width - 1.0, 0.0}, {0.0, k.height - 1.0},
                             {k.width - 1.0, k.height - 1.0}}) {
    Eigen::Vector3d w;
    if (!(hit(u, v, &w) > 0.0)) throw Error(ErrorCode::OutOfContact, "footprint corner misses the surface");
    radius = std::max(radius, (w - center_w).head<2>().norm());
  }

  // Only contour segments that can influence the footprint.
  const double reach = 6.0 * world.ridge_sigma;
  const auto& verts = world.contour.vertices();
  struct Seg {
    Eigen::Vector2d a, b;
    Eigen::Vector2d lo, hi;
  };
  std::vector<Seg> segs;
  for (std::size_t i = 0; i + 1 < verts.size(); ++i) {
    double t = 0.0;
    if (segment_distance(center_w.head<2>(), verts[i], verts[i + 1], &t) > radius + reach) continue;
    Seg s{verts[i], verts[i + 1], verts[i].cwiseMin(verts[i + 1]).array() - reach,
          verts[i].cwiseMax(verts[i + 1]).array() + reach};
    segs.push_back(s);
  }

  DepthImage img(k.width, k.height, k.pixel_pitch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double inv_two_sigma2 = 1.0 / (2.0 * world.ridge_sigma * world.ridge_sigma);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      Eigen::Vector3d w;
      const double z = hit(x, y, &w);
      if (!(z > 0.0)) throw Error(ErrorCode::OutOfContact, "pixel ray misses the surface");
      const Eigen::Vector2d p = w.head<2>();
      double d2 = std::numeric_limits<double>::infinity();
      for (const Seg& s : segs) {
        if ((p.array() < s.lo.array()).any() || (p.array() > s.hi.array()).any()) continue;
        const double d = segment_distance(p, s.a, s.b, nullptr);
        d2 = std::min(d2, d * d);
      }
      double depth = z;
      if (std::isfinite(d2)) depth += world.ridge_height * std::exp(-d2 * inv_two_sigma2);
      if (noise_sigma > 0.0) depth += noise_sigma * noise(rng);
      img.at(x, y) = depth;
    }
  }
  return img;
}

}  // namespace vbt
