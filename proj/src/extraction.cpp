#include "vbt/extraction.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "vbt/error.hpp"
#include "vbt/plant.hpp"
#include "vbt/simd.hpp"

namespace vbt {

const char* to_string(Extractor e) {
  switch (e) {
    case Extractor::EaLF: return "ealf";
    case Extractor::EaEF: return "eaef";
    case Extractor::CaEF: return "caef";
    case Extractor::TSaLF: return "tsalf";
  }
  return "tsalf";
}

Extractor extractor_from_string(const std::string& name) {
  for (Extractor e : kAllExtractors) {
    if (name == to_string(e)) return e;
  }
  throw Error(ErrorCode::ScenarioInvalid, "unknown extractor '" + name + "'");
}

namespace {

struct Grid {
  std::vector<double> xs, ys;
};

Grid pixel_grid(int w, int h) {
  Grid g;
  g.xs.resize(static_cast<std::size_t>(w) * h);
  g.ys.resize(g.xs.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      g.xs[y * w + x] = x;
      g.ys[y * w + x] = y;
    }
  }
  return g;
}

/// Least-squares plane a + b*u + c*v through the depths, restricted to weight-1 pixels.
Eigen::Vector3d fit_plane(const Grid& g, const std::vector<double>& depth, const std::vector<double>& select) {
  std::vector<double> wd(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i) wd[i] = select[i] * depth[i];
  const simd::Moments geo = simd::weighted_moments(g.xs, g.ys, select);
  const simd::Moments val = simd::weighted_moments(g.xs, g.ys, wd);
  Eigen::Matrix3d n;
  n << geo.w, geo.wx, geo.wy, geo.wx, geo.wxx, geo.wxy, geo.wy, geo.wxy, geo.wyy;
  const Eigen::Vector3d rhs(val.w, val.wx, val.wy);
  return n.ldlt().solve(rhs);
}

double quantile_of(std::vector<double> v, double q) {
  const auto k = static_cast<std::ptrdiff_t>(std::floor(q * (v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + k, v.end());
  return v[k];
}

struct PixelSet {
  std::vector<double> xs, ys, ws;
};

PixelSet mask_pixels(const BinaryMask& m, const std::vector<double>& weight) {
  PixelSet s;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      s.xs.push_back(x);
      s.ys.push_back(y);
      s.ws.push_back(weight[y * m.width + x]);
    }
  }
  return s;
}

ExtractedLine line_from_fit(const imgproc::WeightedLine& fit, const PixelSet& px) {
  ExtractedLine line;
  line.orientation = fit.angle;
  const Eigen::Vector2d dir = line.direction();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = 0; i < px.xs.size(); ++i) {
    const double t = (Eigen::Vector2d(px.xs[i], px.ys[i]) - fit.centroid).dot(dir);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  line.endpoints = {fit.centroid + lo * dir, fit.centroid + hi * dir};
  line.midpoint = 0.5 * (line.endpoints[0] + line.endpoints[1]);
  line.inlier_count = static_cast<int>(px.xs.size());
  return line;
}

ExtractedLine line_from_ellipse(const imgproc::Ellipse& e, int inliers, const ExtractionConfig& cfg) {
  if (e.semi_major < cfg.min_axis_ratio * e.semi_minor) {
    throw Error(ErrorCode::DegenerateFit, "ellipse has no dominant axis");
  }
  ExtractedLine line;
  line.orientation = e.angle;
  line.midpoint = e.center;
  const Eigen::Vector2d dir = line.direction();
  line.endpoints = {e.center - e.semi_major * dir, e.center + e.semi_major * dir};
  line.inlier_count = inliers;
  return line;
}

}  // namespace

Preprocessed preprocess(const DepthImage& img, const ExtractionConfig& cfg) {
  if (!(cfg.quantile > 0.0 && cfg.quantile < 1.0)) throw Error(ErrorCode::ScenarioInvalid, "quantile must lie in (0, 1)");
  const int w = img.width, h = img.height;
  const std::size_t n = img.size();
  const Grid g = pixel_grid(w, h);
  const std::vector<double> ones(n, 1.0);
  const Eigen::Vector3d plane = fit_plane(g, img.depths, ones);

  Preprocessed p;
  p.width = w;
  p.height = h;
  p.residual.resize(n);
  for (std::size_t i = 0; i < n; ++i) p.residual[i] = img.depths[i] - (plane(0) + plane(1) * g.xs[i] + plane(2) * g.ys[i]);
  const double median = quantile_of(p.residual, 0.5);
  p.deviation.resize(n);
  simd::abs_deviation(p.residual, p.deviation, median);
  const double peak = simd::minmax(p.deviation).hi;
  if (!(peak > 1e-9)) throw Error(ErrorCode::EmptyMask, "no depth variation in the image");
  simd::kernels().affine(p.deviation.data(), p.deviation.data(), n, 0.0, 1.0 / peak);

  const double thr = quantile_of(p.deviation, cfg.quantile);
  BinaryMask raw(w, h);
  for (std::size_t i = 0; i < n; ++i) raw.data[i] = p.deviation[i] > thr;

  // keep the component with the largest deviation mass
  int count = 0;
  const std::vector<int> labels = imgproc::label_components(raw, &count);
  std::vector<double> mass(count + 1, 0.0);
  std::vector<int> area(count + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    mass[labels[i]] += labels[i] ? p.deviation[i] : 0.0;
    area[labels[i]] += 1;
  }
  int best = 0;
  for (int l = 1; l <= count; ++l) {
    if (best == 0 || mass[l] > mass[best]) best = l;
  }
  if (best == 0 || area[best] < cfg.min_area) throw Error(ErrorCode::EmptyMask, "no contact region above the minimum area");
  p.mask = BinaryMask(w, h);
  for (std::size_t i = 0; i < n; ++i) p.mask.data[i] = labels[i] == best;

  p.gray.resize(n);
  simd::normalize_255(p.residual, p.gray);

  std::vector<double> off(n);
  for (std::size_t i = 0; i < n; ++i) off[i] = p.mask.data[i] ? 0.0 : 1.0;
  p.background = fit_plane(g, img.depths, off);
  return p;
}

BinaryMask binarize(const DepthImage& img, double quantile) {
  ExtractionConfig cfg;
  cfg.quantile = quantile;
  return preprocess(img, cfg).mask;
}

ExtractedLine extract_ealf(const DepthImage& img, const ExtractionConfig& cfg) {
  const Preprocessed p = preprocess(img, cfg);
  const BinaryMask skeleton = imgproc::thin_zhang_suen(p.mask);
  const PixelSet px = mask_pixels(skeleton, p.deviation);
  if (px.xs.size() < 5) throw Error(ErrorCode::DegenerateFit, "skeleton has fewer than 5 pixels");
  // Thinning eats into the band where it is cut by the image border, so the
  // extent along the line comes from the contact region itself.
  ExtractedLine line = line_from_fit(imgproc::fit_line_weighted(px.xs, px.ys, px.ws), mask_pixels(p.mask, p.deviation));
  line.inlier_count = static_cast<int>(px.xs.size());
  return line;
}

ExtractedLine extract_eaef(const DepthImage& img, const ExtractionConfig& cfg) {
  const Preprocessed p = preprocess(img, cfg);
  const BinaryMask edges = imgproc::canny(p.gray, p.width, p.height, cfg.canny_low, cfg.canny_high);
  const BinaryMask thick = imgproc::dilate3x3(edges, cfg.dilate_iterations);
  int count = 0;
  const std::vector<int> labels = imgproc::label_components(thick, &count);
  std::vector<int> area(count + 1, 0);
  for (int l : labels) area[l] += l ? 1 : 0;
  // A ridge has two flanks, hence two edge chains; keep every substantial chain.
  const int largest = count > 0 ? *std::max_element(area.begin() + 1, area.end()) : 0;
  std::vector<Eigen::Vector2d> pts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] && area[labels[i]] * 5 >= largest) {
      pts.emplace_back(static_cast<double>(i % p.width), static_cast<double>(i / p.width));
    }
  }
  if (pts.size() < 6) throw Error(ErrorCode::DegenerateFit, "fewer than 6 edge pixels");
  return line_from_ellipse(imgproc::fit_ellipse(pts), static_cast<int>(pts.size()), cfg);
}

ExtractedLine extract_caef(const DepthImage& img, const ExtractionConfig& cfg) {
  const Preprocessed p = preprocess(img, cfg);
  const std::vector<Eigen::Vector2d> corners =
      imgproc::good_corners(p.mask, cfg.max_corners, cfg.corner_quality, cfg.corner_min_distance);
  if (corners.size() < 6) throw Error(ErrorCode::DegenerateFit, "fewer than 6 corners survive");
  return line_from_ellipse(imgproc::fit_ellipse(corners), static_cast<int>(corners.size()), cfg);
}

ExtractedLine extract_tsalf(const DepthImage& img, const ExtractionConfig& cfg) {
  const Preprocessed p = preprocess(img, cfg);
  const PixelSet px = mask_pixels(p.mask, p.deviation);
  return line_from_fit(imgproc::fit_line_weighted(px.xs, px.ys, px.ws), px);
}

ExtractedLine extract(Extractor which, const DepthImage& img, const ExtractionConfig& cfg) {
  switch (which) {
    case Extractor::EaLF: return extract_ealf(img, cfg);
    case Extractor::EaEF: return extract_eaef(img, cfg);
    case Extractor::CaEF: return extract_caef(img, cfg);
    case Extractor::TSaLF: return extract_tsalf(img, cfg);
  }
  return extract_tsalf(img, cfg);
}

std::pair<PointFeature, PointFeature> line_to_features(const ExtractedLine& line, const DepthImage& img,
                                                       const CameraIntrinsics& k, const ExtractionConfig& cfg) {
  const Preprocessed p = preprocess(img, cfg);
  const Eigen::Vector2d dir = line.direction();
  const double m = kBorderMarginPx;
  double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
  const double lo[2] = {m, m}, hi[2] = {k.width - m, k.height - m};
  for (int a = 0; a < 2; ++a) {
    const double o = line.midpoint(a), d = dir(a);
    if (std::abs(d) < 1e-12) {
      if (o < lo[a] || o > hi[a]) throw Error(ErrorCode::DegenerateFit, "extracted line misses the field of view");
      continue;
    }
    const double ta = (lo[a] - o) / d, tb = (hi[a] - o) / d;
    t0 = std::max(t0, std::min(ta, tb));
    t1 = std::min(t1, std::max(ta, tb));
  }
  if (!(t1 - t0 >= 1.0)) throw Error(ErrorCode::DegenerateFit, "extracted line misses the field of view");
  auto feature = [&](double t) {
    const Eigen::Vector2d q = line.midpoint + t * dir;
    return PointFeature{q.x(), q.y(), p.background(0) + p.background(1) * q.x() + p.background(2) * q.y()};
  };
  return {feature(t0), feature(t1)};
}

double distance_to_line(const Eigen::Vector2d& p, const Eigen::Vector4d& line) {
  const Eigen::Vector2d a(line(0), line(1)), b(line(2), line(3));
  const Eigen::Vector2d d = (b - a).normalized();
  const Eigen::Vector2d r = p - a;
  return std::abs(d.x() * r.y() - d.y() * r.x());
}

namespace {

/// Order-independent summary of a sample: sorted before summing.
struct Summary {
  double rms = 0.0, std = 0.0, mean = 0.0;
};

Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0, sq = 0.0;
  for (double x : v) {
    sum += x;
    sq += x * x;
  }
  const double n = static_cast<double>(v.size());
  s.mean = sum / n;
  s.rms = std::sqrt(sq / n);
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

double discrepancy_percent(const ExtractedLine& line, const Eigen::Vector4d& truth, double threshold) {
  const Eigen::Vector2d a = line.endpoints[0], b = line.endpoints[1];
  const int samples = std::max(2, static_cast<int>(std::ceil((b - a).norm())) + 1);
  int far = 0;
  for (int i = 0; i < samples; ++i) {
    const Eigen::Vector2d q = a + (b - a) * (static_cast<double>(i) / (samples - 1));
    far += distance_to_line(q, truth) > threshold;
  }
  return 100.0 * far / samples;
}

}  // namespace

ExtractionMetrics evaluate(const ExtractorFn& fn, const std::vector<LabeledImage>& dataset, const ExtractionConfig& cfg) {
  if (dataset.empty()) throw Error(ErrorCode::ScenarioInvalid, "evaluate needs a non-empty dataset");
  std::vector<double> pos, ori, disc, times;
  ExtractionMetrics m;
  for (const LabeledImage& item : dataset) {
    const auto start = std::chrono::steady_clock::now();
    try {
      const ExtractedLine line = fn(item.image);
      times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      const Eigen::Vector4d& t = item.truth;
      pos.push_back(distance_to_line(line.midpoint, t));
      ori.push_back(line_angle_error(line.orientation, std::atan2(t(3) - t(1), t(2) - t(0))));
      disc.push_back(discrepancy_percent(line, t, cfg.discrepancy_px));
    } catch (const Error&) {
      times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      disc.push_back(100.0);
      ++m.failures;
    }
  }
  const Summary sp = summarize(pos), so = summarize(ori), sd = summarize(disc), st = summarize(times);
  m.position_rmse = sp.rms;
  m.position_std = sp.std;
  m.orientation_rmse = so.rms;
  m.orientation_std = so.std;
  m.discrepancy_rate = sd.mean;
  m.runtime_mean = st.mean;
  m.runtime_std = st.std;
  m.evaluated = static_cast<int>(dataset.size());
  m.failure_rate = 100.0 * m.failures / m.evaluated;
  return m;
}

std::vector<LabeledImage> synthetic_dataset(int count, double noise_sigma, std::uint64_t seed, const CameraIntrinsics& k) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> lateral(-1.5e-3, 1.5e-3);
  std::uniform_real_distribution<double> depth(0.0190, 0.0210);
  std::uniform_real_distribution<double> tilt(-0.05, 0.05);

  ContourPath::Params line;
  line.kind = ContourKind::Line;
  line.origin = {-0.15, 0.0};
  line.length = 0.30;
  const WorldModel world{ContourPath(line), {}, 5e-4, 4e-4};

  std::vector<LabeledImage> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    const double heading = yaw(rng), offset = lateral(rng), d = depth(rng), roll = tilt(rng), pitch = tilt(rng);
    SensorState s{nominal_pose(world, {0.0, offset}, heading, d), 0.0};
    Vector6d tw = Vector6d::Zero();
    tw(3) = roll;
    tw(4) = pitch;
    s.pose = s.pose * se3_exp(tw);
    const GroundTruth gt = ground_truth_features(s, world, k);
    if (!gt.in_contact()) continue;
    LabeledImage item;
    item.image = render_depth_image(s, world, k, noise_sigma, seed * 1000003ULL + out.size());
    item.truth << gt.state->p1.u, gt.state->p1.v, gt.state->p2.u, gt.state->p2.v;
    out.push_back(std::move(item));
  }
  return out;
}

void write_dataset(const std::vector<LabeledImage>& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string());
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream stem;
    stem << std::setw(4) << std::setfill('0') << i;
    write_pgm16(data[i].image, dir / (stem.str() + ".pgm"));
    std::ofstream txt(dir / (stem.str() + ".txt"));
    txt << std::setprecision(17) << data[i].truth(0) << ' ' << data[i].truth(1) << ' ' << data[i].truth(2) << ' '
        << data[i].truth(3) << '\n';
    if (!txt) throw Error(ErrorCode::IoFailure, "cannot write ground truth in " + dir.string());
  }
}

std::vector<LabeledImage> read_dataset(const std::filesystem::path& dir, double pixel_pitch) {
  std::vector<std::filesystem::path> images;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".pgm") images.push_back(entry.path());
  }
  std::sort(images.begin(), images.end());
  std::vector<LabeledImage> out;
  for (const auto& path : images) {
    LabeledImage item;
    item.image = read_pgm16(path, pixel_pitch);
    std::ifstream txt(std::filesystem::path(path).replace_extension(".txt"));
    if (!(txt >> item.truth(0) >> item.truth(1) >> item.truth(2) >> item.truth(3))) {
      throw Error(ErrorCode::IoFailure, "missing or malformed ground truth for " + path.string());
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace vbt
