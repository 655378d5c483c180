#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vbt/depth_image.hpp"
#include "vbt/geometry.hpp"

namespace vbt {

struct ExtractionConfig {
  double quantile = 0.90;       // binarization quantile of the depth deviation
  int min_area = 50;            // px; smaller components count as no contact
  double canny_low = 0.1;       // fraction of the peak gradient magnitude
  double canny_high = 0.3;
  int dilate_iterations = 2;
  int max_corners = 20;
  double corner_quality = 0.05;
  double corner_min_distance = 8.0;  // px
  double min_axis_ratio = 1.2;       // ellipses rounder than this have no dominant axis
  double discrepancy_px = 5.0;
};

enum class Extractor { EaLF, EaEF, CaEF, TSaLF };

const char* to_string(Extractor e);
Extractor extractor_from_string(const std::string& name);
inline constexpr std::array<Extractor, 4> kAllExtractors{Extractor::EaLF, Extractor::EaEF, Extractor::CaEF,
                                                         Extractor::TSaLF};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;
  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0) {}
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  int count() const;
};

/// Depth image reduced to the contact signal.
struct Preprocessed {
  int width = 0;
  int height = 0;
  std::vector<double> residual;   // depth minus the least-squares plane
  std::vector<double> deviation;  // |residual - median|, scaled to [0, 1]
  std::vector<double> gray;       // residual min-max normalised to [0, 255]
  BinaryMask mask;                // thresholded deviation, one component
  Eigen::Vector3d background;     // plane a + b*u + c*v fitted off the mask
};

/// Throws EmptyMask when there is no contact signal.
Preprocessed preprocess(const DepthImage& img, const ExtractionConfig& cfg = {});
BinaryMask binarize(const DepthImage& img, double quantile);

struct ExtractedLine {
  Eigen::Vector2d midpoint = Eigen::Vector2d::Zero();  // px
  double orientation = 0.0;                            // (-pi/2, pi/2]
  std::array<Eigen::Vector2d, 2> endpoints{Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
  int inlier_count = 0;
  Eigen::Vector2d direction() const { return {std::cos(orientation), std::sin(orientation)}; }
};

ExtractedLine extract_ealf(const DepthImage& img, const ExtractionConfig& cfg = {});
ExtractedLine extract_eaef(const DepthImage& img, const ExtractionConfig& cfg = {});
ExtractedLine extract_caef(const DepthImage& img, const ExtractionConfig& cfg = {});
ExtractedLine extract_tsalf(const DepthImage& img, const ExtractionConfig& cfg = {});
ExtractedLine extract(Extractor which, const DepthImage& img, const ExtractionConfig& cfg = {});

/// Endpoint features for the controller: the extracted line clipped to the
/// 10 px border band, depths read from the background plane.
std::pair<PointFeature, PointFeature> line_to_features(const ExtractedLine& line, const DepthImage& img,
                                                       const CameraIntrinsics& k,
                                                       const ExtractionConfig& cfg = {});

// Building blocks, exposed for testing.
namespace imgproc {

/// 8-connected labelling; labels start at 1, 0 is background.
std::vector<int> label_components(const BinaryMask& mask, int* count);
BinaryMask thin_zhang_suen(const BinaryMask& mask);
BinaryMask dilate3x3(const BinaryMask& mask, int iterations);
BinaryMask canny(const std::vector<double>& gray, int w, int h, double low_frac, double high_frac);
/// Shi-Tomasi corners, strongest first, at least min_distance apart.
std::vector<Eigen::Vector2d> good_corners(const BinaryMask& mask, int max_corners, double quality, double min_distance);

struct Ellipse {
  Eigen::Vector2d center;
  double semi_major = 0.0;
  double semi_minor = 0.0;
  double angle = 0.0;  // major axis, (-pi/2, pi/2]
};
/// Direct least-squares ellipse fit; throws DegenerateFit when the points do
/// not determine an ellipse.
Ellipse fit_ellipse(const std::vector<Eigen::Vector2d>& pts);

struct WeightedLine {
  Eigen::Vector2d centroid;
  double angle;  // (-pi/2, pi/2]
};
/// Principal axis of the weighted point cloud (orthogonal least squares).
WeightedLine fit_line_weighted(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::vector<double>& ws);

}  // namespace imgproc

/// Canonical line angle in (-pi/2, pi/2].
double canonical_line_angle(double angle);
/// Unsigned angle between two lines, in [0, pi/2].
double line_angle_error(double a, double b);

struct LabeledImage {
  DepthImage image;
  Eigen::Vector4d truth;  // u1 v1 u2 v2 of the ground-truth centreline
};

struct ExtractionMetrics {
  double position_rmse = 0.0;     // px
  double position_std = 0.0;      // px
  double orientation_rmse = 0.0;  // rad
  double orientation_std = 0.0;   // rad
  double discrepancy_rate = 0.0;  // percent
  double runtime_mean = 0.0;      // ms
  double runtime_std = 0.0;       // ms
  double failure_rate = 0.0;      // percent
  int evaluated = 0;
  int failures = 0;
};

using ExtractorFn = std::function<ExtractedLine(const DepthImage&)>;
/// Failed frames count as 100% discrepancy and are left out of the RMSE terms.
ExtractionMetrics evaluate(const ExtractorFn& fn, const std::vector<LabeledImage>& dataset,
                           const ExtractionConfig& cfg = {});
/// Distance from p to the infinite line through the truth endpoints.
double distance_to_line(const Eigen::Vector2d& p, const Eigen::Vector4d& line);

/// Random straight-ridge frames with ground truth from the plant model.
std::vector<LabeledImage> synthetic_dataset(int count, double noise_sigma, std::uint64_t seed,
                                            const CameraIntrinsics& k = {});
/// NNNN.pgm plus NNNN.txt ("u1 v1 u2 v2") per frame.
void write_dataset(const std::vector<LabeledImage>& data, const std::filesystem::path& dir);
std::vector<LabeledImage> read_dataset(const std::filesystem::path& dir, double pixel_pitch = 6.0e-5);

}  // namespace vbt
