#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace vbt {

/// Row-major grid of contact depths in metres.
struct DepthImage {
  int width = 320;
  int height = 240;
  double pixel_pitch = 6.0e-5;
  std::vector<double> depths;

  DepthImage() = default;
  DepthImage(int w, int h, double pitch, double fill = 0.0)
      : width(w), height(h), pixel_pitch(pitch), depths(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return depths[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return depths[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return depths.size(); }
  std::span<const double> view() const { return depths; }
  /// All depths finite and positive.
  bool valid() const;
};

/// 16-bit binary PGM, depth stored in micrometres (clamped to [0, 65535]).
void write_pgm16(const DepthImage& img, const std::filesystem::path& path);
DepthImage read_pgm16(const std::filesystem::path& path, double pixel_pitch = 6.0e-5);

}  // namespace vbt
