#include "vbt/depth_image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "vbt/error.hpp"

namespace vbt {

bool DepthImage::valid() const {
  if (depths.size() != static_cast<std::size_t>(width) * height) return false;
  return std::all_of(depths.begin(), depths.end(), [](double d) { return std::isfinite(d) && d > 0.0; });
}

void write_pgm16(const DepthImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
  for (double d : img.depths) {
    const long um = std::lround(std::clamp(d * 1e6, 0.0, 65535.0));
    const unsigned char bytes[2] = {static_cast<unsigned char>(um >> 8), static_cast<unsigned char>(um & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 2);
  }
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

namespace {

std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    return tok;
  }
  return {};
}

}  // namespace

DepthImage read_pgm16(const std::filesystem::path& path, double pixel_pitch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  if (next_token(in) != "P5") throw Error(ErrorCode::IoFailure, "not a binary PGM: " + path.string());
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (maxval != 65535) throw Error(ErrorCode::IoFailure, "expected 16-bit PGM: " + path.string());
  in.get();
  DepthImage img(w, h, pixel_pitch);
  for (double& d : img.depths) {
    unsigned char bytes[2];
    if (!in.read(reinterpret_cast<char*>(bytes), 2)) throw Error(ErrorCode::IoFailure, "truncated PGM: " + path.string());
    d = ((bytes[0] << 8) | bytes[1]) * 1e-6;
  }
  return img;
}

}  // namespace vbt
