#include <algorithm>
#include <cmath>

#include "simd_common.hpp"
#include "vbt/simd.hpp"

namespace vbt::simd::scalar {

namespace {

MinMax minmax(const double* x, std::size_t n) {
  MinMax m{x[0], x[0]};
  for (std::size_t i = 1; i < n; ++i) {
    m.lo = std::min(m.lo, x[i]);
    m.hi = std::max(m.hi, x[i]);
  }
  return m;
}

void affine(const double* x, double* out, std::size_t n, double lo, double scale) {
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - lo) * scale;
}

void abs_deviation(const double* x, double* out, std::size_t n, double c) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::abs(x[i] - c);
}

Moments weighted_moments(const double* x, const double* y, const double* w, std::size_t n) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) {
    const double wx = w[i] * x[i], wy = w[i] * y[i];
    m.w += w[i];
    m.wx += wx;
    m.wy += wy;
    m.wxx += wx * x[i];
    m.wxy += wx * y[i];
    m.wyy += wy * y[i];
  }
  return m;
}

void sobel(const double* img, int w, int h, double* gx, double* gy) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) detail::sobel_at(img, w, h, x, y, gx, gy);
  }
}

void min_eigen(const double* gx, const double* gy, int w, int h, double* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out[y * w + x] = detail::min_eigen_at(gx, gy, w, h, x, y);
  }
}

}  // namespace

const Kernels table{minmax, affine, abs_deviation, weighted_moments, sobel, min_eigen};

}  // namespace vbt::simd::scalar
