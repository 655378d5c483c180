#pragma once

#include <algorithm>
#include <cmath>

// Per-pixel reference formulas shared by both kernel sets. The vector code
// evaluates the same expressions in the same order so results are identical.

namespace vbt::simd::detail {
namespace {  // internal linkage: this header is also compiled with -mavx2

inline int clampi(int v, int lo, int hi) { return std::min(std::max(v, lo), hi); }

inline void sobel_at(const double* img, int w, int h, int x, int y, double* gx, double* gy) {
  const int xm = clampi(x - 1, 0, w - 1), xp = clampi(x + 1, 0, w - 1);
  const double* r0 = img + clampi(y - 1, 0, h - 1) * w;
  const double* r1 = img + y * w;
  const double* r2 = img + clampi(y + 1, 0, h - 1) * w;
  gx[y * w + x] = ((r0[xp] + 2.0 * r1[xp]) + r2[xp]) - ((r0[xm] + 2.0 * r1[xm]) + r2[xm]);
  gy[y * w + x] = ((r2[xm] + 2.0 * r2[x]) + r2[xp]) - ((r0[xm] + 2.0 * r0[x]) + r0[xp]);
}

inline double eig_min(double a, double b, double c) {
  const double half_diff = 0.5 * (a - c);
  return 0.5 * (a + c) - std::sqrt(half_diff * half_diff + b * b);
}

inline double min_eigen_at(const double* gx, const double* gy, int w, int h, int x, int y) {
  double a = 0.0, b = 0.0, c = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    const int yy = clampi(y + dy, 0, h - 1);
    double ra = 0.0, rb = 0.0, rc = 0.0;
    for (int dx = -1; dx <= 1; ++dx) {
      const int i = yy * w + clampi(x + dx, 0, w - 1);
      ra += gx[i] * gx[i];
      rb += gx[i] * gy[i];
      rc += gy[i] * gy[i];
    }
    a += ra;
    b += rb;
    c += rc;
  }
  return eig_min(a, b, c);
}

}  // namespace
}  // namespace vbt::simd::detail
