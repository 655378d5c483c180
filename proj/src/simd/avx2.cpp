#include "vbt/simd.hpp"

#if defined(VBT_HAVE_AVX2)

#include <immintrin.h>

#include "simd_common.hpp"

namespace vbt::simd::avx2 {

namespace {

double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

MinMax minmax(const double* x, std::size_t n) {
  if (n < 4) return scalar::table.minmax(x, n);
  __m256d lo = _mm256_loadu_pd(x), hi = lo;
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    lo = _mm256_min_pd(lo, v);
    hi = _mm256_max_pd(hi, v);
  }
  alignas(32) double l[4], h[4];
  _mm256_store_pd(l, lo);
  _mm256_store_pd(h, hi);
  MinMax m{std::min(std::min(l[0], l[1]), std::min(l[2], l[3])), std::max(std::max(h[0], h[1]), std::max(h[2], h[3]))};
  for (; i < n; ++i) {
    m.lo = std::min(m.lo, x[i]);
    m.hi = std::max(m.hi, x[i]);
  }
  return m;
}

void affine(const double* x, double* out, std::size_t n, double lo, double scale) {
  const __m256d vlo = _mm256_set1_pd(lo), vs = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), vlo), vs));
  for (; i < n; ++i) out[i] = (x[i] - lo) * scale;
}

void abs_deviation(const double* x, double* out, std::size_t n, double c) {
  const __m256d vc = _mm256_set1_pd(c), sign = _mm256_set1_pd(-0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_andnot_pd(sign, _mm256_sub_pd(_mm256_loadu_pd(x + i), vc)));
  }
  for (; i < n; ++i) out[i] = std::abs(x[i] - c);
}

Moments weighted_moments(const double* x, const double* y, const double* w, std::size_t n) {
  __m256d sw = _mm256_setzero_pd(), sx = sw, sy = sw, sxx = sw, sxy = sw, syy = sw;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vx = _mm256_loadu_pd(x + i), vy = _mm256_loadu_pd(y + i), vw = _mm256_loadu_pd(w + i);
    const __m256d wx = _mm256_mul_pd(vw, vx), wy = _mm256_mul_pd(vw, vy);
    sw = _mm256_add_pd(sw, vw);
    sx = _mm256_add_pd(sx, wx);
    sy = _mm256_add_pd(sy, wy);
    sxx = _mm256_add_pd(sxx, _mm256_mul_pd(wx, vx));
    sxy = _mm256_add_pd(sxy, _mm256_mul_pd(wx, vy));
    syy = _mm256_add_pd(syy, _mm256_mul_pd(wy, vy));
  }
  Moments m{hsum(sw), hsum(sx), hsum(sy), hsum(sxx), hsum(sxy), hsum(syy)};
  const Moments tail = scalar::table.weighted_moments(x + i, y + i, w + i, n - i);
  m.w += tail.w;
  m.wx += tail.wx;
  m.wy += tail.wy;
  m.wxx += tail.wxx;
  m.wxy += tail.wxy;
  m.wyy += tail.wyy;
  return m;
}

void sobel(const double* img, int w, int h, double* gx, double* gy) {
  const __m256d two = _mm256_set1_pd(2.0);
  for (int y = 0; y < h; ++y) {
    if (y == 0 || y == h - 1 || w < 6) {
      for (int x = 0; x < w; ++x) detail::sobel_at(img, w, h, x, y, gx, gy);
      continue;
    }
    const double* r0 = img + (y - 1) * w;
    const double* r1 = img + y * w;
    const double* r2 = img + (y + 1) * w;
    detail::sobel_at(img, w, h, 0, y, gx, gy);
    int x = 1;
    for (; x + 4 <= w - 1; x += 4) {
      const __m256d a0 = _mm256_loadu_pd(r0 + x - 1), a1 = _mm256_loadu_pd(r0 + x), a2 = _mm256_loadu_pd(r0 + x + 1);
      const __m256d b0 = _mm256_loadu_pd(r1 + x - 1), b2 = _mm256_loadu_pd(r1 + x + 1);
      const __m256d c0 = _mm256_loadu_pd(r2 + x - 1), c1 = _mm256_loadu_pd(r2 + x), c2 = _mm256_loadu_pd(r2 + x + 1);
      const __m256d right = _mm256_add_pd(_mm256_add_pd(a2, _mm256_mul_pd(two, b2)), c2);
      const __m256d left = _mm256_add_pd(_mm256_add_pd(a0, _mm256_mul_pd(two, b0)), c0);
      const __m256d bottom = _mm256_add_pd(_mm256_add_pd(c0, _mm256_mul_pd(two, c1)), c2);
      const __m256d top = _mm256_add_pd(_mm256_add_pd(a0, _mm256_mul_pd(two, a1)), a2);
      _mm256_storeu_pd(gx + y * w + x, _mm256_sub_pd(right, left));
      _mm256_storeu_pd(gy + y * w + x, _mm256_sub_pd(bottom, top));
    }
    for (; x < w; ++x) detail::sobel_at(img, w, h, x, y, gx, gy);
  }
}

void min_eigen(const double* gx, const double* gy, int w, int h, double* out) {
  const __m256d half = _mm256_set1_pd(0.5);
  for (int y = 0; y < h; ++y) {
    if (y == 0 || y == h - 1 || w < 6) {
      for (int x = 0; x < w; ++x) out[y * w + x] = detail::min_eigen_at(gx, gy, w, h, x, y);
      continue;
    }
    out[y * w] = detail::min_eigen_at(gx, gy, w, h, 0, y);
    int x = 1;
    for (; x + 4 <= w - 1; x += 4) {
      __m256d a = _mm256_setzero_pd(), b = a, c = a;
      for (int dy = -1; dy <= 1; ++dy) {
        __m256d ra = _mm256_setzero_pd(), rb = ra, rc = ra;
        for (int dx = -1; dx <= 1; ++dx) {
          const int i = (y + dy) * w + x + dx;
          const __m256d vx = _mm256_loadu_pd(gx + i), vy = _mm256_loadu_pd(gy + i);
          ra = _mm256_add_pd(ra, _mm256_mul_pd(vx, vx));
          rb = _mm256_add_pd(rb, _mm256_mul_pd(vx, vy));
          rc = _mm256_add_pd(rc, _mm256_mul_pd(vy, vy));
        }
        a = _mm256_add_pd(a, ra);
        b = _mm256_add_pd(b, rb);
        c = _mm256_add_pd(c, rc);
      }
      const __m256d hd = _mm256_mul_pd(half, _mm256_sub_pd(a, c));
      const __m256d root = _mm256_sqrt_pd(_mm256_add_pd(_mm256_mul_pd(hd, hd), _mm256_mul_pd(b, b)));
      _mm256_storeu_pd(out + y * w + x, _mm256_sub_pd(_mm256_mul_pd(half, _mm256_add_pd(a, c)), root));
    }
    for (; x < w; ++x) out[y * w + x] = detail::min_eigen_at(gx, gy, w, h, x, y);
  }
}

}  // namespace

const Kernels table{minmax, affine, abs_deviation, weighted_moments, sobel, min_eigen};
bool compiled() { return true; }

}  // namespace vbt::simd::avx2

#else

namespace vbt::simd::avx2 {
const Kernels table{nullptr, nullptr, nullptr, nullptr, nullptr, nullptr};
bool compiled() { return false; }
}  // namespace vbt::simd::avx2

#endif
