#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "vbt/error.hpp"
#include "vbt/extraction.hpp"
#include "vbt/simd.hpp"

namespace vbt {

int BinaryMask::count() const { return static_cast<int>(std::count(data.begin(), data.end(), 1)); }

double canonical_line_angle(double angle) {
  double a = std::remainder(angle, std::numbers::pi);  // [-pi/2, pi/2]
  if (a <= -std::numbers::pi / 2) a += std::numbers::pi;
  return a;
}

double line_angle_error(double a, double b) { return std::abs(std::remainder(a - b, std::numbers::pi)); }

namespace imgproc {

namespace {

constexpr int kDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
constexpr int kDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};

}  // namespace

std::vector<int> label_components(const BinaryMask& mask, int* count) {
  const int w = mask.width, h = mask.height;
  std::vector<int> labels(mask.data.size(), 0);
  std::vector<int> stack;
  int next = 0;
  for (int i = 0; i < w * h; ++i) {
    if (!mask.data[i] || labels[i]) continue;
    labels[i] = ++next;
    stack.push_back(i);
    while (!stack.empty()) {
      const int j = stack.back();
      stack.pop_back();
      const int x = j % w, y = j / w;
      for (int d = 0; d < 8; ++d) {
        const int xx = x + kDx[d], yy = y + kDy[d];
        if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
        const int k = yy * w + xx;
        if (mask.data[k] && !labels[k]) {
          labels[k] = next;
          stack.push_back(k);
        }
      }
    }
  }
  if (count) *count = next;
  return labels;
}

BinaryMask thin_zhang_suen(const BinaryMask& mask) {
  const int w = mask.width, h = mask.height;
  BinaryMask img = mask;
  auto px = [&](int x, int y) -> int { return (x < 0 || y < 0 || x >= w || y >= h) ? 0 : img.at(x, y); };
  std::vector<int> marked;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      marked.clear();
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!img.at(x, y)) continue;
          // P2..P9 clockwise from north
          const int p[8] = {px(x, y - 1), px(x + 1, y - 1), px(x + 1, y), px(x + 1, y + 1),
                            px(x, y + 1), px(x - 1, y + 1), px(x - 1, y), px(x - 1, y - 1)};
          int b = 0, a = 0;
          for (int i = 0; i < 8; ++i) {
            b += p[i];
            a += (p[i] == 0 && p[(i + 1) % 8] == 1);
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool m1 = pass == 0 ? p[0] * p[2] * p[4] == 0 : p[0] * p[2] * p[6] == 0;
          const bool m2 = pass == 0 ? p[2] * p[4] * p[6] == 0 : p[0] * p[4] * p[6] == 0;
          if (m1 && m2) marked.push_back(y * w + x);
        }
      }
      for (int i : marked) img.data[i] = 0;
      changed = changed || !marked.empty();
    }
  }
  return img;
}

BinaryMask dilate3x3(const BinaryMask& mask, int iterations) {
  BinaryMask cur = mask;
  const int w = mask.width, h = mask.height;
  for (int it = 0; it < iterations; ++it) {
    BinaryMask next(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        std::uint8_t v = 0;
        for (int dy = -1; dy <= 1 && !v; ++dy) {
          for (int dx = -1; dx <= 1 && !v; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (xx >= 0 && yy >= 0 && xx < w && yy < h) v = cur.at(xx, yy);
          }
        }
        next.at(x, y) = v;
      }
    }
    cur = std::move(next);
  }
  return cur;
}

namespace {

/// Separable binomial [1 4 6 4 1]/16 smoothing, replicated borders.
std::vector<double> smooth5(const std::vector<double>& in, int w, int h) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = s;
    }
  }
  return out;
}

}  // namespace

BinaryMask canny(const std::vector<double>& gray, int w, int h, double low_frac, double high_frac) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const std::vector<double> blurred = smooth5(gray, w, h);
  std::vector<double> gx(n), gy(n), mag(n);
  simd::kernels().sobel(blurred.data(), w, h, gx.data(), gy.data());
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::hypot(gx[i], gy[i]);
  const double peak = *std::max_element(mag.begin(), mag.end());
  BinaryMask edges(w, h);
  if (!(peak > 0.0)) return edges;
  const double lo = low_frac * peak, hi = high_frac * peak;

  // non-maximum suppression along the quantised gradient direction
  std::vector<std::uint8_t> cls(n, 0);  // 0 none, 1 weak, 2 strong
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const int i = y * w + x;
      const double m = mag[i];
      if (m < lo) continue;
      const double ax = std::abs(gx[i]), ay = std::abs(gy[i]);
      int dx, dy;
      if (ay <= ax * 0.41421356237309503) {
        dx = 1, dy = 0;
      } else if (ax <= ay * 0.41421356237309503) {
        dx = 0, dy = 1;
      } else {
        dx = 1, dy = (gx[i] * gy[i] > 0) ? 1 : -1;
      }
      const double m1 = mag[(y + dy) * w + x + dx], m2 = mag[(y - dy) * w + x - dx];
      if (m > m1 && m >= m2) cls[i] = m >= hi ? 2 : 1;
    }
  }
  // hysteresis
  std::vector<int> stack;
  for (std::size_t i = 0; i < n; ++i) {
    if (cls[i] == 2) {
      edges.data[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  }
  while (!stack.empty()) {
    const int j = stack.back();
    stack.pop_back();
    const int x = j % w, y = j / w;
    for (int d = 0; d < 8; ++d) {
      const int xx = x + kDx[d], yy = y + kDy[d];
      if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
      const int k = yy * w + xx;
      if (cls[k] == 1 && !edges.data[k]) {
        edges.data[k] = 1;
        stack.push_back(k);
      }
    }
  }
  return edges;
}

std::vector<Eigen::Vector2d> good_corners(const BinaryMask& mask, int max_corners, double quality,
                                          double min_distance) {
  // Zero padding so a region cut by the image border still has corners there.
  constexpr int pad = 3;
  const int w = mask.width + 2 * pad, h = mask.height + 2 * pad;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> img(n, 0.0), gx(n), gy(n), eig(n);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) img[(y + pad) * w + x + pad] = mask.at(x, y) ? 255.0 : 0.0;
  }
  const simd::Kernels& k = simd::kernels();
  k.sobel(img.data(), w, h, gx.data(), gy.data());
  k.min_eigen(gx.data(), gy.data(), w, h, eig.data());
  const double peak = *std::max_element(eig.begin(), eig.end());
  std::vector<Eigen::Vector2d> out;
  if (!(peak > 0.0)) return out;
  const double thr = quality * peak;

  struct Candidate {
    double response;
    int index;
  };
  std::vector<Candidate> cands;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double v = eig[y * w + x];
      if (v < thr) continue;
      bool is_max = true;
      for (int d = 0; d < 8 && is_max; ++d) is_max = v >= eig[(y + kDy[d]) * w + x + kDx[d]];
      if (is_max) cands.push_back({v, y * w + x});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.response > b.response; });
  const double d2 = min_distance * min_distance;
  for (const Candidate& c : cands) {
    const Eigen::Vector2d p(c.index % w - pad, c.index / w - pad);
    const bool far = std::all_of(out.begin(), out.end(), [&](const Eigen::Vector2d& q) { return (p - q).squaredNorm() >= d2; });
    if (!far) continue;
    out.push_back(p);
    if (static_cast<int>(out.size()) >= max_corners) break;
  }
  return out;
}

Ellipse fit_ellipse(const std::vector<Eigen::Vector2d>& pts) {
  const int n = static_cast<int>(pts.size());
  if (n < 6) throw Error(ErrorCode::DegenerateFit, "ellipse fit needs 6 points, got " + std::to_string(n));
  // normalise for conditioning
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= n;
  double spread = 0.0;
  for (const auto& p : pts) spread += (p - mean).squaredNorm();
  spread = std::sqrt(spread / n);
  if (!(spread > 0.0)) throw Error(ErrorCode::DegenerateFit, "ellipse fit on coincident points");

  Eigen::MatrixXd d1(n, 3), d2(n, 3);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d q = (pts[i] - mean) / spread;
    d1.row(i) << q.x() * q.x(), q.x() * q.y(), q.y() * q.y();
    d2.row(i) << q.x(), q.y(), 1.0;
  }
  const Eigen::Matrix3d s1 = d1.transpose() * d1, s2 = d1.transpose() * d2, s3 = d2.transpose() * d2;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(s3);
  if (!lu.isInvertible()) throw Error(ErrorCode::DegenerateFit, "collinear points");
  const Eigen::Matrix3d t = -lu.solve(s2.transpose());
  const Eigen::Matrix3d m = s1 + s2 * t;
  Eigen::Matrix3d reduced;
  reduced.row(0) = m.row(2) / 2.0;
  reduced.row(1) = -m.row(1);
  reduced.row(2) = m.row(0) / 2.0;
  Eigen::EigenSolver<Eigen::Matrix3d> es(reduced);
  int pick = -1;
  double best = 0.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = es.eigenvectors().col(i).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    if (cond > best) {
      best = cond;
      pick = i;
    }
  }
  if (pick < 0) throw Error(ErrorCode::DegenerateFit, "no elliptic solution");
  const Eigen::Vector3d a1 = es.eigenvectors().col(pick).real();
  const Eigen::Vector3d a2 = t * a1;
  double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);
  if (A + C < 0) {
    A = -A, B = -B, C = -C, D = -D, E = -E, F = -F;
  }
  Eigen::Matrix2d quad;
  quad << A, B / 2, B / 2, C;
  const Eigen::Vector2d c0 = quad.ldlt().solve(Eigen::Vector2d(-D / 2, -E / 2));
  const double f0 = F + 0.5 * (D * c0.x() + E * c0.y());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> qe(quad);
  const double l0 = qe.eigenvalues()(0), l1 = qe.eigenvalues()(1);  // ascending
  if (!(l0 > 0.0) || !(f0 < 0.0)) throw Error(ErrorCode::DegenerateFit, "conic is not an ellipse");
  Ellipse e;
  e.center = mean + spread * c0;
  e.semi_major = spread * std::sqrt(-f0 / l0);
  e.semi_minor = spread * std::sqrt(-f0 / l1);
  const Eigen::Vector2d axis = qe.eigenvectors().col(0);
  e.angle = canonical_line_angle(std::atan2(axis.y(), axis.x()));
  if (!std::isfinite(e.semi_major) || !e.center.allFinite()) throw Error(ErrorCode::DegenerateFit, "ellipse fit diverged");
  return e;
}

WeightedLine fit_line_weighted(const std::vector<double>& xs, const std::vector<double>& ys,
                               const std::vector<double>& ws) {
  const simd::Moments m = simd::weighted_moments(xs, ys, ws);
  if (!(m.w > 0.0)) throw Error(ErrorCode::DegenerateFit, "line fit with zero total weight");
  const double cx = m.wx / m.w, cy = m.wy / m.w;
  const double sxx = m.wxx / m.w - cx * cx, syy = m.wyy / m.w - cy * cy, sxy = m.wxy / m.w - cx * cy;
  if (!(sxx + syy > 0.0)) throw Error(ErrorCode::DegenerateFit, "line fit on a single point");
  return {{cx, cy}, canonical_line_angle(0.5 * std::atan2(2.0 * sxy, sxx - syy))};
}

}  // namespace imgproc
}  // namespace vbt
