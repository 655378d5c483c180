#pragma once

#include <cstddef>
#include <span>

// Image and reduction kernels with a portable scalar path and an AVX2 path.
// The AVX2 path is picked at runtime when the CPU supports it; elementwise
// kernels are bit-identical across paths, reductions agree to rounding.

namespace vbt::simd {

enum class Isa { Scalar, Avx2 };

const char* to_string(Isa isa);
bool avx2_supported();
/// Kernel set in use. Defaults to the best supported one; the VBT_SIMD
/// environment variable ("scalar") can pin the portable path.
Isa active_isa();
/// Pins the kernel set (tests and benchmarks). Requesting Avx2 on a CPU
/// without it falls back to Scalar; the effective choice is returned.
Isa set_isa(Isa isa);

struct MinMax {
  double lo;
  double hi;
};

struct Moments {
  double w = 0, wx = 0, wy = 0, wxx = 0, wxy = 0, wyy = 0;
};

/// Kernel table; one instance per ISA.
struct Kernels {
  MinMax (*minmax)(const double* x, std::size_t n);
  /// out = (x - lo) * scale
  void (*affine)(const double* x, double* out, std::size_t n, double lo, double scale);
  /// out = |x - c|
  void (*abs_deviation)(const double* x, double* out, std::size_t n, double c);
  Moments (*weighted_moments)(const double* x, const double* y, const double* w, std::size_t n);
  /// 3x3 Sobel with replicated borders; gx, gy are w*h.
  void (*sobel)(const double* img, int w, int h, double* gx, double* gy);
  /// Smaller eigenvalue of the 3x3-box structure tensor (replicated borders).
  void (*min_eigen)(const double* gx, const double* gy, int w, int h, double* out);
};

const Kernels& kernels(Isa isa);
inline const Kernels& kernels() { return kernels(active_isa()); }

namespace scalar {
extern const Kernels table;
}
namespace avx2 {
/// Null entries when the library was built without AVX2 support.
extern const Kernels table;
bool compiled();
}  // namespace avx2

// Convenience wrappers over the active table.
MinMax minmax(std::span<const double> x);
void normalize_255(std::span<const double> x, std::span<double> out);
void abs_deviation(std::span<const double> x, std::span<double> out, double c);
Moments weighted_moments(std::span<const double> x, std::span<const double> y, std::span<const double> w);

}  // namespace vbt::simd
