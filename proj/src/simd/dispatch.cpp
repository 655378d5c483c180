#include <atomic>
#include <cstdlib>
#include <cstring>

#include "vbt/error.hpp"
#include "vbt/simd.hpp"

namespace vbt::simd {

namespace {

Isa detect() {
  const char* env = std::getenv("VBT_SIMD");
  if (env && std::strcmp(env, "scalar") == 0) return Isa::Scalar;
  return avx2_supported() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return avx2::compiled() && __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa set_isa(Isa isa) {
  if (isa == Isa::Avx2 && !avx2_supported()) isa = Isa::Scalar;
  current().store(isa, std::memory_order_relaxed);
  return isa;
}

const Kernels& kernels(Isa isa) { return isa == Isa::Avx2 && avx2_supported() ? avx2::table : scalar::table; }

MinMax minmax(std::span<const double> x) {
  if (x.empty()) throw Error(ErrorCode::EmptyMask, "minmax of an empty range");
  return kernels().minmax(x.data(), x.size());
}

void normalize_255(std::span<const double> x, std::span<double> out) {
  const MinMax m = minmax(x);
  const double range = m.hi - m.lo;
  kernels().affine(x.data(), out.data(), x.size(), m.lo, range > 0.0 ? 255.0 / range : 0.0);
}

void abs_deviation(std::span<const double> x, std::span<double> out, double c) {
  kernels().abs_deviation(x.data(), out.data(), x.size(), c);
}

Moments weighted_moments(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
  return kernels().weighted_moments(x.data(), y.data(), w.data(), x.size());
}

}  // namespace vbt::simd
