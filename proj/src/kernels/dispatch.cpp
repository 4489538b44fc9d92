#include <atomic>
#include <cstdlib>
#include <string>

#include "pulse/kernels.hpp"

namespace pulse::kernels {

#if defined(PULSE_HAVE_AVX2)
const Table& avx2_kernels();
#endif
#if defined(PULSE_HAVE_NEON)
const Table& neon_kernels();
#endif

const Table* avx2_table() {
#if defined(PULSE_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_kernels() : nullptr;
#else
  return nullptr;
#endif
}

const Table* neon_table() {
#if defined(PULSE_HAVE_NEON)
  return &neon_kernels();
#else
  return nullptr;
#endif
}

namespace {

const Table* by_name(std::string_view name) {
  if (name == "scalar") return &scalar_table();
  if (name == "avx2") return avx2_table();
  if (name == "neon") return neon_table();
  return nullptr;
}

const Table* detect() {
  if (const char* forced = std::getenv("PULSE_SIMD")) {
    if (const Table* t = by_name(forced)) return t;
  }
  if (const Table* t = avx2_table()) return t;
  if (const Table* t = neon_table()) return t;
  return &scalar_table();
}

std::atomic<const Table*>& slot() {
  static std::atomic<const Table*> current{detect()};
  return current;
}

}  // namespace

const Table& active() { return *slot().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const Table* t = by_name(name);
  if (t == nullptr) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

}  // namespace pulse::kernels
