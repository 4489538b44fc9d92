#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel arithmetic used by the signal pipelines and the evaluation
// metrics. Each kernel exists as a scalar reference plus vectorized variants;
// the active table is chosen once at startup from CPU features and can be
// pinned with PULSE_SIMD=scalar|avx2|neon.

namespace pulse::kernels {

struct Moments {
  double m2 = 0.0;  // sum (x - mean)^2
  double m3 = 0.0;  // sum (x - mean)^3
  double m4 = 0.0;  // sum (x - mean)^4
};

struct Table {
  std::string_view name;
  double (*sum)(const double* x, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_abs_diff)(const double* a, const double* b, std::size_t n);
  double (*sum_sq_diff)(const double* a, const double* b, std::size_t n);
  void (*square)(const double* x, double* out, std::size_t n);
  Moments (*central_moments)(const double* x, std::size_t n, double mean);
};

const Table& scalar_table();
/// nullptr when the variant is not compiled in or the CPU lacks support.
const Table* avx2_table();
const Table* neon_table();

const Table& active();
/// Overrides dispatch; returns false if the named variant is unavailable.
bool select(std::string_view name);

inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum_abs_diff(std::span<const double> a, std::span<const double> b) {
  return active().sum_abs_diff(a.data(), b.data(), a.size());
}
inline double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  return active().sum_sq_diff(a.data(), b.data(), a.size());
}
inline void square(std::span<const double> x, std::span<double> out) {
  active().square(x.data(), out.data(), x.size());
}
inline Moments central_moments(std::span<const double> x, double mean) {
  return active().central_moments(x.data(), x.size(), mean);
}

}  // namespace pulse::kernels
