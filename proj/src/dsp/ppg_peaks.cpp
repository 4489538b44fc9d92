#include <algorithm>
#include <cmath>
#include <set>

#include "pulse/ppg.hpp"

namespace pulse::ppg {
namespace {

// Linear-interpolated percentile of `v` (reordered in place).
double percentile(std::vector<double>& v, double pct) {
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo + 1), v.end());
  return a + frac * (b - a);
}

}  // namespace

std::vector<std::size_t> find_systolic_peaks(std::span<const double> x, double rate_hz,
                                             const PeakParams& params,
                                             const std::vector<bool>* allowed) {
  const std::size_t n = x.size();
  if (n < 3) return {};
  auto ok = [&](std::size_t i) { return allowed == nullptr || (*allowed)[i]; };
  const std::size_t half = samples_for(params.threshold_window_s, rate_hz) / 2;
  const auto refractory = static_cast<std::size_t>(std::ceil(params.refractory_s * rate_hz - 1e-9));

  struct Candidate {
    std::size_t index;
    double value;
  };
  std::vector<Candidate> candidates;
  std::vector<double> local;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!ok(i) || !(x[i] > x[i - 1]) || !(x[i] >= x[i + 1])) continue;
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    local.clear();
    for (std::size_t j = lo; j <= hi; ++j) {
      if (ok(j)) local.push_back(x[j]);
    }
    if (!(x[i] > percentile(local, params.threshold_percentile))) continue;
    // Prominence within the threshold window: walk out to a higher sample or
    // the window edge and take the higher of the two minima.
    double left_min = x[i], right_min = x[i];
    for (std::size_t j = i; j > lo && x[j - 1] <= x[i]; --j) left_min = std::min(left_min, x[j - 1]);
    for (std::size_t j = i; j < hi && x[j + 1] <= x[i]; ++j) right_min = std::min(right_min, x[j + 1]);
    const auto [wlo, whi] = std::minmax_element(x.begin() + static_cast<std::ptrdiff_t>(lo),
                                                x.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    if (x[i] - std::max(left_min, right_min) < params.min_prominence * (*whi - *wlo)) continue;
    candidates.push_back({i, x[i]});
  }

  // Larger peaks claim their refractory neighbourhood first.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
  std::set<std::size_t> kept;
  for (const Candidate& c : candidates) {
    auto next = kept.lower_bound(c.index);
    if (next != kept.end() && *next - c.index < refractory) continue;
    if (next != kept.begin() && c.index - *std::prev(next) < refractory) continue;
    kept.insert(c.index);
  }
  return {kept.begin(), kept.end()};
}

PeakList detect_peaks(const TimeSeries& series, const QualityMask& mask, const PeakParams& params) {
  const auto clean = mask.clean_samples(series.size(), series.sample_rate_hz());
  if (std::none_of(clean.begin(), clean.end(), [](bool b) { return b; })) return {};
  return {find_systolic_peaks(series.samples(), series.sample_rate_hz(), params, &clean)};
}

}  // namespace pulse::ppg
