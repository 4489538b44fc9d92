#include "pulse/hr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pulse/error.hpp"

namespace pulse {

std::size_t HrSeries::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(bpm.begin(), bpm.end(), [](double v) { return !std::isnan(v); }));
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

HrSeries windowed_hr(const TimeSeries& series, const PeakList& peaks, const HrParams& params,
                     const std::vector<bool>* clean) {
  if (series.duration_s() + 1e-9 < params.window_len_s) {
    throw Error(ErrorCode::SeriesTooShort, "series is shorter than one heart-rate window");
  }
  const auto wins = windows(series, params.window_len_s, params.hop_s);
  const double rate = series.sample_rate_hz();
  const std::size_t n = series.size();

  // noisy_before[i] = number of non-clean samples in [0, i)
  std::vector<std::size_t> noisy_before(n + 1, 0);
  if (clean != nullptr) {
    for (std::size_t i = 0; i < n; ++i) noisy_before[i + 1] = noisy_before[i] + ((*clean)[i] ? 0 : 1);
  }
  auto noisy_in = [&](std::size_t first, std::size_t last_inclusive) {
    return noisy_before[last_inclusive + 1] - noisy_before[first];
  };

  HrSeries out;
  out.window_start_s.reserve(wins.size());
  out.bpm.reserve(wins.size());
  std::vector<double> ibis;
  for (const Window& w : wins) {
    out.window_start_s.push_back(w.start_time_s);
    const std::size_t end = w.start_index + w.length;
    const double coverage =
        1.0 - static_cast<double>(noisy_in(w.start_index, end - 1)) / static_cast<double>(w.length);
    if (coverage + 1e-12 < params.min_clean_coverage) {
      out.bpm.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    auto lo = std::lower_bound(peaks.indices.begin(), peaks.indices.end(), w.start_index);
    auto hi = std::lower_bound(lo, peaks.indices.end(), end);
    ibis.clear();
    for (auto it = lo; it != hi && std::next(it) != hi; ++it) {
      const std::size_t a = *it;
      const std::size_t b = *std::next(it);
      if (noisy_in(a, b) != 0) continue;
      ibis.push_back(static_cast<double>(b - a) / rate);
    }
    if (ibis.empty()) {
      out.bpm.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double ibi = 0.0;
    if (params.aggregation == IbiAggregation::Median) {
      ibi = median_of(ibis);
    } else {
      for (double v : ibis) ibi += v;
      ibi /= static_cast<double>(ibis.size());
    }
    out.bpm.push_back(60.0 / ibi);
  }
  return out;
}

}  // namespace pulse
