#include "pulse/ecg.hpp"

#include <algorithm>
#include <cmath>

#include "pulse/error.hpp"
#include "pulse/filter.hpp"
#include "pulse/kernels.hpp"

namespace pulse::ecg {
namespace {

// Centred moving average with an odd window of `w` samples, shrinking at the
// edges.
std::vector<double> moving_average(const std::vector<double>& x, std::size_t w) {
  const std::size_t n = x.size();
  const std::size_t half = w / 2;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i > half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

std::size_t odd_samples(double seconds, double rate) {
  std::size_t w = std::max<std::size_t>(1, samples_for(seconds, rate));
  return w % 2 == 1 ? w : w + 1;
}

}  // namespace

PeakList detect_qrs(const TimeSeries& series, const QrsParams& params) {
  if (series.channel() != Channel::ECG_LEAD_II) {
    throw Error(ErrorCode::InvalidArgument, "QRS detection expects a Lead II ECG series");
  }
  const double rate = series.sample_rate_hz();
  if (rate < 100.0) {
    throw Error(ErrorCode::InvalidArgument, "QRS detection needs at least 100 Hz sampling");
  }
  const auto sos = filter::butter_bandpass(params.band_order, params.band_low_hz, params.band_high_hz, rate);
  const auto filtered =
      filter::sosfiltfilt(sos, series.samples(), 3 * (2 * static_cast<std::size_t>(params.band_order) + 1));

  std::vector<double> energy(filtered.size());
  kernels::square(filtered, energy);
  const double mean_energy = kernels::sum(energy) / static_cast<double>(energy.size());
  if (!(mean_energy > 0.0)) return {};

  const auto ma_qrs = moving_average(energy, odd_samples(params.qrs_window_s, rate));
  const auto ma_beat = moving_average(energy, odd_samples(params.beat_window_s, rate));
  const double offset = params.offset_beta * mean_energy;
  const std::size_t min_block = samples_for(params.min_block_s, rate);

  std::vector<std::size_t> candidates;
  const std::size_t n = energy.size();
  for (std::size_t i = 0; i < n;) {
    if (!(ma_qrs[i] > ma_beat[i] + offset)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && ma_qrs[j] > ma_beat[j] + offset) ++j;
    if (j - i >= min_block) {
      const auto top = std::max_element(filtered.begin() + static_cast<std::ptrdiff_t>(i),
                                        filtered.begin() + static_cast<std::ptrdiff_t>(j));
      candidates.push_back(static_cast<std::size_t>(top - filtered.begin()));
    }
    i = j;
  }

  const auto refractory = static_cast<std::size_t>(std::ceil(params.refractory_s * rate - 1e-9));
  PeakList out;
  for (std::size_t c : candidates) {
    if (!out.indices.empty() && c - out.indices.back() < refractory) {
      if (filtered[c] > filtered[out.indices.back()]) out.indices.back() = c;
      continue;
    }
    out.indices.push_back(c);
  }
  return out;
}

HrSeries reference_hr(const TimeSeries& series, const HrParams& hr, const QrsParams& qrs) {
  if (series.duration_s() + 1e-9 < hr.window_len_s) {
    throw Error(ErrorCode::SeriesTooShort, "ECG series is shorter than one heart-rate window");
  }
  return windowed_hr(series, detect_qrs(series, qrs), hr);
}

}  // namespace pulse::ecg
