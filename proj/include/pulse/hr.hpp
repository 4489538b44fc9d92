#pragma once

#include <cstddef>
#include <vector>

#include "pulse/signal.hpp"

namespace pulse {

/// Strictly increasing sample indices of detected beats.
struct PeakList {
  std::vector<std::size_t> indices;

  friend bool operator==(const PeakList&, const PeakList&) = default;
};

/// Windowed heart rate. NaN marks a window that failed its gates.
struct HrSeries {
  std::vector<double> window_start_s;
  std::vector<double> bpm;

  std::size_t size() const noexcept { return bpm.size(); }
  std::size_t valid_count() const;
};

enum class IbiAggregation { Mean, Median };

struct HrParams {
  double window_len_s = kDefaultWindowSeconds;
  double hop_s = kDefaultHopSeconds;
  double min_clean_coverage = 0.8;
  IbiAggregation aggregation = IbiAggregation::Mean;
};

/// Shared windowing contract for PPG and ECG heart rate. Per window, the
/// inter-beat intervals are taken between consecutive peaks inside the window
/// (skipping intervals that cross a non-clean sample when `clean` is given);
/// bpm = 60 / aggregate(IBI). A window with clean coverage below the gate or
/// without at least one interval yields NaN.
HrSeries windowed_hr(const TimeSeries& series, const PeakList& peaks, const HrParams& params,
                     const std::vector<bool>* clean = nullptr);

}  // namespace pulse
