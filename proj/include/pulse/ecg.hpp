#pragma once

#include "pulse/hr.hpp"
#include "pulse/signal.hpp"

namespace pulse::ecg {

/// Two-moving-average QRS detector parameters.
struct QrsParams {
  double band_low_hz = 8.0;
  double band_high_hz = 20.0;
  int band_order = 3;
  double qrs_window_s = 0.120;
  double beat_window_s = 0.600;
  double offset_beta = 0.08;
  double min_block_s = 0.080;
  double refractory_s = 0.200;
};

/// R-peak indices. Throws InvalidArgument for a non-ECG series or a rate
/// below 100 Hz. A flat input yields an empty list.
PeakList detect_qrs(const TimeSeries& series, const QrsParams& params = {});

/// Windowed reference HR using the same window contract as the PPG pipeline
/// (no quality gate; at least one inter-beat interval per window).
HrSeries reference_hr(const TimeSeries& series, const HrParams& hr = {}, const QrsParams& qrs = {});

}  // namespace pulse::ecg
