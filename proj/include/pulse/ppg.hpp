#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pulse/hr.hpp"
#include "pulse/signal.hpp"

namespace pulse::ppg {

enum class Quality : unsigned char { CLEAN, NOISY };

/// One label per consecutive segment of `segment_len_s`; the last segment may
/// be partial.
struct QualityMask {
  double segment_len_s = 2.0;
  std::vector<Quality> labels;

  std::size_t segment_samples(double rate_hz) const;
  /// Per-sample CLEAN flags for a series of `n` samples at `rate_hz`.
  std::vector<bool> clean_samples(std::size_t n, double rate_hz) const;
  std::size_t clean_count() const;

  friend bool operator==(const QualityMask&, const QualityMask&) = default;
};

struct QualityRules {
  double segment_len_s = 2.0;
  double amplitude_lo = 0.1;   // x median segment peak-to-peak, also applied per half segment
  double amplitude_hi = 10.0;
  double max_abs_skewness = 3.0;
  double max_kurtosis = 10.0;  // Pearson (normal = 3)
  double min_autocorr = 0.8;
  double min_bpm = 40.0;
  double max_bpm = 200.0;
  double band_lo_hz = 0.5;
  double band_hi_hz = 3.5;
  double min_band_power_fraction = 0.75;
};

struct SegmentFeatures {
  double peak_to_peak = 0.0;
  double half_peak_to_peak = 0.0;  // smaller of the two half-segment ranges
  double skewness = 0.0;
  double kurtosis = 0.0;
  double autocorr_peak = 0.0;  // best local maximum within the heart-rate lag range
  double band_power_fraction = 0.0;
  bool degenerate = true;      // too short or zero variance
};

struct ReconstructionParams {
  double max_gap_s = 15.0;
  double flank_s = 5.0;
  double crossfade_s = 0.25;
};

struct PeakParams {
  double threshold_window_s = 2.0;
  double threshold_percentile = 60.0;
  double refractory_s = 0.3;
  double min_prominence = 0.25;  // x range of the threshold window
};

struct PipelineConfig {
  double cutoff_hz = 0.5;
  int filter_order = 4;
  QualityRules quality;
  ReconstructionParams reconstruction;
  PeakParams peaks;
  HrParams hr;
};

/// Zero-phase Butterworth high-pass. Throws InvalidArgument for a non-PPG
/// series and InvalidCutoff when the cutoff is at or above Nyquist.
TimeSeries highpass_filter(const TimeSeries& series, double cutoff_hz = 0.5, int order = 4);

SegmentFeatures segment_features(std::span<const double> segment, double rate_hz,
                                 const QualityRules& rules = {});

/// Applies the amplitude, shape, periodicity and spectral rules per segment.
/// `reference_p2p` is the recording's median segment peak-to-peak.
bool segment_is_clean(const SegmentFeatures& f, double reference_p2p, const QualityRules& rules);

QualityMask assess_quality(const TimeSeries& series, const QualityRules& rules = {});

struct Reconstruction {
  TimeSeries series;
  QualityMask mask;
};

/// Replaces short NOISY runs flanked by clean signal with template-tiled
/// beats; everything else is returned untouched. When the unfiltered `raw`
/// series is given, corruption inside a run is localized on it instead of on
/// the filtered samples.
Reconstruction reconstruct(const TimeSeries& series, const QualityMask& mask,
                           const ReconstructionParams& params = {},
                           const PeakParams& peak_params = {},
                           const TimeSeries* raw = nullptr);

/// Systolic peaks of an unmasked signal range (used on clean flanks).
std::vector<std::size_t> find_systolic_peaks(std::span<const double> x, double rate_hz,
                                             const PeakParams& params = {},
                                             const std::vector<bool>* allowed = nullptr);

PeakList detect_peaks(const TimeSeries& series, const QualityMask& mask,
                      const PeakParams& params = {});

struct PipelineTrace {
  TimeSeries filtered;
  QualityMask assessed;
  Reconstruction reconstructed;
  PeakList peaks;
  HrSeries hr;
};

/// Full chain with every intermediate retained.
PipelineTrace run_pipeline(const TimeSeries& raw, const PipelineConfig& config = {});

/// filter -> assess -> reconstruct -> detect peaks -> windowed HR.
/// Throws SeriesTooShort when the series is shorter than one window.
HrSeries estimate_hr(const TimeSeries& raw, const PipelineConfig& config = {});

}  // namespace pulse::ppg
