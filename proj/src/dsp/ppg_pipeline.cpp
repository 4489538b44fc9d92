#include "pulse/error.hpp"
#include "pulse/ppg.hpp"

namespace pulse::ppg {

PipelineTrace run_pipeline(const TimeSeries& raw, const PipelineConfig& config) {
  if (raw.duration_s() + 1e-9 < config.hr.window_len_s) {
    throw Error(ErrorCode::SeriesTooShort, "PPG series is shorter than one heart-rate window");
  }
  TimeSeries filtered = highpass_filter(raw, config.cutoff_hz, config.filter_order);
  QualityMask assessed = assess_quality(filtered, config.quality);
  Reconstruction rec = reconstruct(filtered, assessed, config.reconstruction, config.peaks, &raw);
  PeakList peaks = detect_peaks(rec.series, rec.mask, config.peaks);
  const auto clean = rec.mask.clean_samples(rec.series.size(), rec.series.sample_rate_hz());
  HrSeries hr = windowed_hr(rec.series, peaks, config.hr, &clean);
  return {std::move(filtered), std::move(assessed), std::move(rec), std::move(peaks), std::move(hr)};
}

HrSeries estimate_hr(const TimeSeries& raw, const PipelineConfig& config) {
  return run_pipeline(raw, config).hr;
}

}  // namespace pulse::ppg
