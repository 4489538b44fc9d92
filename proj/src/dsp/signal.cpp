#include "pulse/signal.hpp"

#include <cmath>
#include <string>

#include <fmt/format.h>

#include "pulse/error.hpp"

namespace pulse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteSample: return "NonFiniteSample";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::InvalidWindowSpec: return "InvalidWindowSpec";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::ZeroReference: return "ZeroReference";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::OverlapConflict: return "OverlapConflict";
    case ErrorCode::UserNotFound: return "UserNotFound";
    case ErrorCode::NoRecordingAtTime: return "NoRecordingAtTime";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BackendTimeout: return "BackendTimeout";
    case ErrorCode::PlanningFailed: return "PlanningFailed";
    case ErrorCode::NeedsClarification: return "NeedsClarification";
    case ErrorCode::ResponseMalformed: return "ResponseMalformed";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::UnboundReference: return "UnboundReference";
    case ErrorCode::TaskFailed: return "TaskFailed";
  }
  return "Unknown";
}

std::string_view to_string(Channel channel) {
  return channel == Channel::PPG ? "PPG" : "ECG_LEAD_II";
}

Channel channel_from_string(std::string_view text) {
  if (text == "PPG" || text == "ppg") return Channel::PPG;
  if (text == "ECG_LEAD_II" || text == "ECG" || text == "ecg" || text == "ecg_lead_ii") {
    return Channel::ECG_LEAD_II;
  }
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown modality '{}'", text));
}

TimeSeries::TimeSeries(std::vector<double> samples, double sample_rate_hz, double start_epoch_s,
                       Channel channel)
    : samples_(std::move(samples)), rate_(sample_rate_hz), start_(start_epoch_s), channel_(channel) {
  if (!(rate_ > 0.0) || !std::isfinite(rate_)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("sample rate must be positive, got {}", rate_));
  }
  if (samples_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "time series needs at least one sample");
  }
  if (!std::isfinite(start_)) {
    throw Error(ErrorCode::InvalidArgument, "start epoch must be finite");
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i])) {
      throw Error(ErrorCode::NonFiniteSample, fmt::format("sample {} is not finite", i),
                  {{"index", i}});
    }
  }
}

TimeSeries TimeSeries::with_samples(std::vector<double> samples) const {
  if (samples.size() != samples_.size()) {
    throw Error(ErrorCode::InvalidArgument, "replacement samples must keep the series length");
  }
  return TimeSeries(std::move(samples), rate_, start_, channel_);
}

TimeSeries TimeSeries::slice(std::size_t first, std::size_t count) const {
  if (count == 0 || first + count > samples_.size()) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("slice [{}, {}) outside series of {} samples", first, first + count,
                            samples_.size()));
  }
  std::vector<double> part(samples_.begin() + static_cast<std::ptrdiff_t>(first),
                           samples_.begin() + static_cast<std::ptrdiff_t>(first + count));
  return TimeSeries(std::move(part), rate_, time_at(first), channel_);
}

std::size_t samples_for(double seconds, double rate_hz) {
  return static_cast<std::size_t>(std::llround(seconds * rate_hz));
}

TimeSeries trim_calibration(const TimeSeries& series, double trim_s) {
  if (trim_s < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "trim duration must be nonnegative");
  }
  if (trim_s == 0.0) return series;
  const std::size_t trim = samples_for(trim_s, series.sample_rate_hz());
  if (!(series.duration_s() > 2.0 * trim_s) || series.size() <= 2 * trim) {
    throw Error(ErrorCode::SeriesTooShort,
                fmt::format("series of {} s cannot lose {} s at each end", series.duration_s(),
                            trim_s));
  }
  return series.slice(trim, series.size() - 2 * trim);
}

std::vector<Window> windows(const TimeSeries& series, double len_s, double hop_s) {
  if (!(len_s > 0.0) || !(hop_s > 0.0)) {
    throw Error(ErrorCode::InvalidWindowSpec, "window length and hop must be positive");
  }
  const double rate = series.sample_rate_hz();
  const std::size_t len = samples_for(len_s, rate);
  const std::size_t hop = samples_for(hop_s, rate);
  if (len == 0 || hop == 0) {
    throw Error(ErrorCode::InvalidWindowSpec, "window length or hop shorter than one sample");
  }
  if (len > series.size()) {
    throw Error(ErrorCode::InvalidWindowSpec,
                fmt::format("window of {} s exceeds series duration {} s", len_s,
                            series.duration_s()));
  }
  std::vector<Window> out;
  out.reserve((series.size() - len) / hop + 1);
  for (std::size_t start = 0; start + len <= series.size(); start += hop) {
    out.push_back({start, len, series.time_at(start)});
  }
  return out;
}

}  // namespace pulse
