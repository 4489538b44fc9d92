#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace pulse {

enum class Channel { PPG, ECG_LEAD_II };

std::string_view to_string(Channel channel);
Channel channel_from_string(std::string_view text);

/// Uniformly sampled signal. Construction validates the invariants: a
/// positive rate, at least one sample, and every sample finite.
class TimeSeries {
 public:
  TimeSeries(std::vector<double> samples, double sample_rate_hz, double start_epoch_s,
             Channel channel);

  std::span<const double> samples() const noexcept { return samples_; }
  double sample_rate_hz() const noexcept { return rate_; }
  double start_epoch_s() const noexcept { return start_; }
  Channel channel() const noexcept { return channel_; }

  std::size_t size() const noexcept { return samples_.size(); }
  double duration_s() const noexcept { return static_cast<double>(samples_.size()) / rate_; }
  double time_at(std::size_t index) const noexcept {
    return start_ + static_cast<double>(index) / rate_;
  }

  /// Same rate, channel and timing, different sample values. Length must match.
  TimeSeries with_samples(std::vector<double> samples) const;
  /// Sub-range [first, first + count) with the epoch advanced accordingly.
  TimeSeries slice(std::size_t first, std::size_t count) const;

  friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

 private:
  std::vector<double> samples_;
  double rate_;
  double start_;
  Channel channel_;
};

struct Window {
  std::size_t start_index = 0;
  std::size_t length = 0;
  double start_time_s = 0.0;

  friend bool operator==(const Window&, const Window&) = default;
};

inline constexpr double kDefaultTrimSeconds = 60.0;
inline constexpr double kDefaultWindowSeconds = 30.0;
inline constexpr double kDefaultHopSeconds = 30.0;

/// Drops the first and last `trim_s` seconds (device calibration).
/// Throws SeriesTooShort unless the duration exceeds 2 * trim_s.
TimeSeries trim_calibration(const TimeSeries& series, double trim_s = kDefaultTrimSeconds);

/// Fully-contained windows at hop spacing; a partial tail is dropped.
std::vector<Window> windows(const TimeSeries& series, double len_s, double hop_s);

/// Number of samples spanning `seconds` at `rate_hz`, rounded to nearest.
std::size_t samples_for(double seconds, double rate_hz);

}  // namespace pulse
