#include "pulse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

namespace pulse::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Gaussian bump added over +-5 sigma.
void add_gaussian(std::vector<double>& x, double rate, double centre_s, double sigma_s, double amp) {
  const double lo = std::ceil((centre_s - 5.0 * sigma_s) * rate);
  const double hi = std::floor((centre_s + 5.0 * sigma_s) * rate);
  const double n = static_cast<double>(x.size());
  for (double i = std::max(0.0, lo); i <= std::min(hi, n - 1.0); i += 1.0) {
    const double d = (i / rate - centre_s) / sigma_s;
    x[static_cast<std::size_t>(i)] += amp * std::exp(-0.5 * d * d);
  }
}

}  // namespace

TimeSeries harmonic_ppg(double fundamental_hz, double duration_s, double rate_hz, double start_epoch_s) {
  const std::size_t n = samples_for(duration_s, rate_hz);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = kTwoPi * fundamental_hz * static_cast<double>(i) / rate_hz;
    x[i] = std::sin(theta) + 0.5 * std::sin(2.0 * theta);
  }
  return TimeSeries(std::move(x), rate_hz, start_epoch_s, Channel::PPG);
}

std::vector<double> regular_beats(double bpm, double duration_s, double first_beat_s) {
  std::vector<double> beats;
  const double ibi = 60.0 / bpm;
  for (double t = first_beat_s; t < duration_s; t += ibi) beats.push_back(t);
  return beats;
}

std::vector<double> jittered_beats(double bpm, double duration_s, double jitter, Rng& rng) {
  std::vector<double> beats;
  const double ibi = 60.0 / bpm;
  double t = uniform(rng, 0.1, 0.1 + ibi);
  while (t < duration_s) {
    beats.push_back(t);
    t += ibi * (1.0 + uniform(rng, -jitter, jitter));
  }
  return beats;
}

std::vector<double> drifting_beats(double lo_bpm, double hi_bpm, double duration_s, double jitter,
                                   Rng& rng) {
  const double span = hi_bpm - lo_bpm;
  const double mid = uniform(rng, lo_bpm + 0.25 * span, hi_bpm - 0.25 * span);
  const double a1 = uniform(rng, 0.15, 0.45) * span;
  const double t1 = uniform(rng, 300.0, 900.0);
  const double p1 = uniform(rng, 0.0, kTwoPi);
  const double a2 = uniform(rng, 0.03, 0.1) * span;
  const double t2 = uniform(rng, 60.0, 200.0);
  const double p2 = uniform(rng, 0.0, kTwoPi);
  auto rate_at = [&](double t) {
    const double v = mid + a1 * std::sin(kTwoPi * t / t1 + p1) + a2 * std::sin(kTwoPi * t / t2 + p2);
    return std::clamp(v, lo_bpm, hi_bpm);
  };
  std::vector<double> beats;
  double t = -2.0 + uniform(rng, 0.0, 60.0 / rate_at(0.0));
  while (t < duration_s + 2.0) {
    beats.push_back(t);
    t += 60.0 / rate_at(t) * (1.0 + uniform(rng, -jitter, jitter));
  }
  return beats;
}

TimeSeries ppg_from_beats(const std::vector<double>& beats, double duration_s, double rate_hz,
                          const PpgStyle& style, Rng& rng, double start_epoch_s) {
  const std::size_t n = samples_for(duration_s, rate_hz);
  std::vector<double> amps(beats.size());
  for (double& a : amps) a = style.amplitude * (1.0 + uniform(rng, -style.amplitude_jitter, style.amplitude_jitter));
  const double w1 = uniform(rng, 0.01, 0.03);
  const double wp = uniform(rng, 0.0, kTwoPi);
  std::normal_distribution<double> noise(0.0, 1.0);
  // Phase of the waveform maximum: root of cos(t) + 2h cos(2t) = 0.
  const double h = style.harmonic;
  const double peak_theta =
      h > 0.0 ? std::acos((-1.0 + std::sqrt(1.0 + 32.0 * h * h)) / (8.0 * h)) : std::numbers::pi / 2.0;

  std::vector<double> x(n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate_hz - style.pulse_delay_s;
    while (k + 1 < beats.size() && beats[k + 1] <= t) ++k;
    double v = 0.0;
    if (beats.size() >= 2) {
      double b0 = beats[k];
      double b1 = k + 1 < beats.size() ? beats[k + 1] : b0 + (beats[k] - beats[k - 1]);
      double a0 = amps[k];
      double a1 = k + 1 < amps.size() ? amps[k + 1] : a0;
      if (t < b0) {  // before the first beat: extend backwards one period
        b1 = b0;
        b0 = beats[0] - (beats[1] - beats[0]);
        a1 = a0;
      }
      const double phase = (t - b0) / (b1 - b0);
      const double theta = kTwoPi * phase + peak_theta;
      const double amp = a0 + std::clamp(phase, 0.0, 1.0) * (a1 - a0);
      v = amp * (std::sin(theta) + h * std::sin(2.0 * theta));
    }
    const double ts = static_cast<double>(i) / rate_hz;
    v += style.dc_offset + style.wander_amplitude * style.amplitude * std::sin(kTwoPi * w1 * ts + wp);
    if (style.noise_sigma > 0.0) v += style.noise_sigma * style.amplitude * noise(rng);
    x[i] = v;
  }
  return TimeSeries(std::move(x), rate_hz, start_epoch_s, Channel::PPG);
}

TimeSeries ecg_from_beats(const std::vector<double>& beats, double duration_s, double rate_hz,
                          EcgStyle style, Rng& rng, double start_epoch_s) {
  const std::size_t n = samples_for(duration_s, rate_hz);
  std::vector<double> x(n, 0.0);
  for (std::size_t k = 0; k < beats.size(); ++k) {
    const double b = beats[k];
    add_gaussian(x, rate_hz, b, 0.010, 1.0);
    if (style == EcgStyle::Realistic) {
      const double rr = k + 1 < beats.size() ? beats[k + 1] - b : (k > 0 ? b - beats[k - 1] : 1.0);
      const double scale = std::sqrt(std::clamp(rr, 0.25, 2.0));
      add_gaussian(x, rate_hz, b - 0.025, 0.008, -0.12);
      add_gaussian(x, rate_hz, b + 0.025, 0.008, -0.25);
      add_gaussian(x, rate_hz, b - 0.16 * scale, 0.025, 0.12);
      add_gaussian(x, rate_hz, b + 0.28 * scale, 0.045, 0.30);
    }
  }
  if (style == EcgStyle::Realistic) {
    std::normal_distribution<double> noise(0.0, 0.01);
    const double p1 = uniform(rng, 0.0, kTwoPi);
    const double p2 = uniform(rng, 0.0, kTwoPi);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate_hz;
      x[i] += 0.15 * std::sin(kTwoPi * 0.2 * t + p1) + 0.1 * std::sin(kTwoPi * 0.05 * t + p2) + noise(rng);
    }
  }
  return TimeSeries(std::move(x), rate_hz, start_epoch_s, Channel::ECG_LEAD_II);
}

void add_noise_burst(std::vector<double>& samples, std::size_t first, std::size_t last, double sigma,
                     Rng& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  for (std::size_t i = first; i < std::min(last, samples.size()); ++i) samples[i] += noise(rng);
}

double truth_bpm(const std::vector<double>& beats, double t0, double len) {
  const auto lo = std::lower_bound(beats.begin(), beats.end(), t0);
  const auto hi = std::lower_bound(lo, beats.end(), t0 + len);
  const auto count = hi - lo;
  if (count < 2) return std::nan("");
  return 60.0 * static_cast<double>(count - 1) / (*(hi - 1) - *lo);
}

namespace {

std::vector<double> split_lengths(double total, double nominal, double jitter, double max_len, Rng& rng) {
  if (total <= 0.0) return {};
  const auto count = static_cast<std::size_t>(std::max(1.0, std::ceil(total / nominal)));
  std::vector<double> w(count);
  double sum = 0.0;
  for (double& v : w) {
    v = 1.0 + uniform(rng, -jitter, jitter);
    sum += v;
  }
  for (double& v : w) v = std::min(max_len, v * total / sum);
  return w;
}

}  // namespace

std::vector<CorpusRecording> make_corpus(const CorpusSpec& spec) {
  Rng rng(spec.seed);
  std::vector<CorpusRecording> corpus;
  corpus.reserve(spec.recordings);
  const std::size_t users = std::max<std::size_t>(1, spec.users);
  for (std::size_t r = 0; r < spec.recordings; ++r) {
    const std::size_t user = r % users;
    const std::size_t slot = r / users;
    const double start = spec.start_epoch_s + static_cast<double>(user) * 86400.0 +
                         static_cast<double>(slot) * spec.recording_spacing_s;
    Rng local(spec.seed ^ (0x9E3779B97F4A7C15ULL * (r + 1)));

    auto beats = drifting_beats(spec.hr_lo_bpm, spec.hr_hi_bpm, spec.duration_s, 0.01, local);
    PpgStyle style;
    style.amplitude = 50.0;
    style.dc_offset = 2000.0 + uniform(local, -200.0, 200.0);
    style.pulse_delay_s = uniform(local, 0.15, 0.3);
    style.wander_amplitude = 2.0;
    style.noise_sigma = 0.03;
    style.amplitude_jitter = 0.1;
    auto ppg = ppg_from_beats(beats, spec.duration_s, spec.ppg_rate_hz, style, local, start);
    auto ecg = ecg_from_beats(beats, spec.duration_s, spec.ecg_rate_hz, EcgStyle::Realistic, local, start);

    // Corrupted time is split evenly between short (reconstructable) and long bursts.
    const double corrupted = spec.corrupted_fraction * spec.duration_s;
    auto lengths = split_lengths(corrupted / 2.0, 10.0, 0.3, spec.short_burst_max_s, local);
    const auto longs = split_lengths(corrupted / 2.0, 30.0, 0.3, 1e9, local);
    for (double& l : lengths) l = std::max(l, 1.0);
    lengths.insert(lengths.end(), longs.begin(), longs.end());
    std::shuffle(lengths.begin(), lengths.end(), local);

    double total = 0.0;
    for (double l : lengths) total += l;
    constexpr double kMinClean = 8.0;
    const double spare = std::max(0.0, spec.duration_s - total - kMinClean * static_cast<double>(lengths.size() + 1));
    std::vector<double> gaps(lengths.size() + 1);
    double gsum = 0.0;
    for (double& g : gaps) {
      g = uniform(local, 0.0, 1.0);
      gsum += g;
    }
    std::vector<double> samples(ppg.samples().begin(), ppg.samples().end());
    std::vector<Burst> bursts;
    double t = 0.0;
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      t += kMinClean + gaps[b] / gsum * spare;
      bursts.push_back({t, lengths[b]});
      const double sigma = uniform(local, 1.5, 4.0) * style.amplitude;
      add_noise_burst(samples, samples_for(t, spec.ppg_rate_hz), samples_for(t + lengths[b], spec.ppg_rate_hz),
                      sigma, local);
      t += lengths[b];
    }

    corpus.push_back({fmt::format("s{:02d}", user + 1), ppg.with_samples(std::move(samples)), std::move(ecg),
                      std::move(beats), std::move(bursts)});
  }
  return corpus;
}

}  // namespace pulse::synth
