#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pulse/signal.hpp"

// Deterministic synthetic PPG/ECG generators with known beat locations. Used
// by the test suites, the acceptance harness and the `synth` CLI command.

namespace pulse::synth {

using Rng = std::mt19937_64;

/// sin(theta) + 0.5 sin(2 theta) at the given fundamental, zero mean. The
/// waveform has one maximum per cycle, at theta = pi/3.
TimeSeries harmonic_ppg(double fundamental_hz, double duration_s, double rate_hz = 20.0,
                        double start_epoch_s = 0.0);

/// Beat times (seconds from the series start) at a constant rate.
std::vector<double> regular_beats(double bpm, double duration_s, double first_beat_s = 0.25);

/// Beat times with relative IBI jitter drawn uniformly from [-jitter, jitter].
std::vector<double> jittered_beats(double bpm, double duration_s, double jitter, Rng& rng);

/// Beat times whose instantaneous rate wanders smoothly inside [lo, hi] BPM.
std::vector<double> drifting_beats(double lo_bpm, double hi_bpm, double duration_s, double jitter,
                                   Rng& rng);

struct PpgStyle {
  double amplitude = 1.0;
  double dc_offset = 0.0;
  double pulse_delay_s = 0.0;      // systolic peak lag after the beat time
  double wander_amplitude = 0.0;   // slow baseline drift, in pulse amplitudes
  double noise_sigma = 0.0;        // white noise, in pulse amplitudes
  double amplitude_jitter = 0.0;   // per-beat relative amplitude variation
  double harmonic = 0.35;          // second-harmonic ratio; below 0.5 the decay has no flat shoulder
};

/// PPG whose systolic peaks sit at beat + pulse_delay.
TimeSeries ppg_from_beats(const std::vector<double>& beats, double duration_s, double rate_hz,
                          const PpgStyle& style, Rng& rng, double start_epoch_s = 0.0);

enum class EcgStyle { Spikes, Realistic };

/// Lead II ECG with R peaks at the beat times.
TimeSeries ecg_from_beats(const std::vector<double>& beats, double duration_s, double rate_hz,
                          EcgStyle style, Rng& rng, double start_epoch_s = 0.0);

/// Adds zero-mean Gaussian noise of `sigma` to samples [first, last).
void add_noise_burst(std::vector<double>& samples, std::size_t first, std::size_t last, double sigma,
                     Rng& rng);

/// Mean-IBI heart rate from ground-truth beat times inside [t0, t0 + len).
double truth_bpm(const std::vector<double>& beats, double t0, double len);

struct Burst {
  double start_s;
  double duration_s;
};

struct CorpusSpec {
  std::size_t recordings = 50;
  std::size_t users = 10;
  double duration_s = 900.0;
  double ppg_rate_hz = 20.0;
  double ecg_rate_hz = 512.0;
  double hr_lo_bpm = 55.0;
  double hr_hi_bpm = 110.0;
  double corrupted_fraction = 0.2;
  double short_burst_max_s = 15.0;
  double start_epoch_s = 1564041600.0;  // 2019-07-25T08:00:00Z
  double recording_spacing_s = 1800.0;
  std::uint64_t seed = 20190725;
};

struct CorpusRecording {
  std::string user_id;
  TimeSeries ppg;
  TimeSeries ecg;
  std::vector<double> beats;  // seconds from the recording start
  std::vector<Burst> bursts;
};

std::vector<CorpusRecording> make_corpus(const CorpusSpec& spec);

}  // namespace pulse::synth
