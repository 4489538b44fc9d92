#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace pulse::filter {

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

using Sos = std::vector<Biquad>;

/// Digital Butterworth high-pass via the bilinear transform (prewarped).
/// Unity gain at Nyquist.
Sos butter_highpass(int order, double cutoff_hz, double sample_rate_hz);

/// Digital Butterworth band-pass of prototype order `order` (2*order poles).
/// Unity gain at the prewarped geometric centre frequency.
Sos butter_bandpass(int order, double low_hz, double high_hz, double sample_rate_hz);

std::complex<double> response(const Sos& sos, double freq_hz, double sample_rate_hz);

/// Causal filtering, zero initial state.
std::vector<double> sosfilt(const Sos& sos, std::span<const double> x);

/// Forward-backward (zero-phase) filtering. The signal is extended by odd
/// reflection of `pad` samples at each end and each pass starts from the
/// steady state for the first input sample.
std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x, std::size_t pad);

}  // namespace pulse::filter
