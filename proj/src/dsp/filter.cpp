#include "pulse/filter.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "pulse/error.hpp"

namespace pulse::filter {
namespace {

using cplx = std::complex<double>;

// Left-half-plane poles of the normalized analog Butterworth prototype.
std::vector<cplx> prototype_poles(int order) {
  std::vector<cplx> poles;
  poles.reserve(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1.0 + order) / (2.0 * order);
    poles.emplace_back(std::cos(theta), std::sin(theta));
  }
  return poles;
}

double prewarp(double freq_hz, double fs) { return 2.0 * fs * std::tan(std::numbers::pi * freq_hz / fs); }

cplx bilinear(cplx s, double fs) { return (2.0 * fs + s) / (2.0 * fs - s); }

// Groups digital poles into conjugate pairs (or pairs of real poles) and emits
// one denominator per pair, in order of increasing pole radius.
std::vector<std::pair<double, double>> pair_denominators(std::vector<cplx> poles) {
  constexpr double kImagEps = 1e-12;
  std::vector<cplx> complex_upper;
  std::vector<double> reals;
  for (const cplx& p : poles) {
    if (std::abs(p.imag()) <= kImagEps) {
      reals.push_back(p.real());
    } else if (p.imag() > 0.0) {
      complex_upper.push_back(p);
    }
  }
  std::sort(complex_upper.begin(), complex_upper.end(),
            [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });
  std::sort(reals.begin(), reals.end());

  std::vector<std::pair<double, double>> dens;
  for (const cplx& p : complex_upper) dens.emplace_back(-2.0 * p.real(), std::norm(p));
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    dens.emplace_back(-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]);
  }
  if (reals.size() % 2 == 1) dens.emplace_back(-reals.back(), 0.0);
  return dens;
}

void normalize_gain(Sos& sos, double freq_hz, double fs) {
  const double g = std::abs(response(sos, freq_hz, fs));
  sos.front().b0 /= g;
  sos.front().b1 /= g;
  sos.front().b2 /= g;
}

void check_order(int order) {
  if (order < 1 || order > 16) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("unsupported filter order {}", order));
  }
}

}  // namespace

Sos butter_highpass(int order, double cutoff_hz, double fs) {
  check_order(order);
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
    throw Error(ErrorCode::InvalidCutoff,
                fmt::format("cutoff {} Hz must lie in (0, {}) Hz", cutoff_hz, fs / 2.0));
  }
  const double wc = prewarp(cutoff_hz, fs);
  std::vector<cplx> digital;
  for (const cplx& p : prototype_poles(order)) digital.push_back(bilinear(wc / p, fs));

  Sos sos;
  const auto dens = pair_denominators(digital);
  for (const auto& [a1, a2] : dens) {
    if (a2 == 0.0) {
      sos.push_back({1.0, -1.0, 0.0, a1, 0.0});  // first-order section, zero at z = 1
    } else {
      sos.push_back({1.0, -2.0, 1.0, a1, a2});
    }
  }
  normalize_gain(sos, fs / 2.0, fs);
  return sos;
}

Sos butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  check_order(order);
  if (!(low_hz > 0.0) || !(high_hz > low_hz) || !(high_hz < fs / 2.0)) {
    throw Error(ErrorCode::InvalidCutoff,
                fmt::format("band [{}, {}] Hz invalid for sample rate {} Hz", low_hz, high_hz, fs));
  }
  const double w1 = prewarp(low_hz, fs);
  const double w2 = prewarp(high_hz, fs);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cplx> digital;
  for (const cplx& p : prototype_poles(order)) {
    // s^2 - p*bw*s + w0^2 = 0
    const cplx half = p * bw / 2.0;
    const cplx root = std::sqrt(half * half - w0sq);
    digital.push_back(bilinear(half + root, fs));
    digital.push_back(bilinear(half - root, fs));
  }
  Sos sos;
  for (const auto& [a1, a2] : pair_denominators(digital)) {
    sos.push_back({1.0, 0.0, -1.0, a1, a2});
  }
  const double centre_hz = std::atan(std::sqrt(w0sq) / (2.0 * fs)) * fs / std::numbers::pi;
  normalize_gain(sos, centre_hz, fs);
  return sos;
}

std::complex<double> response(const Sos& sos, double freq_hz, double fs) {
  const cplx zinv = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / fs);
  cplx h{1.0, 0.0};
  for (const Biquad& s : sos) {
    const cplx num = s.b0 + zinv * (s.b1 + zinv * s.b2);
    const cplx den = 1.0 + zinv * (s.a1 + zinv * s.a2);
    h *= num / den;
  }
  return h;
}

namespace {

struct State {
  double z1 = 0.0;
  double z2 = 0.0;
};

// Transposed direct form II, in place over `x`.
void run(const Sos& sos, std::vector<State>& state, std::vector<double>& x) {
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    double z1 = state[k].z1;
    double z2 = state[k].z2;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
    state[k] = {z1, z2};
  }
}

// State that makes every section output its DC response to a constant input u.
std::vector<State> steady_state(const Sos& sos, double u) {
  std::vector<State> st(sos.size());
  double in = u;
  for (std::size_t k = 0; k < sos.size(); ++k) {
    const Biquad& s = sos[k];
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double out = dc * in;
    st[k].z2 = s.b2 * in - s.a2 * out;
    st[k].z1 = out - s.b0 * in;
    in = out;
  }
  return st;
}

}  // namespace

std::vector<double> sosfilt(const Sos& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  std::vector<State> st(sos.size());
  run(sos, st, y);
  return y;
}

std::vector<double> sosfiltfilt(const Sos& sos, std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  pad = std::min(pad, n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  auto st = steady_state(sos, ext.front());
  run(sos, st, ext);
  std::reverse(ext.begin(), ext.end());
  st = steady_state(sos, ext.front());
  run(sos, st, ext);
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

}  // namespace pulse::filter
