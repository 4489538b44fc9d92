#include <algorithm>
#include <cmath>
#include <numbers>

#include "pulse/error.hpp"
#include "pulse/filter.hpp"
#include "pulse/kernels.hpp"
#include "pulse/ppg.hpp"

namespace pulse::ppg {

std::size_t QualityMask::segment_samples(double rate_hz) const {
  return std::max<std::size_t>(1, samples_for(segment_len_s, rate_hz));
}

std::vector<bool> QualityMask::clean_samples(std::size_t n, double rate_hz) const {
  const std::size_t seg = segment_samples(rate_hz);
  std::vector<bool> out(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = i / seg;
    out[i] = s < labels.size() && labels[s] == Quality::CLEAN;
  }
  return out;
}

std::size_t QualityMask::clean_count() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Quality::CLEAN));
}

TimeSeries highpass_filter(const TimeSeries& series, double cutoff_hz, int order) {
  if (series.channel() != Channel::PPG) {
    throw Error(ErrorCode::InvalidArgument, "high-pass stage expects a PPG series");
  }
  const auto sos = filter::butter_highpass(order, cutoff_hz, series.sample_rate_hz());
  const std::size_t pad = 3 * static_cast<std::size_t>(order);
  return series.with_samples(filter::sosfiltfilt(sos, series.samples(), pad));
}

namespace {

// DFT basis rows for bins 1..n/2 of an n-sample segment.
struct SpectralBasis {
  std::size_t n = 0;
  std::vector<double> freq_hz;
  std::vector<std::vector<double>> cos_rows;
  std::vector<std::vector<double>> sin_rows;

  SpectralBasis(std::size_t len, double rate) : n(len) {
    for (std::size_t k = 1; k <= len / 2; ++k) {
      freq_hz.push_back(static_cast<double>(k) * rate / static_cast<double>(len));
      std::vector<double> c(len);
      std::vector<double> s(len);
      for (std::size_t i = 0; i < len; ++i) {
        const double ph = 2.0 * std::numbers::pi * static_cast<double>(k * i) / static_cast<double>(len);
        c[i] = std::cos(ph);
        s[i] = std::sin(ph);
      }
      cos_rows.push_back(std::move(c));
      sin_rows.push_back(std::move(s));
    }
  }
};

double pearson_at_lag(std::span<const double> x, std::size_t lag) {
  const std::size_t m = x.size() - lag;
  const auto a = x.first(m);
  const auto b = x.subspan(lag, m);
  const double sa = kernels::sum(a);
  const double sb = kernels::sum(b);
  const double saa = kernels::dot(a, a);
  const double sbb = kernels::dot(b, b);
  const double sab = kernels::dot(a, b);
  const double md = static_cast<double>(m);
  const double cov = sab - sa * sb / md;
  const double va = saa - sa * sa / md;
  const double vb = sbb - sb * sb / md;
  if (va <= 0.0 || vb <= 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

SegmentFeatures features_with(std::span<const double> x, double rate, const QualityRules& rules,
                              const SpectralBasis& basis) {
  SegmentFeatures f;
  const std::size_t n = x.size();
  if (n < 4) return f;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  f.peak_to_peak = *hi - *lo;
  const std::size_t half = n / 2;
  const auto [lo1, hi1] = std::minmax_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(half));
  const auto [lo2, hi2] = std::minmax_element(x.begin() + static_cast<std::ptrdiff_t>(half), x.end());
  f.half_peak_to_peak = std::min(*hi1 - *lo1, *hi2 - *lo2);

  const double mean = kernels::sum(x) / static_cast<double>(n);
  const kernels::Moments m = kernels::central_moments(x, mean);
  const double var = m.m2 / static_cast<double>(n);
  if (!(var > 1e-24) || f.peak_to_peak <= 0.0) return f;
  f.degenerate = false;
  f.skewness = (m.m3 / static_cast<double>(n)) / std::pow(var, 1.5);
  f.kurtosis = (m.m4 / static_cast<double>(n)) / (var * var);

  // Pearson autocorrelation; a lag qualifies when it is a local maximum.
  const auto lag_min = static_cast<std::size_t>(std::floor(rate * 60.0 / rules.max_bpm));
  const auto lag_max = static_cast<std::size_t>(std::ceil(rate * 60.0 / rules.min_bpm));
  constexpr std::size_t kMinOverlap = 3;
  if (n > kMinOverlap) {
    const std::size_t top = std::min(lag_max + 1, n - kMinOverlap);
    std::vector<double> r(top + 1, -1.0);
    const std::size_t first = lag_min > 1 ? lag_min - 1 : 1;
    for (std::size_t k = first; k <= top; ++k) r[k] = pearson_at_lag(x, k);
    f.autocorr_peak = -1.0;
    for (std::size_t k = std::max<std::size_t>(lag_min, 1); k <= std::min(lag_max, top); ++k) {
      const bool left_ok = k == first || r[k] >= r[k - 1];
      const bool right_ok = k == top || r[k] >= r[k + 1];
      if (left_ok && right_ok) f.autocorr_peak = std::max(f.autocorr_peak, r[k]);
    }
  }

  std::vector<double> centred(x.begin(), x.end());
  for (double& v : centred) v -= mean;
  double total = 0.0;
  double band = 0.0;
  for (std::size_t k = 0; k < basis.freq_hz.size(); ++k) {
    const double re = kernels::dot(centred, basis.cos_rows[k]);
    const double im = kernels::dot(centred, basis.sin_rows[k]);
    double p = re * re + im * im;
    if (2 * (k + 1) == n) p *= 0.5;  // Nyquist bin is not mirrored
    total += p;
    if (basis.freq_hz[k] >= rules.band_lo_hz - 1e-9 && basis.freq_hz[k] <= rules.band_hi_hz + 1e-9) {
      band += p;
    }
  }
  f.band_power_fraction = total > 0.0 ? band / total : 0.0;
  return f;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace

SegmentFeatures segment_features(std::span<const double> segment, double rate_hz,
                                 const QualityRules& rules) {
  return features_with(segment, rate_hz, rules, SpectralBasis(segment.size(), rate_hz));
}

bool segment_is_clean(const SegmentFeatures& f, double reference_p2p, const QualityRules& rules) {
  if (f.degenerate || !(reference_p2p > 0.0)) return false;
  const double ratio = f.peak_to_peak / reference_p2p;
  if (ratio < rules.amplitude_lo || ratio > rules.amplitude_hi) return false;
  if (f.half_peak_to_peak / reference_p2p < rules.amplitude_lo) return false;
  if (std::fabs(f.skewness) > rules.max_abs_skewness || f.kurtosis > rules.max_kurtosis) return false;
  if (f.autocorr_peak < rules.min_autocorr) return false;
  return f.band_power_fraction >= rules.min_band_power_fraction;
}

QualityMask assess_quality(const TimeSeries& series, const QualityRules& rules) {
  if (!(rules.segment_len_s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "quality segment length must be positive");
  }
  QualityMask mask;
  mask.segment_len_s = rules.segment_len_s;
  const double rate = series.sample_rate_hz();
  const std::size_t seg = mask.segment_samples(rate);
  const auto x = series.samples();
  const std::size_t count = (x.size() + seg - 1) / seg;

  const SpectralBasis full(seg, rate);
  std::vector<SegmentFeatures> feats;
  feats.reserve(count);
  std::vector<double> p2p;
  for (std::size_t s = 0; s < count; ++s) {
    const std::size_t first = s * seg;
    const std::size_t len = std::min(seg, x.size() - first);
    const auto part = x.subspan(first, len);
    feats.push_back(len == seg ? features_with(part, rate, rules, full)
                               : features_with(part, rate, rules, SpectralBasis(len, rate)));
    if (!feats.back().degenerate) p2p.push_back(feats.back().peak_to_peak);
  }
  const double reference = median(std::move(p2p));
  mask.labels.reserve(count);
  for (const SegmentFeatures& f : feats) {
    mask.labels.push_back(segment_is_clean(f, reference, rules) ? Quality::CLEAN : Quality::NOISY);
  }
  return mask;
}

}  // namespace pulse::ppg
