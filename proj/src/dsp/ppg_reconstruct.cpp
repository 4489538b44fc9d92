#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>

#include "pulse/error.hpp"
#include "pulse/ppg.hpp"

namespace pulse::ppg {
namespace {

constexpr std::size_t kTemplatePoints = 64;
// Corruption is localized on residuals against the flank template, in units of
// the flank peak-to-peak amplitude. A sample leaves the flank rhythm once the
// trailing mean residual exceeds kMeanTolerance; the boundary is then placed at
// the CUSUM minimum with per-sample allowance kChangeTolerance.
constexpr std::size_t kResidualWindow = 5;
constexpr double kMeanTolerance = 0.15;
constexpr double kChangeTolerance = 0.1;

double sample_at(std::span<const double> x, double pos) {
  if (pos <= 0.0) return x.front();
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= x.size()) return x.back();
  const double frac = pos - static_cast<double>(i);
  return x[i] + frac * (x[i + 1] - x[i]);
}

double template_at(const std::vector<double>& shape, double phase) {
  const double pos = phase * kTemplatePoints;
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  const double a = shape[i % kTemplatePoints];
  const double b = shape[(i + 1) % kTemplatePoints];
  return a + frac * (b - a);
}

// Vertex of the parabola through the peak sample and its neighbours.
double refine_peak(std::span<const double> x, std::size_t i) {
  if (i == 0 || i + 1 >= x.size()) return static_cast<double>(i);
  const double denom = x[i - 1] - 2.0 * x[i] + x[i + 1];
  if (!(denom < 0.0)) return static_cast<double>(i);
  return static_cast<double>(i) + std::clamp(0.5 * (x[i - 1] - x[i + 1]) / denom, -0.5, 0.5);
}

// Mean beat of `x` between consecutive `peaks` (absolute, fractional).
std::vector<double> mean_beat(std::span<const double> x, const std::vector<double>& peaks) {
  std::vector<double> shape(kTemplatePoints, 0.0);
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i) {
    const double a = peaks[i];
    const double len = peaks[i + 1] - peaks[i];
    for (std::size_t j = 0; j < kTemplatePoints; ++j) {
      shape[j] += sample_at(x, a + len * static_cast<double>(j) / kTemplatePoints);
    }
  }
  for (double& v : shape) v /= static_cast<double>(peaks.size() - 1);
  return shape;
}

double range_of(std::span<const double> x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

// Least-squares line through x[first, last), indexed by absolute position.
std::pair<double, double> fit_line(std::span<const double> x, std::size_t first, std::size_t last) {
  const double m = static_cast<double>(last - first);
  double st = 0.0, sx = 0.0, stt = 0.0, stx = 0.0;
  for (std::size_t t = first; t < last; ++t) {
    const double u = static_cast<double>(t);
    st += u;
    sx += x[t];
    stt += u * u;
    stx += u * x[t];
  }
  const double den = m * stt - st * st;
  const double slope = den > 0.0 ? (m * stx - st * sx) / den : 0.0;
  return {(sx - slope * st) / m, slope};
}

struct Flank {
  std::vector<double> shape;   // one beat of the filtered signal, peak to peak
  std::vector<double> level;   // same beat of the detrended evidence
  std::vector<double> delta;   // same beat of its first difference
  double intercept = 0.0, slope = 0.0;  // evidence baseline
  double level_p2p = 0.0, delta_p2p = 0.0;
  double period = 0.0;         // mean IBI, samples
  double edge_peak = 0.0;      // peak nearest the gap, absolute position

  double phase(double pos) const {
    const double beats = (pos - edge_peak) / period;
    return beats - std::floor(beats);
  }
  // Normalized residual of evidence sample t against the extrapolated beat.
  double residual(std::span<const double> ev, std::span<const double> diff, std::size_t t) const {
    const double pos = static_cast<double>(t);
    const double ph = phase(pos);
    const double lv = ev[t] - intercept - slope * pos;
    return 0.5 * (std::fabs(lv - template_at(level, ph)) / level_p2p +
                  std::fabs(diff[t] - template_at(delta, ph)) / delta_p2p);
  }
};

// Templates of x[first, last) aligned on its systolic peaks.
std::optional<Flank> build_flank(std::span<const double> x, std::span<const double> ev,
                                 std::span<const double> diff, std::size_t first, std::size_t last,
                                 double rate, const PeakParams& peak_params, bool gap_is_after) {
  if (last <= first + 2) return std::nullopt;
  const auto found = find_systolic_peaks(x.subspan(first, last - first), rate, peak_params);
  if (found.size() < 2) return std::nullopt;
  std::vector<double> peaks;
  for (std::size_t p : found) peaks.push_back(refine_peak(x, p + first));

  Flank f;
  std::tie(f.intercept, f.slope) = fit_line(ev, first, last);
  std::vector<double> detrended(ev.begin(), ev.end());
  for (std::size_t t = first; t < last; ++t) detrended[t] -= f.intercept + f.slope * static_cast<double>(t);
  f.shape = mean_beat(x, peaks);
  f.level = mean_beat(detrended, peaks);
  f.delta = mean_beat(diff, peaks);
  f.level_p2p = range_of(std::span<const double>(detrended).subspan(first, last - first));
  f.delta_p2p = range_of(diff.subspan(first, last - first));
  f.period = (peaks.back() - peaks.front()) / static_cast<double>(peaks.size() - 1);
  f.edge_peak = gap_is_after ? peaks.back() : peaks.front();
  if (!(f.level_p2p > 0.0) || !(f.delta_p2p > 0.0)) return std::nullopt;
  return f;
}

struct Run {
  std::size_t seg_first, seg_last;  // NOISY segments [seg_first, seg_last)
  std::size_t first, last;          // samples [first, last)
};

// Samples of [from, to) whose evidence stops following the flank templates.
// Both ends of the range must be clean.
std::pair<std::size_t, std::size_t> corrupted_span(std::span<const double> ev, std::span<const double> diff,
                                                   std::size_t from, std::size_t to, const Flank& left,
                                                   const Flank& right) {
  auto err_l = [&](std::size_t t) { return left.residual(ev, diff, t); };
  auto err_r = [&](std::size_t t) { return right.residual(ev, diff, t); };

  std::size_t first = from;
  double acc = 0.0;
  for (std::size_t t = from - kResidualWindow; t < from; ++t) acc += err_l(t);
  while (first < to) {
    acc += err_l(first) - err_l(first - kResidualWindow);
    if (acc > kMeanTolerance * kResidualWindow) break;
    ++first;
  }
  {
    const std::size_t lo = std::max(from, first - std::min(first, 2 * kResidualWindow));
    const std::size_t hi = std::min(to, first + 1);
    double cum = 0.0, best = 0.0;
    std::size_t best_t = lo;
    for (std::size_t t = lo; t < hi; ++t) {
      cum += err_l(t) - kChangeTolerance;
      if (cum < best) best = cum, best_t = t + 1;
    }
    first = best_t;
  }

  std::size_t last = to;
  acc = 0.0;
  for (std::size_t t = to; t < to + kResidualWindow; ++t) acc += err_r(t);
  while (last > first) {
    acc += err_r(last - 1) - err_r(last - 1 + kResidualWindow);
    if (acc > kMeanTolerance * kResidualWindow) break;
    --last;
  }
  {
    const std::size_t hi = std::min(to, last + 2 * kResidualWindow);
    const std::size_t lo = std::max(first, last - std::min(last, std::size_t{1}));
    double cum = 0.0, best = 0.0;
    std::size_t best_t = hi;
    for (std::size_t t = hi; t > lo; --t) {
      cum += err_r(t - 1) - kChangeTolerance;
      if (cum < best) best = cum, best_t = t - 1;
    }
    last = best_t;
  }
  return {first, std::max(first, last)};
}

}  // namespace

Reconstruction reconstruct(const TimeSeries& series, const QualityMask& mask,
                           const ReconstructionParams& params, const PeakParams& peak_params,
                           const TimeSeries* raw) {
  const double rate = series.sample_rate_hz();
  const auto x = series.samples();
  const std::size_t n = x.size();
  if (raw != nullptr && (raw->size() != n || raw->sample_rate_hz() != rate)) {
    throw Error(ErrorCode::InvalidArgument, "raw evidence series does not match the filtered series");
  }
  const std::size_t seg = mask.segment_samples(rate);
  const auto clean = mask.clean_samples(n, rate);
  const std::size_t flank_len = samples_for(params.flank_s, rate);
  const std::size_t max_gap = samples_for(params.max_gap_s, rate);
  const std::size_t fade = samples_for(params.crossfade_s, rate);

  // The unfiltered signal localizes corruption to the sample, where the
  // high-pass spreads a burst by a fraction of a second.
  const auto ev = raw != nullptr ? raw->samples() : x;
  std::vector<double> diff(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) diff[i] = ev[i] - ev[i - 1];
  if (n > 1) diff[0] = diff[1];

  std::vector<Run> runs;
  for (std::size_t s = 0; s < mask.labels.size();) {
    if (mask.labels[s] != Quality::NOISY) {
      ++s;
      continue;
    }
    std::size_t e = s;
    while (e < mask.labels.size() && mask.labels[e] == Quality::NOISY) ++e;
    runs.push_back({s, e, s * seg, std::min(e * seg, n)});
    s = e;
  }

  std::vector<double> out;  // allocated on the first reconstructed run
  QualityMask new_mask = mask;

  for (const Run& run : runs) {
    if (flank_len < seg + kResidualWindow || run.first < flank_len || run.last + flank_len > n) continue;
    std::size_t clean_before = run.first;
    while (clean_before > 0 && clean[clean_before - 1]) --clean_before;
    std::size_t clean_after = run.last;
    while (clean_after < n && clean[clean_after]) ++clean_after;
    if (run.first - clean_before < flank_len || clean_after - run.last < flank_len) continue;

    // Segment labels are coarse and corruption may spill up to a segment into
    // a CLEAN neighbour. Provisional templates keep a segment clear of the run;
    // the scan starts there so spilled samples count towards the gap.
    const auto probe_left = build_flank(x, ev, diff, run.first - flank_len, run.first - seg, rate, peak_params, true);
    const auto probe_right = build_flank(x, ev, diff, run.last + seg, run.last + flank_len, rate, peak_params, false);
    if (!probe_left || !probe_right) continue;
    const auto [coarse_first, coarse_last] =
        corrupted_span(ev, diff, run.first - seg, run.last + seg, *probe_left, *probe_right);
    // Second pass with templates from the clean signal right next to the
    // coarse span, which the provisional ones overshoot.
    const std::size_t lo = std::max(clean_before, coarse_first - std::min(coarse_first, flank_len));
    const std::size_t hi = std::min(clean_after, coarse_last + flank_len);
    if (coarse_first < lo + kResidualWindow || coarse_last + kResidualWindow > hi) continue;
    const auto left = build_flank(x, ev, diff, lo, coarse_first, rate, peak_params, true);
    const auto right = build_flank(x, ev, diff, coarse_last, hi, rate, peak_params, false);
    if (!left || !right) continue;
    const auto [gap_first, gap_last] = corrupted_span(ev, diff, coarse_first, coarse_last, *left, *right);
    // A corrupted raw sample also disturbs the next difference.
    const std::size_t smear = gap_last > gap_first ? 1 : 0;
    if (gap_last - gap_first - smear > max_gap) continue;

    if (gap_last > gap_first) {
      // Tile beats between the last left peak and the first right peak with a
      // linearly interpolated period, rescaled to land exactly on both.
      const double p_left = left->edge_peak;
      const double p_right = right->edge_peak;
      const double span = p_right - p_left;
      const double mean_period = 0.5 * (left->period + right->period);
      const auto beats = static_cast<std::size_t>(std::max(1.0, std::round(span / mean_period)));
      std::vector<double> bounds{p_left};
      std::vector<double> periods(beats);
      double total = 0.0;
      for (std::size_t k = 0; k < beats; ++k) {
        periods[k] = left->period + (right->period - left->period) *
                                        (static_cast<double>(k) + 0.5) / static_cast<double>(beats);
        total += periods[k];
      }
      for (std::size_t k = 0; k < beats; ++k) bounds.push_back(bounds.back() + periods[k] * span / total);
      bounds.back() = p_right;

      auto synth = [&](std::size_t t) {
        const double pos = static_cast<double>(t);
        const auto it = std::upper_bound(bounds.begin(), bounds.end(), pos);
        const std::size_t k = std::min<std::size_t>(
            beats - 1, static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - bounds.begin() - 1)));
        const double phase = std::clamp((pos - bounds[k]) / (bounds[k + 1] - bounds[k]), 0.0, 1.0);
        const double w = std::clamp((pos - p_left) / span, 0.0, 1.0);
        return (1.0 - w) * template_at(left->shape, phase) + w * template_at(right->shape, phase);
      };

      if (out.empty()) out.assign(x.begin(), x.end());
      // CLEAN segments are never modified.
      const std::size_t edit_first = std::max(gap_first, run.first);
      const std::size_t edit_last = std::max(edit_first, std::min(gap_last, run.last));
      const std::size_t fade_first = std::max(run.first, edit_first - std::min(edit_first, fade));
      for (std::size_t t = fade_first; t < edit_first; ++t) {
        const double alpha = static_cast<double>(t - fade_first + 1) / static_cast<double>(edit_first - fade_first + 1);
        out[t] = (1.0 - alpha) * x[t] + alpha * synth(t);
      }
      for (std::size_t t = edit_first; t < edit_last; ++t) out[t] = synth(t);
      const std::size_t fade_last = std::min(run.last, edit_last + fade);
      for (std::size_t t = edit_last; t < fade_last; ++t) {
        const double alpha = static_cast<double>(fade_last - t) / static_cast<double>(fade_last - edit_last + 1);
        out[t] = (1.0 - alpha) * x[t] + alpha * synth(t);
      }
    }
    for (std::size_t s = run.seg_first; s < run.seg_last; ++s) new_mask.labels[s] = Quality::CLEAN;
  }

  if (out.empty()) return {series, std::move(new_mask)};
  return {series.with_samples(std::move(out)), std::move(new_mask)};
}

}  // namespace pulse::ppg
