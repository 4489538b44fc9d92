#include <doctest.h>

#include <cmath>
#include <numbers>

#include "pulse/ecg.hpp"
#include "pulse/error.hpp"
#include "pulse/ppg.hpp"
#include "pulse/synth.hpp"

using namespace pulse;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::TaskFailed;
}

struct CleanPpg {
  std::vector<double> beats;
  TimeSeries series;
};

CleanPpg clean_ppg(double bpm, double duration_s, std::uint64_t seed, double noise = 0.02) {
  synth::Rng rng(seed);
  auto beats = synth::regular_beats(bpm, duration_s);
  synth::PpgStyle st;
  st.noise_sigma = noise;
  auto s = synth::ppg_from_beats(beats, duration_s, 20.0, st, rng);
  return {std::move(beats), std::move(s)};
}

std::size_t noisy_segments(const ppg::QualityMask& m) { return m.labels.size() - m.clean_count(); }

}  // namespace

TEST_CASE("high-pass stage contract") {
  const TimeSeries s = synth::harmonic_ppg(1.2, 60.0);
  std::vector<double> shifted(s.samples().begin(), s.samples().end());
  for (double& v : shifted) v += 500.0;
  const TimeSeries f = ppg::highpass_filter(s.with_samples(shifted));
  CHECK(f.size() == s.size());
  CHECK(f.start_epoch_s() == s.start_epoch_s());
  double mean = 0;
  for (double v : f.samples()) mean += v;
  CHECK(std::fabs(mean / static_cast<double>(f.size())) < 0.05);

  const TimeSeries ecg(std::vector<double>(100, 0.0), 512.0, 0.0, Channel::ECG_LEAD_II);
  CHECK(code_of([&] { ppg::highpass_filter(ecg); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { ppg::highpass_filter(s, 15.0); }) == ErrorCode::InvalidCutoff);
}

TEST_CASE("quality: clean pulse, noise, flatline") {
  const CleanPpg c = clean_ppg(72, 60, 1);
  const TimeSeries f = ppg::highpass_filter(c.series);
  const ppg::QualityMask m = ppg::assess_quality(f);
  CHECK(m.labels.size() == 30);
  // The outermost segments carry the zero-phase filter's edge transient.
  for (std::size_t seg = 1; seg + 1 < m.labels.size(); ++seg) CHECK(m.labels[seg] == ppg::Quality::CLEAN);

  synth::Rng rng(5);
  std::vector<double> noisy(f.samples().begin(), f.samples().end());
  synth::add_noise_burst(noisy, 200, 400, 3.0, rng);
  const ppg::QualityMask mn = ppg::assess_quality(f.with_samples(noisy));
  CHECK(noisy_segments(mn) >= 5);
  for (std::size_t seg = 5; seg < 10; ++seg) CHECK(mn.labels[seg] == ppg::Quality::NOISY);

  std::vector<double> flat(f.samples().begin(), f.samples().end());
  for (std::size_t i = 400; i < 480; ++i) flat[i] = 0.0;
  const ppg::QualityMask mf = ppg::assess_quality(f.with_samples(flat));
  for (std::size_t seg = 10; seg < 12; ++seg) CHECK(mf.labels[seg] == ppg::Quality::NOISY);
}

TEST_CASE("quality: a mostly flat segment fails on its flat half") {
  const CleanPpg c = clean_ppg(72, 60, 2);
  const TimeSeries f = ppg::highpass_filter(c.series);
  std::vector<double> x(f.samples().begin(), f.samples().end());
  // Segment 10 covers samples 400..439; flatten its last three quarters.
  for (std::size_t i = 410; i < 440; ++i) x[i] = 0.0;
  const ppg::QualityMask m = ppg::assess_quality(f.with_samples(x));
  CHECK(m.labels[10] == ppg::Quality::NOISY);

  const std::span<const double> seg(x.data() + 400, 40);
  const ppg::SegmentFeatures feat = ppg::segment_features(seg, 20.0);
  CHECK(feat.half_peak_to_peak < 0.1 * feat.peak_to_peak);
}

TEST_CASE("quality mask helpers") {
  ppg::QualityMask m;
  m.labels = {ppg::Quality::CLEAN, ppg::Quality::NOISY, ppg::Quality::CLEAN};
  CHECK(m.segment_samples(20.0) == 40);
  const auto flags = m.clean_samples(100, 20.0);
  CHECK(flags.size() == 100);
  CHECK(flags[39]);
  CHECK_FALSE(flags[40]);
  CHECK_FALSE(flags[79]);
  CHECK(flags[80]);
  CHECK(m.clean_count() == 2);
}

TEST_CASE("systolic peaks land on the generator's beats") {
  for (double bpm : {45.0, 72.0, 120.0, 180.0}) {
    CAPTURE(bpm);
    const CleanPpg c = clean_ppg(bpm, 120, 3, 0.0);
    const TimeSeries f = ppg::highpass_filter(c.series);
    const ppg::QualityMask m = ppg::assess_quality(f);
    const PeakList p = ppg::detect_peaks(f, m);
    std::size_t matched = 0;
    for (double b : c.beats) {
      for (std::size_t i : p.indices) {
        if (std::fabs(static_cast<double>(i) / 20.0 - b) <= 0.051) {
          ++matched;
          break;
        }
      }
    }
    // The first and last beat can fall in the filter's edge transient.
    CHECK(matched + 2 >= c.beats.size());
    CHECK(p.indices.size() <= c.beats.size());
    for (std::size_t k = 1; k < p.indices.size(); ++k) CHECK(p.indices[k] > p.indices[k - 1]);
  }
}

TEST_CASE("peaks: low-prominence ripple is not a beat") {
  // Pulse with a small ripple bump on the downslope.
  const double rate = 20.0, f0 = 1.0;
  std::vector<double> x(1200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double th = 2 * std::numbers::pi * f0 * static_cast<double>(i) / rate;
    x[i] = std::sin(th) + 0.35 * std::sin(2 * th) + 0.08 * std::sin(7 * th);
  }
  const auto idx = ppg::find_systolic_peaks(x, rate);
  CHECK(idx.size() >= 57);
  CHECK(idx.size() <= 60);
}

TEST_CASE("reconstruction leaves clean input untouched") {
  const CleanPpg c = clean_ppg(72, 60, 4);
  const TimeSeries f = ppg::highpass_filter(c.series);
  const ppg::QualityMask m = ppg::assess_quality(f);
  const ppg::Reconstruction r = ppg::reconstruct(f, m);
  CHECK(r.series == f);
  CHECK(r.mask == m);
}

TEST_CASE("reconstruction repairs a short burst and keeps a long one NOISY") {
  const CleanPpg c = clean_ppg(66, 120, 6);
  synth::Rng rng(8);
  for (double d : {8.0, 25.0}) {
    CAPTURE(d);
    std::vector<double> x(c.series.samples().begin(), c.series.samples().end());
    synth::add_noise_burst(x, 20 * 50, static_cast<std::size_t>(20 * (50 + d)), 3.0, rng);
    const ppg::PipelineTrace t = ppg::run_pipeline(c.series.with_samples(x));
    const std::size_t before = noisy_segments(t.assessed);
    const std::size_t after = noisy_segments(t.reconstructed.mask);
    CHECK(before >= static_cast<std::size_t>(d / 2));
    if (d <= 15) {
      CHECK(after == 0);
      CHECK(t.hr.valid_count() == t.hr.size());
    } else {
      CHECK(after == before);
      CHECK(t.hr.valid_count() < t.hr.size());
    }
  }
}

TEST_CASE("reconstruction rejects mismatched evidence") {
  const CleanPpg c = clean_ppg(72, 60, 4);
  const TimeSeries f = ppg::highpass_filter(c.series);
  const TimeSeries other = c.series.slice(0, 100);
  CHECK(code_of([&] { ppg::reconstruct(f, ppg::assess_quality(f), {}, {}, &other); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("estimate_hr on a clean recording") {
  synth::Rng rng(12);
  const auto beats = synth::drifting_beats(60, 90, 300, 0.01, rng);
  synth::PpgStyle st;
  st.noise_sigma = 0.02;
  st.wander_amplitude = 0.3;
  const TimeSeries s = synth::ppg_from_beats(beats, 300, 20, st, rng, 1.5e9);
  const HrSeries hr = ppg::estimate_hr(s);
  REQUIRE(hr.size() == 10);
  CHECK(hr.window_start_s[0] == doctest::Approx(1.5e9));
  for (std::size_t i = 0; i < hr.size(); ++i) {
    CAPTURE(i);
    REQUIRE_FALSE(std::isnan(hr.bpm[i]));
    CHECK(std::fabs(hr.bpm[i] - synth::truth_bpm(beats, 30.0 * static_cast<double>(i), 30)) < 1.0);
  }
  CHECK(code_of([&] { ppg::estimate_hr(s.slice(0, 500)); }) == ErrorCode::SeriesTooShort);
}

TEST_CASE("QRS detection on spike and realistic ECG") {
  for (auto style : {synth::EcgStyle::Spikes, synth::EcgStyle::Realistic}) {
    for (double bpm : {40.0, 75.0, 140.0, 200.0}) {
      CAPTURE(bpm);
      synth::Rng rng(static_cast<std::uint64_t>(bpm));
      const auto beats = synth::jittered_beats(bpm, 60, 0.02, rng);
      const TimeSeries e = synth::ecg_from_beats(beats, 60, 512, style, rng);
      const PeakList p = ecg::detect_qrs(e);
      std::size_t hit = 0;
      for (double b : beats) {
        for (std::size_t i : p.indices) {
          if (std::fabs(static_cast<double>(i) / 512.0 - b) <= 0.010) {
            ++hit;
            break;
          }
        }
      }
      CHECK(hit == beats.size());
      CHECK(p.indices.size() == beats.size());
    }
  }
}

TEST_CASE("QRS input checks") {
  const TimeSeries flat(std::vector<double>(512 * 40, 0.0), 512.0, 0.0, Channel::ECG_LEAD_II);
  CHECK(ecg::detect_qrs(flat).indices.empty());
  CHECK(std::isnan(ecg::reference_hr(flat).bpm[0]));
  const TimeSeries ppg(std::vector<double>(512 * 40, 0.0), 512.0, 0.0, Channel::PPG);
  CHECK(code_of([&] { ecg::detect_qrs(ppg); }) == ErrorCode::InvalidArgument);
  const TimeSeries slow(std::vector<double>(50 * 40, 0.0), 50.0, 0.0, Channel::ECG_LEAD_II);
  CHECK(code_of([&] { ecg::detect_qrs(slow); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("synthetic corpus is deterministic and shaped as requested") {
  synth::CorpusSpec spec;
  spec.recordings = 4;
  spec.users = 2;
  spec.duration_s = 240;
  const auto a = synth::make_corpus(spec);
  const auto b = synth::make_corpus(spec);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].ppg == b[i].ppg);
    CHECK(a[i].ecg == b[i].ecg);
    CHECK(a[i].ppg.sample_rate_hz() == 20.0);
    CHECK(a[i].ecg.sample_rate_hz() == 512.0);
    CHECK(a[i].ppg.start_epoch_s() == a[i].ecg.start_epoch_s());
    CHECK(a[i].ppg.duration_s() == doctest::Approx(240.0));
    double corrupted = 0;
    for (const auto& burst : a[i].bursts) corrupted += burst.duration_s;
    CHECK(corrupted == doctest::Approx(0.2 * 240).epsilon(0.1));
  }
  CHECK(a[0].user_id != a[1].user_id);
}
