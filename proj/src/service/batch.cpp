#include "pulse/batch.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <thread>

#include <fmt/format.h>

#include "pulse/error.hpp"

namespace pulse::batch {

namespace {

struct Job {
  store::RecordingMeta ppg;
  store::RecordingMeta ecg;
};

eval::RecordingPair run_job(const store::DataStore& store, const AppConfig& config, const Job& job) {
  const TimeSeries ppg_raw = store.load(job.ppg, false).series;
  const TimeSeries ecg_full = store.load(job.ecg, false).series;
  // ECG span matching the PPG recording, to the nearest ECG sample.
  const double rate = ecg_full.sample_rate_hz();
  const auto first = static_cast<std::size_t>(std::llround((job.ppg.start_epoch_s - ecg_full.start_epoch_s()) * rate));
  const std::size_t count = std::min(ecg_full.size() - first,
                                     static_cast<std::size_t>(std::llround(job.ppg.duration_s * rate)));
  const TimeSeries ecg_raw = ecg_full.slice(first, count);

  const double trim = config.store.trim_s;
  const TimeSeries ppg = trim > 0.0 ? trim_calibration(ppg_raw, trim) : ppg_raw;
  const TimeSeries ecg = trim > 0.0 ? trim_calibration(ecg_raw, trim) : ecg_raw;
  eval::RecordingPair out;
  out.recording_id = job.ppg.recording_id;
  out.est = ppg::estimate_hr(ppg, config.ppg);
  out.ref = ecg::reference_hr(ecg, config.ppg.hr, config.qrs);
  // A fraction of a sample in duration can cost the ECG its last window.
  const std::size_t n = std::min(out.est.size(), out.ref.size());
  out.est.bpm.resize(n);
  out.est.window_start_s.resize(n);
  out.ref.bpm.resize(n);
  out.ref.window_start_s.resize(n);
  return out;
}

}  // namespace

eval::EvaluationReport evaluate_store(const store::DataStore& store, const AppConfig& config, unsigned threads) {
  const std::vector<store::RecordingMeta> manifest = store.manifest();
  std::vector<Job> jobs;
  for (const store::RecordingMeta& p : manifest) {
    if (p.modality != Channel::PPG) continue;
    for (const store::RecordingMeta& e : manifest) {
      if (e.modality == Channel::ECG_LEAD_II && e.user_id == p.user_id &&
          e.start_epoch_s <= p.start_epoch_s + 0.5 / e.sample_rate_hz &&
          e.end_epoch_s() + 0.5 / e.sample_rate_hz >= p.end_epoch_s()) {
        jobs.push_back({p, e});
        break;
      }
    }
  }
  if (jobs.empty()) throw Error(ErrorCode::EmptyCorpus, "no PPG recording has a covering ECG recording");

  std::vector<std::optional<eval::RecordingPair>> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = run_job(store, config, jobs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned n = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, static_cast<unsigned>(jobs.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<eval::RecordingPair> corpus;
  corpus.reserve(results.size());
  for (auto& r : results) corpus.push_back(std::move(*r));
  eval::ReportConfig rc;
  rc.outlier_lo = config.outlier_lo;
  rc.outlier_hi = config.outlier_hi;
  rc.echo = config.to_json();
  rc.echo.erase("data_root");
  return eval::evaluation_report(std::move(corpus), rc);
}

std::size_t seed_store(store::DataStore& store, const synth::CorpusSpec& spec) {
  const std::vector<synth::CorpusRecording> corpus = synth::make_corpus(spec);
  for (const synth::CorpusRecording& r : corpus) {
    store.ingest_samples(r.ppg.samples(), {r.user_id, Channel::PPG, r.ppg.start_epoch_s(), r.ppg.sample_rate_hz()});
    store.ingest_samples(r.ecg.samples(),
                         {r.user_id, Channel::ECG_LEAD_II, r.ecg.start_epoch_s(), r.ecg.sample_rate_hz()});
  }
  return corpus.size();
}

}  // namespace pulse::batch
