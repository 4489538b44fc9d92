#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pulse/signal.hpp"

namespace pulse::store {

struct RecordingMeta {
  std::string recording_id;
  std::string user_id;
  Channel modality = Channel::PPG;
  double start_epoch_s = 0.0;
  double duration_s = 0.0;
  double sample_rate_hz = 0.0;
  std::string source_file;  // relative to the store root

  double end_epoch_s() const noexcept { return start_epoch_s + duration_s; }
  bool contains(double epoch_s) const noexcept {
    return epoch_s >= start_epoch_s && epoch_s < end_epoch_s();
  }

  friend bool operator==(const RecordingMeta&, const RecordingMeta&) = default;
};

nlohmann::json to_json(const RecordingMeta& m);
RecordingMeta meta_from_json(const nlohmann::json& j);

struct IngestRequest {
  std::string user_id;
  Channel modality = Channel::PPG;
  double start_epoch_s = 0.0;
  double sample_rate_hz = 0.0;
};

struct StoreConfig {
  std::string data_root;
  double trim_s = kDefaultTrimSeconds;
  // Offset of the store's local clock from UTC, for date + time queries.
  int utc_offset_minutes = 0;
};

/// `t_offset_s,value` CSV. Throws ParseError on malformed rows or spacing
/// other than 1/rate, NonFiniteSample on NaN/Inf values.
std::vector<double> parse_recording_csv(std::string_view text, double rate_hz);
std::string format_recording_csv(std::span<const double> samples, double rate_hz);

/// "YYYY-MM-DD[T| ]HH:MM[:SS]" as naive local time.
double parse_local_time(std::string_view text, int utc_offset_minutes);
std::string format_local_time(double epoch_s, int utc_offset_minutes);

struct Loaded {
  TimeSeries series;
  RecordingMeta meta;
};

/// One CSV per recording under `recordings/` plus `manifest.json` at the
/// root. Writers take an exclusive flock on `.lock`, readers a shared one;
/// files are written to a temporary name and renamed into place.
class DataStore {
 public:
  explicit DataStore(StoreConfig config);

  const StoreConfig& config() const noexcept { return config_; }

  RecordingMeta ingest_file(const std::string& csv_path, const IngestRequest& req);
  RecordingMeta ingest_csv(std::string_view csv_text, const IngestRequest& req);
  RecordingMeta ingest_samples(std::span<const double> samples, const IngestRequest& req);

  /// The recording whose [start, start + duration) holds `at_epoch_s`,
  /// calibration-trimmed unless `trim` is false. NoRecordingAtTime carries
  /// the nearest interval of that user and modality in its detail.
  Loaded lookup(std::string_view user_id, Channel modality, double at_epoch_s, bool trim = true) const;
  Loaded lookup(std::string_view user_id, Channel modality, std::string_view local_time,
                bool trim = true) const;
  Loaded load(const RecordingMeta& meta, bool trim = true) const;

  /// Throws UserNotFound when the user has no recordings.
  std::vector<RecordingMeta> list_recordings(std::string_view user_id) const;
  std::vector<RecordingMeta> manifest() const;

 private:
  std::vector<RecordingMeta> read_manifest() const;

  StoreConfig config_;
};

}  // namespace pulse::store
