#include "pulse/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "pulse/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pulse::store {

json to_json(const RecordingMeta& m) {
  return {{"recording_id", m.recording_id},       {"user_id", m.user_id},
          {"modality", std::string(to_string(m.modality))},
          {"start_epoch_s", m.start_epoch_s},     {"duration_s", m.duration_s},
          {"sample_rate_hz", m.sample_rate_hz},   {"source_file", m.source_file}};
}

RecordingMeta meta_from_json(const json& j) {
  try {
    RecordingMeta m;
    m.recording_id = j.at("recording_id").get<std::string>();
    m.user_id = j.at("user_id").get<std::string>();
    m.modality = channel_from_string(j.at("modality").get<std::string>());
    m.start_epoch_s = j.at("start_epoch_s").get<double>();
    m.duration_s = j.at("duration_s").get<double>();
    m.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    m.source_file = j.at("source_file").get<std::string>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad manifest entry: ") + e.what());
  }
}

namespace {

std::string_view trim_cr(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

double parse_number(std::string_view field, std::size_t line) {
  field = trim_cr(field);
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::ParseError, fmt::format("line {}: '{}' is not a number", line, field),
                {{"line", line}});
  }
  return v;
}

}  // namespace

std::vector<double> parse_recording_csv(std::string_view text, double rate_hz) {
  if (!(rate_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  std::vector<double> values;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const std::size_t eol = text.find('\n');
    std::string_view line = trim_cr(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!header_seen) {
      if (line != "t_offset_s,value") {
        throw Error(ErrorCode::ParseError, "expected header 't_offset_s,value'", {{"line", line_no}});
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      throw Error(ErrorCode::ParseError, fmt::format("line {}: expected two fields", line_no),
                  {{"line", line_no}});
    }
    const double t = parse_number(line.substr(0, comma), line_no);
    const double v = parse_number(line.substr(comma + 1), line_no);
    const double expected = static_cast<double>(values.size()) / rate_hz;
    if (!(std::fabs(t - expected) <= 0.01 / rate_hz)) {
      throw Error(ErrorCode::ParseError,
                  fmt::format("line {}: offset {} breaks the 1/{} Hz spacing", line_no, t, rate_hz),
                  {{"line", line_no}});
    }
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteSample, fmt::format("line {}: sample is not finite", line_no),
                  {{"line", line_no}});
    }
    values.push_back(v);
  }
  if (!header_seen) throw Error(ErrorCode::ParseError, "empty recording file");
  if (values.empty()) throw Error(ErrorCode::ParseError, "recording has no samples");
  return values;
}

std::string format_recording_csv(std::span<const double> samples, double rate_hz) {
  std::string out = "t_offset_s,value\n";
  out.reserve(samples.size() * 24);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Shortest round-trip form keeps ingest -> lookup bit-identical.
    out += fmt::format("{},{}\n", static_cast<double>(i) / rate_hz, samples[i]);
  }
  return out;
}

double parse_local_time(std::string_view text, int utc_offset_minutes) {
  using namespace std::chrono;
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0.0;
  const std::string str(trim_cr(text));
  int consumed = 0;
  char sep = 0;
  const int got = std::sscanf(str.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (got != 6 || (sep != 'T' && sep != ' ')) {
    throw Error(ErrorCode::ParseError, fmt::format("'{}' is not YYYY-MM-DDTHH:MM[:SS]", str));
  }
  std::string_view rest = std::string_view(str).substr(static_cast<std::size_t>(consumed));
  if (!rest.empty()) {
    if (rest.front() != ':') throw Error(ErrorCode::ParseError, fmt::format("bad time '{}'", str));
    s = parse_number(rest.substr(1), 1);
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s < 0.0 || s >= 61.0) {
    throw Error(ErrorCode::ParseError, fmt::format("'{}' is not a valid date and time", str));
  }
  const double days = static_cast<double>(sys_days(ymd).time_since_epoch().count());
  return days * 86400.0 + h * 3600.0 + mi * 60.0 + s - utc_offset_minutes * 60.0;
}

std::string format_local_time(double epoch_s, int utc_offset_minutes) {
  using namespace std::chrono;
  const auto local = static_cast<long long>(std::floor(epoch_s + utc_offset_minutes * 60.0));
  const sys_days day_point{days{static_cast<int>(std::floor(static_cast<double>(local) / 86400.0))}};
  const long long sod = local - static_cast<long long>(day_point.time_since_epoch().count()) * 86400;
  const year_month_day ymd{day_point};
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), sod / 3600,
                     (sod / 60) % 60, sod % 60);
}

namespace {

class FileLock {
 public:
  FileLock(const fs::path& path, bool exclusive) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::IoError, "cannot open lock " + path.string());
    if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::IoError, "cannot lock " + path.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += fmt::format(".tmp.{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool manifest_order(const RecordingMeta& a, const RecordingMeta& b) {
  return std::tie(a.user_id, a.modality, a.start_epoch_s) <
         std::tie(b.user_id, b.modality, b.start_epoch_s);
}

bool valid_user_id(std::string_view id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  });
}

}  // namespace

DataStore::DataStore(StoreConfig config) : config_(std::move(config)) {
  if (config_.data_root.empty()) throw Error(ErrorCode::InvalidArgument, "data_root is not set");
  std::error_code ec;
  fs::create_directories(fs::path(config_.data_root) / "recordings", ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create store at " + config_.data_root);
}

std::vector<RecordingMeta> DataStore::read_manifest() const {
  const fs::path path = fs::path(config_.data_root) / "manifest.json";
  if (!fs::exists(path)) return {};
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest.json: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::ParseError, "manifest.json is not an array");
  std::vector<RecordingMeta> out;
  out.reserve(doc.size());
  for (const json& j : doc) out.push_back(meta_from_json(j));
  return out;
}

std::vector<RecordingMeta> DataStore::manifest() const {
  FileLock lock(fs::path(config_.data_root) / ".lock", false);
  return read_manifest();
}

RecordingMeta DataStore::ingest_file(const std::string& csv_path, const IngestRequest& req) {
  return ingest_csv(read_file(csv_path), req);
}

RecordingMeta DataStore::ingest_csv(std::string_view csv_text, const IngestRequest& req) {
  const std::vector<double> samples = parse_recording_csv(csv_text, req.sample_rate_hz);
  return ingest_samples(samples, req);
}

RecordingMeta DataStore::ingest_samples(std::span<const double> samples, const IngestRequest& req) {
  if (!valid_user_id(req.user_id)) {
    throw Error(ErrorCode::InvalidArgument, "user id must be 1-64 characters of [A-Za-z0-9_-]");
  }
  if (!(req.sample_rate_hz > 0.0) || !std::isfinite(req.start_epoch_s)) {
    throw Error(ErrorCode::InvalidArgument, "ingest needs a positive rate and a finite start");
  }
  if (samples.empty()) throw Error(ErrorCode::ParseError, "recording has no samples");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw Error(ErrorCode::NonFiniteSample, fmt::format("sample {} is not finite", i), {{"index", i}});
    }
  }

  RecordingMeta meta;
  meta.user_id = req.user_id;
  meta.modality = req.modality;
  meta.start_epoch_s = req.start_epoch_s;
  meta.sample_rate_hz = req.sample_rate_hz;
  meta.duration_s = static_cast<double>(samples.size()) / req.sample_rate_hz;
  meta.recording_id = fmt::format("{}_{}_{}", req.user_id, req.modality == Channel::PPG ? "ppg" : "ecg",
                                  std::llround(req.start_epoch_s * 1000.0));
  meta.source_file = "recordings/" + meta.recording_id + ".csv";

  const fs::path root(config_.data_root);
  FileLock lock(root / ".lock", true);
  std::vector<RecordingMeta> entries = read_manifest();
  for (const RecordingMeta& e : entries) {
    if (e.recording_id == meta.recording_id ||
        (e.user_id == meta.user_id && e.modality == meta.modality &&
         e.start_epoch_s < meta.end_epoch_s() && meta.start_epoch_s < e.end_epoch_s())) {
      throw Error(ErrorCode::OverlapConflict,
                  fmt::format("recording overlaps {}", e.recording_id), to_json(e));
    }
  }
  // Samples land before the manifest names them, so a crash in between
  // leaves at worst an orphan CSV.
  write_atomic(root / meta.source_file, format_recording_csv(samples, req.sample_rate_hz));
  entries.push_back(meta);
  std::sort(entries.begin(), entries.end(), manifest_order);
  json doc = json::array();
  for (const RecordingMeta& e : entries) doc.push_back(to_json(e));
  write_atomic(root / "manifest.json", doc.dump(2) + "\n");
  return meta;
}

Loaded DataStore::load(const RecordingMeta& meta, bool trim) const {
  const fs::path path = fs::path(config_.data_root) / meta.source_file;
  std::vector<double> samples = parse_recording_csv(read_file(path), meta.sample_rate_hz);
  TimeSeries series(std::move(samples), meta.sample_rate_hz, meta.start_epoch_s, meta.modality);
  if (trim && config_.trim_s > 0.0) series = trim_calibration(series, config_.trim_s);
  return {std::move(series), meta};
}

Loaded DataStore::lookup(std::string_view user_id, Channel modality, double at_epoch_s, bool trim) const {
  std::vector<RecordingMeta> entries;
  {
    FileLock lock(fs::path(config_.data_root) / ".lock", false);
    entries = read_manifest();
  }
  bool user_known = false;
  const RecordingMeta* nearest = nullptr;
  double nearest_gap = 0.0;
  for (const RecordingMeta& e : entries) {
    if (e.user_id != user_id) continue;
    user_known = true;
    if (e.modality != modality) continue;
    if (e.contains(at_epoch_s)) return load(e, trim);
    const double gap = at_epoch_s < e.start_epoch_s ? e.start_epoch_s - at_epoch_s
                                                    : at_epoch_s - e.end_epoch_s();
    if (nearest == nullptr || gap < nearest_gap) {
      nearest = &e;
      nearest_gap = gap;
    }
  }
  if (!user_known) {
    throw Error(ErrorCode::UserNotFound, fmt::format("no recordings for user '{}'", user_id),
                {{"user_id", user_id}});
  }
  json detail = {{"user_id", user_id},
                 {"modality", std::string(to_string(modality))},
                 {"requested_epoch_s", at_epoch_s},
                 {"requested_local", format_local_time(at_epoch_s, config_.utc_offset_minutes)},
                 {"nearest", nullptr}};
  std::string msg = fmt::format("no {} recording for '{}' at {}", to_string(modality), user_id,
                                format_local_time(at_epoch_s, config_.utc_offset_minutes));
  if (nearest != nullptr) {
    // Midpoint of the nearest interval: a time the caller can query as is.
    const double mid = nearest->start_epoch_s + 0.5 * nearest->duration_s;
    detail["nearest"] = {{"recording_id", nearest->recording_id},
                         {"start_epoch_s", nearest->start_epoch_s},
                         {"end_epoch_s", nearest->end_epoch_s()},
                         {"start_local", format_local_time(nearest->start_epoch_s, config_.utc_offset_minutes)},
                         {"suggested_local", format_local_time(mid, config_.utc_offset_minutes)}};
    msg += fmt::format("; nearest starts at {}", detail["nearest"]["start_local"].get<std::string>());
  }
  throw Error(ErrorCode::NoRecordingAtTime, msg, std::move(detail));
}

Loaded DataStore::lookup(std::string_view user_id, Channel modality, std::string_view local_time,
                         bool trim) const {
  return lookup(user_id, modality, parse_local_time(local_time, config_.utc_offset_minutes), trim);
}

std::vector<RecordingMeta> DataStore::list_recordings(std::string_view user_id) const {
  std::vector<RecordingMeta> out;
  for (RecordingMeta& e : manifest()) {
    if (e.user_id == user_id) out.push_back(std::move(e));
  }
  if (out.empty()) {
    throw Error(ErrorCode::UserNotFound, fmt::format("no recordings for user '{}'", user_id),
                {{"user_id", user_id}});
  }
  return out;
}

}  // namespace pulse::store
