#include "pulse/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include <fmt/format.h>

#include "pulse/error.hpp"

namespace pulse {

using nlohmann::json;

namespace {

// Reads typed keys from one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw Error(ErrorCode::ParseError, fmt::format("config {} must be an object", where()));
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::ParseError, fmt::format("config key {}{} has the wrong type", prefix(), key));
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return obj_.contains(key);
  }
  Section child(const char* key) {
    seen_.insert(key);
    return Section(obj_.at(key), prefix() + key);
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw Error(ErrorCode::ParseError, fmt::format("unknown config key {}{}", prefix(), k));
    }
  }

 private:
  std::string where() const { return path_.empty() ? "root" : path_; }
  std::string prefix() const { return path_.empty() ? "" : path_ + "."; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

AppConfig config_from_json(const json& doc, const std::string& base_dir) {
  AppConfig c;
  Section root(doc, "");
  root.read("data_root", c.store.data_root);
  root.read("trim_s", c.store.trim_s);
  root.read("utc_offset_minutes", c.store.utc_offset_minutes);
  root.read("window_len_s", c.ppg.hr.window_len_s);
  root.read("hop_s", c.ppg.hr.hop_s);
  root.read("min_clean_coverage", c.ppg.hr.min_clean_coverage);
  root.read("max_replans", c.max_replans);
  if (root.has("llm")) {
    Section s = root.child("llm");
    s.read("backend", c.llm.backend);
    s.read("endpoint", c.llm.endpoint);
    s.read("model", c.llm.model);
    s.read("timeout_s", c.llm.timeout_s);
    s.read("fixtures", c.llm.fixtures);
    s.finish();
  }
  if (root.has("filter")) {
    Section s = root.child("filter");
    s.read("cutoff_hz", c.ppg.cutoff_hz);
    s.read("order", c.ppg.filter_order);
    s.finish();
  }
  if (root.has("quality")) {
    Section s = root.child("quality");
    ppg::QualityRules& q = c.ppg.quality;
    s.read("segment_len_s", q.segment_len_s);
    s.read("amplitude_lo", q.amplitude_lo);
    s.read("amplitude_hi", q.amplitude_hi);
    s.read("max_abs_skewness", q.max_abs_skewness);
    s.read("max_kurtosis", q.max_kurtosis);
    s.read("min_autocorr", q.min_autocorr);
    s.read("min_bpm", q.min_bpm);
    s.read("max_bpm", q.max_bpm);
    s.read("band_lo_hz", q.band_lo_hz);
    s.read("band_hi_hz", q.band_hi_hz);
    s.read("min_band_power_fraction", q.min_band_power_fraction);
    s.finish();
  }
  if (root.has("reconstruction")) {
    Section s = root.child("reconstruction");
    s.read("max_gap_s", c.ppg.reconstruction.max_gap_s);
    s.read("flank_s", c.ppg.reconstruction.flank_s);
    s.read("crossfade_s", c.ppg.reconstruction.crossfade_s);
    s.finish();
  }
  if (root.has("outlier")) {
    Section s = root.child("outlier");
    s.read("lo", c.outlier_lo);
    s.read("hi", c.outlier_hi);
    s.finish();
  }
  if (root.has("server")) {
    Section s = root.child("server");
    s.read("host", c.host);
    s.read("port", c.port);
    s.read("session_idle_s", c.session_idle_s);
    s.finish();
  }
  root.finish();

  if (c.llm.backend != "mock" && c.llm.backend != "remote" && c.llm.backend != "heuristic") {
    throw Error(ErrorCode::ParseError, fmt::format("llm.backend must be mock, remote or heuristic, not '{}'",
                                                   c.llm.backend));
  }
  namespace fs = std::filesystem;
  const auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (fs::path(base_dir) / p).lexically_normal().string();
  };
  resolve(c.store.data_root);
  for (std::string& f : c.llm.fixtures) resolve(f);
  return c;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path, e.what()));
  }
  return config_from_json(doc, std::filesystem::path(path).parent_path().string());
}

json AppConfig::to_json() const {
  const ppg::QualityRules& q = ppg.quality;
  return {{"data_root", store.data_root},
          {"trim_s", store.trim_s},
          {"utc_offset_minutes", store.utc_offset_minutes},
          {"window_len_s", ppg.hr.window_len_s},
          {"hop_s", ppg.hr.hop_s},
          {"min_clean_coverage", ppg.hr.min_clean_coverage},
          {"filter", {{"cutoff_hz", ppg.cutoff_hz}, {"order", ppg.filter_order}}},
          {"quality",
           {{"segment_len_s", q.segment_len_s},
            {"amplitude_lo", q.amplitude_lo},
            {"amplitude_hi", q.amplitude_hi},
            {"max_abs_skewness", q.max_abs_skewness},
            {"max_kurtosis", q.max_kurtosis},
            {"min_autocorr", q.min_autocorr},
            {"min_bpm", q.min_bpm},
            {"max_bpm", q.max_bpm},
            {"band_lo_hz", q.band_lo_hz},
            {"band_hi_hz", q.band_hi_hz},
            {"min_band_power_fraction", q.min_band_power_fraction}}},
          {"reconstruction",
           {{"max_gap_s", ppg.reconstruction.max_gap_s},
            {"flank_s", ppg.reconstruction.flank_s},
            {"crossfade_s", ppg.reconstruction.crossfade_s}}},
          {"outlier", {{"lo", outlier_lo}, {"hi", outlier_hi}}}};
}

std::shared_ptr<agent::LlmBackend> make_backend(const LlmConfig& cfg) {
  if (cfg.backend == "remote") {
    agent::RemoteConfig rc;
    rc.endpoint = cfg.endpoint;
    rc.model = cfg.model;
    if (const char* key = std::getenv("PULSE_AGENT_LLM_KEY")) rc.api_key = key;
    rc.timeout = std::chrono::milliseconds(static_cast<long long>(cfg.timeout_s * 1000.0));
    return std::make_shared<agent::RemoteBackend>(rc);
  }
  if (cfg.backend == "heuristic") return std::make_shared<agent::HeuristicBackend>();
  return agent::MockBackend::from_files(cfg.fixtures);
}

}  // namespace pulse
