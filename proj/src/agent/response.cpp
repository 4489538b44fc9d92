#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <regex>
#include <set>

#include <fmt/format.h>

#include "pulse/agent/orchestrator.hpp"

namespace pulse::agent {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<double> parse_tag_value(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (s == "NaN" || s == "nan" || s == "NAN") return kNaN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_bpm(double v) { return std::isnan(v) ? "NaN" : fmt::format("{:.1f}", v); }

bool same_value(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::fabs(a - b) <= 0.05 + 1e-9;
}

struct Reported {
  const DataPipeEntry* entry;
  json summary;
};

json nan_safe(const json& summary, const char* key) {
  const json& v = summary.at(key);
  return v.is_number() ? v : json(kNaN);
}

bool glued(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == ':' || c == '-'; }

// Untagged stand-alone number (or NaN) equal to `v` at report precision, as
// {position, length}. Parts of dates and clock times never match.
std::optional<std::pair<std::size_t, std::size_t>> find_bare(const std::string& text, double v) {
  static const std::regex number(R"(NaN|[0-9]+(\.[0-9]+)?)");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), number); it != std::sregex_iterator(); ++it) {
    const auto pos = static_cast<std::size_t>(it->position());
    const std::size_t end = pos + static_cast<std::size_t>(it->length());
    if (pos > 0 && (glued(text[pos - 1]) || text[pos - 1] == '>')) continue;
    if (end < text.size() && (std::isalnum(static_cast<unsigned char>(text[end])) || text[end] == ':' || text[end] == '-')) {
      continue;
    }
    const auto parsed = parse_tag_value(it->str());
    if (parsed && same_value(*parsed, v)) return std::pair{pos, end - pos};
  }
  return std::nullopt;
}

}  // namespace

TaggedValues extract_tagged_values(std::string_view text, std::string_view tag) {
  const std::regex re(fmt::format("<{0}>([^<]*)</{0}>", tag));
  TaggedValues out;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
    if (const auto v = parse_tag_value((*it)[1].str())) {
      out.values.push_back(*v);
    } else {
      ++out.skipped;
    }
  }
  return out;
}

json AgentResponse::to_json() const {
  const auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  json extracted = json::array();
  for (double v : extracted_values) extracted.push_back(num(v));
  json vals = json::array();
  for (const ResultValue& r : values) {
    vals.push_back({{"name", r.name}, {"recording_id", r.recording_id}, {"modality", r.modality}, {"value", num(r.value)}});
  }
  json traces = json::array();
  for (const HrTrace& t : series) {
    json bpm = json::array();
    for (double v : t.hr.bpm) bpm.push_back(num(v));
    traces.push_back({{"recording_id", t.recording_id},
                      {"modality", t.modality},
                      {"window_start_s", t.hr.window_start_s},
                      {"bpm", std::move(bpm)}});
  }
  return {{"session_id", session_id},
          {"text", text},
          {"extracted_values", std::move(extracted)},
          {"values", std::move(vals)},
          {"hr_series", std::move(traces)}};
}

AgentResponse generate_response(const std::string& query, const std::vector<TaskResult>& results,
                                const DataPipe& datapipe, LlmBackend& llm) {
  std::vector<const DataPipeEntry*> outputs;
  for (const TaskResult& r : results) {
    if (r.status == TaskStatus::OK) outputs.push_back(&datapipe.get(r.output_key));
  }
  if (outputs.empty()) throw Error(ErrorCode::InvalidArgument, "no successful task result to report");

  // Summaries are reported as is; a heart-rate series nobody summarized is
  // summarized here so the model never sees per-window arrays.
  std::set<std::string> summarized;
  for (const DataPipeEntry* e : outputs) {
    if (e->kind == ValueKind::SCALAR && e->meta.contains("inputs")) {
      for (const json& k : e->meta["inputs"]) summarized.insert(k.get<std::string>());
    }
  }
  std::vector<Reported> reported;
  std::vector<std::string> lines;
  for (const DataPipeEntry* e : outputs) {
    if (e->kind == ValueKind::SCALAR && e->payload.contains("mean_bpm")) {
      reported.push_back({e, e->payload});
    } else if (e->kind == ValueKind::HR_SERIES && e->hr && !summarized.count(e->key)) {
      reported.push_back({e, summarize(*e->hr)});
    } else if (e->kind == ValueKind::TIMESERIES_REF && outputs.size() == 1) {
      lines.push_back(fmt::format("recording {}: modality={} duration_s={:.0f} sample_rate_hz={:g} start={}",
                                  e->meta.value("recording_id", ""), e->meta.value("modality", ""),
                                  e->payload.value("duration_s", 0.0), e->payload.value("sample_rate_hz", 0.0),
                                  e->meta.value("start_local", "")));
    }
  }
  for (std::size_t i = 0; i < reported.size(); ++i) {
    const json& s = reported[i].summary;
    const json& m = reported[i].entry->meta;
    lines.push_back(fmt::format(
        "hr_{}: mean_bpm={} min_bpm={} max_bpm={} valid_windows={} nan_windows={} windows={} "
        "source={} recording={} user={} start={}",
        i + 1, format_bpm(nan_safe(s, "mean_bpm").get<double>()), format_bpm(nan_safe(s, "min_bpm").get<double>()),
        format_bpm(nan_safe(s, "max_bpm").get<double>()), s.value("valid_windows", 0), s.value("nan_windows", 0),
        s.value("windows", 0), m.value("modality", ""), m.value("recording_id", ""), m.value("user_id", ""),
        m.value("start_local", "")));
  }

  std::string text = llm.complete(prompts::respond(query, lines));

  std::vector<double> expected;
  // Values are reported at one decimal, so that is what the tags carry.
  for (const Reported& r : reported) {
    expected.push_back(*parse_tag_value(format_bpm(nan_safe(r.summary, "mean_bpm").get<double>())));
  }
  std::vector<bool> located(expected.size(), false);

  // Keep tags that carry a result value, unwrap any other tagged number.
  const std::string open = "<hr>";
  const std::string close = "</hr>";
  std::size_t pos = 0;
  while ((pos = text.find(open, pos)) != std::string::npos) {
    const std::size_t end = text.find(close, pos + open.size());
    if (end == std::string::npos) break;
    const std::string inner = text.substr(pos + open.size(), end - pos - open.size());
    const auto v = parse_tag_value(inner);
    std::optional<std::size_t> match;
    for (std::size_t i = 0; v && i < expected.size(); ++i) {
      if (!located[i] && same_value(*v, expected[i])) {
        located[i] = true;
        match = i;
        break;
      }
    }
    if (match) {
      // Tags carry the reported value exactly, whatever precision the model used.
      const std::string canonical = format_bpm(expected[*match]);
      text.replace(pos + open.size(), inner.size(), canonical);
      pos += open.size() + canonical.size() + close.size();
    } else {
      text.replace(pos, end + close.size() - pos, inner);
      pos += inner.size();
    }
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (located[i]) continue;
    const auto at = find_bare(text, expected[i]);
    if (!at) continue;
    text.replace(at->first, at->second, open + format_bpm(expected[i]) + close);
    located[i] = true;
  }
  const bool any = std::find(located.begin(), located.end(), true) != located.end();
  if (!expected.empty() && !any) {
    throw Error(ErrorCode::ResponseMalformed, "the response text reports none of the heart-rate results");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (located[i]) continue;
    const json& m = reported[i].entry->meta;
    text += fmt::format(" Mean heart rate from {} recording {}: <hr>{}</hr> BPM.", m.value("modality", ""),
                        m.value("recording_id", ""), format_bpm(expected[i]));
  }

  AgentResponse resp;
  resp.text = std::move(text);
  resp.extracted_values = extract_tagged_values(resp.text).values;
  for (std::size_t i = 0; i < reported.size(); ++i) {
    const json& m = reported[i].entry->meta;
    resp.values.push_back({"mean_hr", m.value("recording_id", ""), m.value("modality", ""), expected[i]});
    if (reported[i].entry->hr) {
      resp.series.push_back({m.value("recording_id", ""), m.value("modality", ""), *reported[i].entry->hr});
    }
  }
  return resp;
}

}  // namespace pulse::agent
