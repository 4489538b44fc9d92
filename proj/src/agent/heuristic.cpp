#include <map>
#include <optional>
#include <regex>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "pulse/agent/backend.hpp"
#include "pulse/agent/orchestrator.hpp"

namespace pulse::agent {

using nlohmann::json;

namespace {

struct QueryFacts {
  std::optional<std::string> user;
  std::optional<std::string> date;
  std::optional<std::string> time;
  bool ppg = false;
  bool ecg = false;
};

std::optional<std::string> first_match(const std::string& text, const std::regex& re, int group = 1) {
  std::smatch m;
  if (std::regex_search(text, m, re)) return m[group].str();
  return std::nullopt;
}

QueryFacts read_query(const std::string& q) {
  static const std::regex user_word(R"(\b(?:user|participant|subject)\s+([A-Za-z0-9_-]+))", std::regex::icase);
  static const std::regex user_code(R"(\b([pP][0-9]{1,4})\b)");
  static const std::regex date(R"(\b([0-9]{4}-[0-9]{2}-[0-9]{2})\b)");
  static const std::regex time(R"((?:^|[^0-9-])([01]?[0-9]|2[0-3]):([0-5][0-9])\b)");
  static const std::regex ecg(R"(\becg\b)", std::regex::icase);
  static const std::regex ppg(R"(\bppg\b)", std::regex::icase);
  QueryFacts f;
  f.user = first_match(q, user_word);
  if (!f.user) f.user = first_match(q, user_code);
  f.date = first_match(q, date);
  std::smatch m;
  if (std::regex_search(q, m, time)) f.time = fmt::format("{:0>2}:{}", m[1].str(), m[2].str());
  f.ecg = std::regex_search(q, ecg);
  f.ppg = std::regex_search(q, ppg);
  return f;
}

// Text of the line following `label`, or empty.
std::string line_after(const std::string& prompt, std::string_view label) {
  const std::size_t at = prompt.rfind(label);
  if (at == std::string::npos) return {};
  const std::size_t start = at + label.size();
  return prompt.substr(start, prompt.find('\n', start) - start);
}

std::vector<std::string> block_lines(const std::string& prompt, std::string_view heading) {
  std::vector<std::string> out;
  std::size_t at = prompt.find(heading);
  if (at == std::string::npos) return out;
  at = prompt.find('\n', at);
  while (at != std::string::npos && at + 1 < prompt.size() && prompt[at + 1] != '\n') {
    const std::size_t next = prompt.find('\n', at + 1);
    out.push_back(prompt.substr(at + 1, next - at - 1));
    at = next;
  }
  return out;
}

json lookup_step(const std::string& user, const char* modality, const std::string& at) {
  return {{"task", "lookup_recording"}, {"args", {{"user_id", user}, {"modality", modality}, {"at", at}}}};
}

json ref_step(const char* task, const char* arg, std::size_t ref) {
  return {{"task", task}, {"args", {{arg, {{"$ref", ref}}}}}};
}

std::string candidate_response(const std::string& prompt) {
  const std::string query = line_after(prompt, "\nQuery: ");
  QueryFacts facts = read_query(query);
  for (const std::string& line : block_lines(prompt, "Conversation so far:")) {
    if (line.rfind("user: ", 0) != 0) continue;
    const QueryFacts earlier = read_query(line.substr(6));
    if (!facts.user) facts.user = earlier.user;
    if (!facts.date) facts.date = earlier.date;
    if (!facts.time) facts.time = earlier.time;
  }
  std::optional<std::string> at;
  if (facts.date && facts.time) at = *facts.date + "T" + *facts.time;
  // The most recent failure that names a nearby recording wins.
  static const std::regex suggested(R"re("suggested_local":"([^"]+)")re");
  for (const std::string& line : block_lines(prompt, "Earlier attempts at this query failed")) {
    if (auto s = first_match(line, suggested)) at = s->substr(0, 16);
  }

  std::vector<std::string> missing;
  if (!facts.user) missing.emplace_back("which user");
  if (!at) missing.emplace_back("which date and time");
  if (!missing.empty()) {
    return fmt::format(
        "<clarify>Please tell me {}, for example: user p01 on 2019-07-25 at 14:00.</clarify>",
        fmt::join(missing, " and "));
  }

  const bool compare = facts.ecg && facts.ppg;
  const char* modality = facts.ecg && !facts.ppg ? "ECG_LEAD_II" : "PPG";
  const char* estimator = facts.ecg && !facts.ppg ? "reference_hr_ecg" : "estimate_hr_ppg";
  json best = {{"rationale", fmt::format("Retrieve the {} recording, estimate windowed heart rate, then "
                                         "summarize it.", modality)},
               {"steps", {lookup_step(*facts.user, modality, *at), ref_step(estimator, "recording", 0),
                          ref_step("summarize_hr", "hr", 1)}}};
  if (compare) {
    best["rationale"] = "Estimate heart rate from PPG and from the ECG reference, summarizing both.";
    best["steps"].push_back(lookup_step(*facts.user, "ECG_LEAD_II", *at));
    best["steps"].push_back(ref_step("reference_hr_ecg", "recording", 3));
    best["steps"].push_back(ref_step("summarize_hr", "hr", 4));
  }
  const json bare = {{"rationale", "Retrieve the recording and estimate heart rate without a summary."},
                     {"steps", {lookup_step(*facts.user, modality, *at), ref_step(estimator, "recording", 0)}}};
  const json direct = {{"rationale", "Summarize the retrieved recording directly."},
                       {"steps", {lookup_step(*facts.user, modality, *at), ref_step("summarize_hr", "hr", 0)}}};
  return fmt::format("<candidate>{}</candidate>\n<candidate>{}</candidate>\n<candidate>{}</candidate>",
                     best.dump(), bare.dump(), direct.dump());
}

double score_candidate(const std::string& body, bool wants_both) {
  try {
    const Plan p = parse_plan(body);
    std::vector<bool> hr_step(p.steps.size(), false);
    int estimators = 0;
    bool summary = false;
    for (std::size_t i = 0; i < p.steps.size(); ++i) {
      const PlanStep& s = p.steps[i];
      if (s.task == "estimate_hr_ppg" || s.task == "reference_hr_ecg") {
        hr_step[i] = true;
        ++estimators;
      }
      if (s.task == "summarize_hr") {
        const auto it = s.args.find("hr");
        summary = summary || (it != s.args.end() && it->second.ref_step && *it->second.ref_step < i &&
                              hr_step[*it->second.ref_step]);
      }
    }
    double score = 2.0;
    if (estimators > 0) score += 2.0;
    if (summary) score += 4.0;
    if (wants_both && estimators >= 2) score += 2.0;
    return std::min(score, 10.0);
  } catch (const Error&) {
    return 0.0;
  }
}

std::string critique_response(const std::string& prompt) {
  static const std::regex cand(R"re(<candidate index="([0-9]+)">\n([\s\S]*?)\n</candidate>)re");
  const QueryFacts facts = read_query(line_after(prompt, "\nQuery: "));
  json scores = json::array();
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), cand); it != std::sregex_iterator(); ++it) {
    const double s = score_candidate((*it)[2].str(), facts.ecg && facts.ppg);
    scores.push_back({{"candidate", std::stoi((*it)[1].str())},
                      {"score", s},
                      {"advantages", s >= 8 ? "answers the query with a summarized heart rate"
                                            : s >= 4 ? "produces heart rate" : "short"},
                      {"limitations", s >= 8 ? "none significant"
                                             : s >= 4 ? "leaves per-window values unsummarized"
                                                      : "does not produce a heart-rate estimate"}});
  }
  return json{{"scores", std::move(scores)}}.dump();
}

std::map<std::string, std::string> fields(const std::string& line) {
  static const std::regex kv(R"(([a-z_]+)=(\S+))");
  std::map<std::string, std::string> out;
  for (auto it = std::sregex_iterator(line.begin(), line.end(), kv); it != std::sregex_iterator(); ++it) {
    out[(*it)[1].str()] = (*it)[2].str();
  }
  return out;
}

std::string respond_response(const std::string& prompt) {
  std::vector<std::string> sentences;
  for (const std::string& line : block_lines(prompt, "Results:")) {
    auto f = fields(line);
    if (line.rfind("- recording ", 0) == 0) {
      sentences.push_back(fmt::format("I found the {} recording starting {}, lasting {} s.", f["modality"],
                                      f["start"], f["duration_s"]));
      continue;
    }
    const std::string source = f["source"] == "ECG_LEAD_II" ? "ECG" : f["source"];
    if (f["mean_bpm"] == "NaN") {
      sentences.push_back(fmt::format(
          "The {} signal of user {} starting {} was too noisy to estimate heart rate: <hr>NaN</hr> "
          "({} of {} windows failed the quality checks).",
          source, f["user"], f["start"], f["nan_windows"], f["windows"]));
    } else {
      sentences.push_back(fmt::format(
          "The average heart rate of user {} from {} starting {} was <hr>{}</hr> BPM, with {} of {} "
          "windows passing the quality checks.",
          f["user"], source, f["start"], f["mean_bpm"], f["valid_windows"], f["windows"]));
    }
  }
  if (sentences.empty()) return "No analysis results were produced.";
  return fmt::format("{}", fmt::join(sentences, " "));
}

}  // namespace

std::string HeuristicBackend::complete(const std::string& prompt) {
  if (prompt.rfind(prompts::kCandidatesMarker, 0) == 0) return candidate_response(prompt);
  if (prompt.rfind(prompts::kCritiqueMarker, 0) == 0) return critique_response(prompt);
  if (prompt.rfind(prompts::kRespondMarker, 0) == 0) return respond_response(prompt);
  throw Error(ErrorCode::BackendUnavailable, "heuristic backend only answers the agent's own prompts");
}

}  // namespace pulse::agent
