#include <fmt/format.h>

#include "pulse/agent/orchestrator.hpp"

namespace pulse::agent::prompts {

namespace {

std::string_view type_name(const ParamSpec& p) {
  switch (p.type) {
    case ParamType::String: return "string";
    case ParamType::Modality: return "modality";
    case ParamType::DateTime: return "datetime";
    case ParamType::Number: return "number";
    case ParamType::Ref: return to_string(p.ref_kind);
  }
  return "string";
}

}  // namespace

std::string candidates(const PlanRequest& request, const TaskRegistry& registry, std::size_t k) {
  std::string out{kCandidatesMarker};
  out += "\nYou are the task planner of an agent that analyzes wearable heart data. Break the user's "
         "query into a sequence of registered tasks.\n\nRegistered tasks:\n";
  for (const TaskSpec& t : registry.specs()) {
    out += fmt::format("- {}(", t.name);
    for (std::size_t i = 0; i < t.params.size(); ++i) {
      out += fmt::format("{}{}: {}", i ? ", " : "", t.params[i].name, type_name(t.params[i]));
    }
    out += fmt::format(") -> {}\n  {}\n", to_string(t.produces), t.description);
    for (const ParamSpec& p : t.params) out += fmt::format("  {}: {}\n", p.name, p.description);
  }
  out += fmt::format(
      "\nPlan format: one JSON object {{\"rationale\": string, \"steps\": [{{\"task\": name, \"args\": "
      "{{param: literal or {{\"$ref\": index of an earlier step}}}}}}]}}. Steps are numbered from 0. "
      "Arguments typed as a value kind must reference an earlier step producing that kind.\n\n"
      "Propose {} different candidate plans, each wrapped in <candidate></candidate>. If the query "
      "lacks information every plan needs (user, date or time), reply only with "
      "<clarify>your question</clarify>.\n",
      k);
  if (!request.history.empty()) {
    out += "\nConversation so far:\n";
    for (const Turn& t : request.history) out += fmt::format("{}: {}\n", t.role, t.text);
  }
  if (!request.failures.empty()) {
    out += "\nEarlier attempts at this query failed. Use the failure details to revise the plan:\n";
    for (const FailureNote& f : request.failures) {
      out += fmt::format("- attempt {} step {} ({}): {}: {}", f.attempt, f.step, f.task, to_string(f.code),
                         f.message);
      if (!f.detail.is_null()) out += fmt::format(" detail={}", f.detail.dump());
      out += "\n";
    }
  }
  out += fmt::format("\nQuery: {}\n", request.query);
  return out;
}

std::string critique(const std::string& query, const std::vector<std::string>& cands) {
  std::string out{kCritiqueMarker};
  out +=
      "\nYou are reviewing candidate plans for the query below. For each candidate weigh its "
      "advantages and limitations for answering the query, then score it from 0 (useless) to 10 "
      "(best). Reply with one JSON object {\"scores\": [{\"candidate\": number, \"score\": number, "
      "\"advantages\": string, \"limitations\": string}]}.\n\n";
  out += fmt::format("Query: {}\n", query);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    out += fmt::format("<candidate index=\"{}\">\n{}\n</candidate>\n", i + 1, cands[i]);
  }
  return out;
}

std::string respond(const std::string& query, const std::vector<std::string>& result_lines) {
  std::string out{kRespondMarker};
  out +=
      "\nYou report analysis results to the user. Answer the query in a few sentences using only the "
      "results below. Wrap every heart-rate value in hr tags, for example <hr>72.4</hr>. A result "
      "with mean_bpm=NaN had no window passing the quality gates because the signal was too noisy: "
      "write <hr>NaN</hr> for it.\n\n";
  out += fmt::format("Query: {}\nResults:\n", query);
  for (const std::string& line : result_lines) out += fmt::format("- {}\n", line);
  return out;
}

}  // namespace pulse::agent::prompts
