#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pulse/agent/backend.hpp"
#include "pulse/agent/tasks.hpp"
#include "pulse/error.hpp"

namespace pulse::agent {

// ---- plans

struct Binding {
  nlohmann::json literal;
  std::optional<std::size_t> ref_step;  // set for datapipe references

  static Binding value(nlohmann::json v) { return {std::move(v), std::nullopt}; }
  static Binding ref(std::size_t step) { return {nullptr, step}; }
};

struct PlanStep {
  std::string task;
  std::map<std::string, Binding> args;
};

struct Plan {
  std::vector<PlanStep> steps;
  std::string rationale;
};

/// Wire format: {"rationale": "...", "steps": [{"task": name, "args": {p: literal | {"$ref": i}}}]}.
/// Prose around the outermost JSON object is ignored. Throws ParseError.
Plan parse_plan(std::string_view text);
nlohmann::json to_json(const Plan& plan);

/// Throws UnknownTask, UnboundReference (a reference to a missing or later
/// step, or to an output of the wrong kind) or InvalidArgument (missing,
/// extra or ill-typed argument).
void validate_plan(const Plan& plan, const TaskRegistry& registry);

// ---- planning

struct Turn {
  std::string role;  // "user" or "agent"
  std::string text;
};

struct FailureNote {
  std::size_t attempt = 0;
  std::size_t step = 0;
  std::string task;
  ErrorCode code = ErrorCode::TaskFailed;
  std::string message;
  nlohmann::json detail;
};

struct PlanRequest {
  std::string query;
  std::vector<Turn> history;           // earlier turns of the session
  std::vector<FailureNote> failures;   // earlier attempts of this query
};

inline constexpr std::size_t kDefaultCandidates = 3;
inline constexpr std::size_t kDefaultMaxReplans = 3;

/// Tree-of-thought planning: one prompt for k candidates, one critique prompt
/// scoring each 0-10, then the best-scored candidate that parses and
/// validates. Throws NeedsClarification (message is the model's question),
/// PlanningFailed, or backend errors.
Plan plan(const PlanRequest& request, const TaskRegistry& registry, LlmBackend& llm,
          std::size_t k = kDefaultCandidates);

// ---- execution

enum class TaskStatus { OK, FAILED };

struct TaskResult {
  std::size_t step = 0;
  std::string task;
  TaskStatus status = TaskStatus::OK;
  std::string output_key;  // when OK
  ErrorCode error_code = ErrorCode::TaskFailed;
  std::string error_message;
  nlohmann::json error_detail;
};

/// Runs steps in order and stops after the first failure.
std::vector<TaskResult> execute(const Plan& plan, DataPipe& datapipe, const TaskRegistry& registry,
                                const TaskContext& context);

// ---- responses

struct TaggedValues {
  std::vector<double> values;  // NaN for <tag>NaN</tag>
  std::size_t skipped = 0;     // spans that did not parse
};

TaggedValues extract_tagged_values(std::string_view text, std::string_view tag = "hr");

struct ResultValue {
  std::string name;          // e.g. "mean_hr"
  std::string recording_id;
  std::string modality;
  double value = 0.0;        // NaN when every window failed its gates
};

struct HrTrace {
  std::string recording_id;
  std::string modality;
  HrSeries hr;
};

struct AgentResponse {
  std::string session_id;
  std::string text;
  std::vector<double> extracted_values;
  std::vector<ResultValue> values;
  std::vector<HrTrace> series;  // for plotting; never sent to the model

  nlohmann::json to_json() const;
};

/// Prompts with compact summaries only and guarantees every reported HR
/// value is tagged. Throws ResponseMalformed when the model's text holds
/// none of the result values, InvalidArgument without an OK result.
AgentResponse generate_response(const std::string& query, const std::vector<TaskResult>& results,
                                const DataPipe& datapipe, LlmBackend& llm);

// ---- sessions

struct ClarificationRequest {
  std::string text;
  std::vector<FailureNote> attempts;

  nlohmann::json to_json() const;
};

struct SessionFailure {
  ErrorCode code = ErrorCode::BackendUnavailable;
  std::string message;
};

using SessionOutcome = std::variant<AgentResponse, ClarificationRequest, SessionFailure>;

struct SessionInput {
  std::string query;
  std::vector<Turn> history;
  std::size_t max_replans = kDefaultMaxReplans;
  std::size_t candidates = kDefaultCandidates;
};

/// plan -> execute -> respond, replanning with the failure appended after a
/// failed step or an unusable plan. Backend errors end the session as a
/// SessionFailure.
SessionOutcome run_session(const SessionInput& input, const TaskRegistry& registry, LlmBackend& llm,
                           const TaskContext& context, DataPipe& datapipe);

// ---- prompt templates (exposed for tests and the heuristic backend)

namespace prompts {
inline constexpr std::string_view kCandidatesMarker = "[[pulse-agent:plan-candidates:v1]]";
inline constexpr std::string_view kCritiqueMarker = "[[pulse-agent:plan-critique:v1]]";
inline constexpr std::string_view kRespondMarker = "[[pulse-agent:respond:v1]]";

std::string candidates(const PlanRequest& request, const TaskRegistry& registry, std::size_t k);
std::string critique(const std::string& query, const std::vector<std::string>& candidates);
std::string respond(const std::string& query, const std::vector<std::string>& result_lines);
}  // namespace prompts

}  // namespace pulse::agent
