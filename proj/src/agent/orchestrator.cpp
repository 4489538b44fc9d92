#include "pulse/agent/orchestrator.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>

namespace pulse::agent {

using nlohmann::json;

namespace {

std::vector<std::string> tagged_spans(std::string_view text, std::string_view tag) {
  const std::string open = fmt::format("<{}>", tag);
  const std::string close = fmt::format("</{}>", tag);
  std::vector<std::string> out;
  std::size_t pos = 0;
  while ((pos = text.find(open, pos)) != std::string_view::npos) {
    const std::size_t body = pos + open.size();
    const std::size_t end = text.find(close, body);
    if (end == std::string_view::npos) break;
    out.emplace_back(text.substr(body, end - body));
    pos = end + close.size();
  }
  return out;
}

std::vector<double> critique_scores(std::string_view text, std::size_t count) {
  std::vector<double> scores(count, 0.0);
  const std::size_t open = text.find('{');
  const std::size_t close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return scores;
  try {
    const json doc = json::parse(text.substr(open, close - open + 1));
    for (const json& s : doc.at("scores")) {
      const auto idx = s.at("candidate").get<long long>();
      const double score = s.at("score").get<double>();
      if (idx >= 1 && static_cast<std::size_t>(idx) <= count) {
        scores[static_cast<std::size_t>(idx) - 1] = std::clamp(score, 0.0, 10.0);
      }
    }
  } catch (const json::exception&) {
    // An unreadable critique leaves the candidates in proposal order.
  }
  return scores;
}

}  // namespace

Plan plan(const PlanRequest& request, const TaskRegistry& registry, LlmBackend& llm, std::size_t k) {
  if (registry.empty()) throw Error(ErrorCode::PlanningFailed, "task registry is empty");
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "candidate count must be positive");
  const std::string proposal = llm.complete(prompts::candidates(request, registry, k));
  std::vector<std::string> cands = tagged_spans(proposal, "candidate");
  if (cands.empty()) {
    const std::vector<std::string> ask = tagged_spans(proposal, "clarify");
    if (!ask.empty()) throw Error(ErrorCode::NeedsClarification, ask.front());
    throw Error(ErrorCode::PlanningFailed, "the planner proposed no candidate plan");
  }
  if (cands.size() > k) cands.resize(k);

  const std::vector<double> scores =
      critique_scores(llm.complete(prompts::critique(request.query, cands)), cands.size());
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  json rejected = json::array();
  for (std::size_t idx : order) {
    try {
      Plan p = parse_plan(cands[idx]);
      if (p.steps.empty()) throw Error(ErrorCode::InvalidArgument, "plan has no steps");
      validate_plan(p, registry);
      return p;
    } catch (const Error& e) {
      rejected.push_back({{"candidate", idx + 1}, {"code", std::string(to_string(e.code()))}, {"reason", e.what()}});
    }
  }
  throw Error(ErrorCode::PlanningFailed,
              fmt::format("none of the {} candidate plans is valid", cands.size()),
              {{"rejected", std::move(rejected)}});
}

std::vector<TaskResult> execute(const Plan& plan, DataPipe& datapipe, const TaskRegistry& registry,
                                const TaskContext& context) {
  std::vector<TaskResult> results;
  std::vector<std::string> keys;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& step = plan.steps[i];
    TaskResult r;
    r.step = i;
    r.task = step.task;
    try {
      const TaskFn& fn = registry.function(step.task);
      TaskArgs args;
      for (const auto& [name, b] : step.args) {
        if (b.ref_step) {
          if (*b.ref_step >= keys.size()) {
            throw Error(ErrorCode::UnboundReference, fmt::format("{} references step {}", name, *b.ref_step));
          }
          args.refs[name] = &datapipe.get(keys[*b.ref_step]);
        } else {
          args.literals[name] = b.literal;
        }
      }
      DataPipeEntry out = fn(args, context);
      out.meta["step"] = i;
      out.meta["task"] = step.task;
      r.output_key = datapipe.put(std::move(out)).key;
      keys.push_back(r.output_key);
    } catch (const Error& e) {
      r.status = TaskStatus::FAILED;
      r.error_code = e.code();
      r.error_message = e.what();
      r.error_detail = e.detail();
    } catch (const std::exception& e) {
      r.status = TaskStatus::FAILED;
      r.error_code = ErrorCode::TaskFailed;
      r.error_message = e.what();
    }
    results.push_back(std::move(r));
    if (results.back().status == TaskStatus::FAILED) break;
  }
  return results;
}

json ClarificationRequest::to_json() const {
  json attempts_json = json::array();
  for (const FailureNote& f : attempts) {
    attempts_json.push_back({{"attempt", f.attempt},
                             {"step", f.step},
                             {"task", f.task},
                             {"code", std::string(pulse::to_string(f.code))},
                             {"message", f.message}});
  }
  return {{"text", text}, {"attempts", std::move(attempts_json)}};
}

SessionOutcome run_session(const SessionInput& input, const TaskRegistry& registry, LlmBackend& llm,
                           const TaskContext& context, DataPipe& datapipe) {
  PlanRequest req{input.query, input.history, {}};
  for (std::size_t attempt = 1; attempt <= input.max_replans + 1; ++attempt) {
    Plan p;
    try {
      p = plan(req, registry, llm, input.candidates);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NeedsClarification) return ClarificationRequest{e.what(), req.failures};
      if (e.code() != ErrorCode::PlanningFailed) return SessionFailure{e.code(), e.what()};
      req.failures.push_back({attempt, 0, "", e.code(), e.what(), nullptr});
      continue;
    }
    const std::vector<TaskResult> results = execute(p, datapipe, registry, context);
    if (!results.empty() && results.back().status == TaskStatus::FAILED) {
      const TaskResult& f = results.back();
      req.failures.push_back({attempt, f.step, f.task, f.error_code, f.error_message, f.error_detail});
      continue;
    }
    try {
      return generate_response(input.query, results, datapipe, llm);
    } catch (const Error& e) {
      return SessionFailure{e.code(), e.what()};
    }
  }
  const FailureNote& last = req.failures.back();
  return ClarificationRequest{
      fmt::format("I could not answer this after {} attempts. The last one failed with {}: {}. "
                  "Could you check the user, modality, date and time?",
                  req.failures.size(), to_string(last.code), last.message),
      req.failures};
}

}  // namespace pulse::agent
