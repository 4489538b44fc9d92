#include <fmt/format.h>

#include "pulse/agent/orchestrator.hpp"

namespace pulse::agent {

using nlohmann::json;

namespace {

Binding parse_binding(const json& v) {
  if (v.is_object()) {
    if (v.size() != 1 || !v.contains("$ref") || !v["$ref"].is_number_integer() || v["$ref"].get<long long>() < 0) {
      throw Error(ErrorCode::ParseError, "object arguments must be {\"$ref\": step}");
    }
    return Binding::ref(v["$ref"].get<std::size_t>());
  }
  if (v.is_string() || v.is_number() || v.is_boolean()) return Binding::value(v);
  throw Error(ErrorCode::ParseError, "arguments must be literals or step references");
}

}  // namespace

Plan parse_plan(std::string_view text) {
  const std::size_t open = text.find('{');
  const std::size_t close = text.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    throw Error(ErrorCode::ParseError, "no JSON object in plan text");
  }
  json doc;
  try {
    doc = json::parse(text.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("plan is not valid JSON: ") + e.what());
  }
  if (!doc.contains("steps") || !doc["steps"].is_array()) {
    throw Error(ErrorCode::ParseError, "plan needs a steps array");
  }
  Plan plan;
  if (doc.contains("rationale") && doc["rationale"].is_string()) plan.rationale = doc["rationale"];
  for (const json& s : doc["steps"]) {
    if (!s.is_object() || !s.contains("task") || !s["task"].is_string()) {
      throw Error(ErrorCode::ParseError, "each step needs a task name");
    }
    PlanStep step;
    step.task = s["task"].get<std::string>();
    if (s.contains("args")) {
      if (!s["args"].is_object()) throw Error(ErrorCode::ParseError, "step args must be an object");
      for (const auto& [name, v] : s["args"].items()) step.args.emplace(name, parse_binding(v));
    }
    plan.steps.push_back(std::move(step));
  }
  return plan;
}

json to_json(const Plan& plan) {
  json steps = json::array();
  for (const PlanStep& s : plan.steps) {
    json args = json::object();
    for (const auto& [name, b] : s.args) {
      args[name] = b.ref_step ? json{{"$ref", *b.ref_step}} : b.literal;
    }
    steps.push_back({{"task", s.task}, {"args", std::move(args)}});
  }
  return {{"rationale", plan.rationale}, {"steps", std::move(steps)}};
}

void validate_plan(const Plan& plan, const TaskRegistry& registry) {
  if (plan.steps.empty()) throw Error(ErrorCode::InvalidArgument, "plan has no steps");
  std::vector<ValueKind> produced;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const PlanStep& step = plan.steps[i];
    const TaskSpec* spec = registry.find(step.task);
    if (spec == nullptr) {
      throw Error(ErrorCode::UnknownTask, fmt::format("step {}: unknown task '{}'", i, step.task));
    }
    for (const auto& [name, b] : step.args) {
      const bool known = std::any_of(spec->params.begin(), spec->params.end(),
                                     [&](const ParamSpec& p) { return p.name == name; });
      if (!known) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("step {}: {} takes no argument '{}'", i, step.task, name));
      }
    }
    for (const ParamSpec& p : spec->params) {
      const auto it = step.args.find(p.name);
      if (it == step.args.end()) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("step {}: {} is missing '{}'", i, step.task, p.name));
      }
      const Binding& b = it->second;
      const std::string where = fmt::format("step {}: {}.{}", i, step.task, p.name);
      if (p.type == ParamType::Ref) {
        if (!b.ref_step) throw Error(ErrorCode::InvalidArgument, where + " must reference an earlier step");
        if (*b.ref_step >= i) {
          throw Error(ErrorCode::UnboundReference, where + fmt::format(" references step {}", *b.ref_step));
        }
        if (produced[*b.ref_step] != p.ref_kind) {
          throw Error(ErrorCode::UnboundReference,
                      where + fmt::format(" needs {} but step {} produces {}", to_string(p.ref_kind),
                                          *b.ref_step, to_string(produced[*b.ref_step])));
        }
        continue;
      }
      if (b.ref_step) throw Error(ErrorCode::InvalidArgument, where + " takes a literal");
      const json& v = b.literal;
      switch (p.type) {
        case ParamType::String:
          if (!v.is_string() || v.get<std::string>().empty()) {
            throw Error(ErrorCode::InvalidArgument, where + " must be a non-empty string");
          }
          break;
        case ParamType::Modality:
          if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, where + " must be a modality");
          channel_from_string(v.get<std::string>());
          break;
        case ParamType::DateTime:
          if (!v.is_string()) throw Error(ErrorCode::InvalidArgument, where + " must be a date-time");
          try {
            store::parse_local_time(v.get<std::string>(), 0);
          } catch (const Error& e) {
            throw Error(ErrorCode::InvalidArgument, where + ": " + e.what());
          }
          break;
        case ParamType::Number:
          if (!v.is_number()) throw Error(ErrorCode::InvalidArgument, where + " must be a number");
          break;
        case ParamType::Ref:
          break;
      }
    }
    produced.push_back(spec->produces);
  }
}

}  // namespace pulse::agent
