#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "../support.hpp"
#include "pulse/agent/orchestrator.hpp"
#include "pulse/error.hpp"

using namespace pulse;
using namespace pulse::agent;
using nlohmann::json;
using pulse::testing::TempDir;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::TaskFailed;
}

// Answers every prompt with a fixed function of it.
class ScriptedBackend : public LlmBackend {
 public:
  explicit ScriptedBackend(std::function<std::string(const std::string&)> fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt) override {
    prompts_.push_back(prompt);
    return fn_(prompt);
  }
  std::string name() const override { return "scripted"; }
  std::vector<std::string> prompts_;

 private:
  std::function<std::string(const std::string&)> fn_;
};

std::shared_ptr<LlmBackend> fixture_mock(const std::string& name) {
  return MockBackend::from_files({testing::fixture_path("transcripts/" + name)});
}

const char* kGoodPlan = R"({"rationale": "lookup then estimate", "steps": [
  {"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG", "at": "2019-07-25T08:05"}},
  {"task": "estimate_hr_ppg", "args": {"recording": {"$ref": 0}}},
  {"task": "summarize_hr", "args": {"hr": {"$ref": 1}}}]})";

struct AgentFixture {
  TempDir dir;
  std::shared_ptr<store::DataStore> ds = testing::seeded_agent_store(dir);
  TaskRegistry registry = default_registry();
  TaskContext ctx{ds, {}, {}};
};

DataPipeEntry hr_entry(std::vector<double> bpm, const std::string& rec, const std::string& modality) {
  DataPipeEntry e;
  e.kind = ValueKind::HR_SERIES;
  HrSeries hr;
  for (std::size_t i = 0; i < bpm.size(); ++i) hr.window_start_s.push_back(30.0 * static_cast<double>(i));
  hr.bpm = std::move(bpm);
  e.hr = std::make_shared<HrSeries>(hr);
  e.payload = summarize(hr);
  e.meta = {{"recording_id", rec}, {"modality", modality}, {"user_id", "s01"}, {"start_local", "2019-07-25T08:01:00"}};
  return e;
}

TaskResult ok_result(const std::string& key) {
  TaskResult r;
  r.task = "estimate_hr_ppg";
  r.output_key = key;
  return r;
}

SessionInput input(std::string query, std::vector<Turn> history = {}) {
  SessionInput in;
  in.query = std::move(query);
  in.history = std::move(history);
  return in;
}

}  // namespace

TEST_CASE("prompt fingerprints") {
  CHECK(normalize_prompt("  a \n\t b  c\n") == "a b c");
  CHECK(prompt_fingerprint("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(prompt_fingerprint("a  b\n") == prompt_fingerprint("a b"));
}

TEST_CASE("mock backend and transcripts") {
  MockBackend m;
  m.add_prompt("hello   world", "hi");
  CHECK(m.complete("hello world") == "hi");
  CHECK(m.calls() == 1);
  try {
    m.complete("something else");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendUnavailable);
    CHECK(e.detail()["prompt_fingerprint"] == prompt_fingerprint("something else"));
  }

  TempDir dir;
  const std::string path = (dir.path() / "t.json").string();
  save_transcript(path, {{"ab", "one"}, {"cd", "two"}});
  const auto t = load_transcript(path);
  REQUIRE(t.size() == 2);
  CHECK(t[1].prompt_fingerprint == "cd");
  CHECK(t[1].response == "two");
  CHECK(code_of([&] { load_transcript((dir.path() / "missing.json").string()); }) == ErrorCode::IoError);
}

TEST_CASE("plan parsing") {
  const Plan p = parse_plan(std::string("Here is my plan:\n") + kGoodPlan + "\nDone.");
  REQUIRE(p.steps.size() == 3);
  CHECK(p.rationale == "lookup then estimate");
  CHECK(p.steps[0].args.at("user_id").literal == "s01");
  CHECK(p.steps[1].args.at("recording").ref_step == 0u);
  CHECK(parse_plan(to_json(p).dump()).steps.size() == 3);
  CHECK(to_json(parse_plan(to_json(p).dump())) == to_json(p));

  CHECK(code_of([] { parse_plan("no json here"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_plan(R"({"steps": 3})"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_plan(R"({"steps": [{"args": {}}]})"); }) == ErrorCode::ParseError);
  CHECK(code_of([] { parse_plan(R"({"steps": [{"task": "x", "args": {"a": {"$ref": -1}}}]})"); }) ==
        ErrorCode::ParseError);
}

TEST_CASE("plan validation") {
  const TaskRegistry reg = default_registry();
  validate_plan(parse_plan(kGoodPlan), reg);

  auto bad = [&](const char* text) { return code_of([&] { validate_plan(parse_plan(text), reg); }); };
  CHECK(bad(R"({"steps": [{"task": "launch_rocket", "args": {}}]})") == ErrorCode::UnknownTask);
  CHECK(bad(R"({"steps": [{"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG"}}]})") ==
        ErrorCode::InvalidArgument);
  CHECK(bad(R"({"steps": [{"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG",
            "at": "2019-07-25T08:05", "extra": 1}}]})") == ErrorCode::InvalidArgument);
  CHECK(bad(R"({"steps": [{"task": "lookup_recording", "args": {"user_id": "s01", "modality": "EEG",
            "at": "2019-07-25T08:05"}}]})") == ErrorCode::InvalidArgument);
  CHECK(bad(R"({"steps": [{"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG",
            "at": "tomorrow"}}]})") == ErrorCode::InvalidArgument);
  CHECK(bad(R"({"steps": [{"task": "estimate_hr_ppg", "args": {"recording": {"$ref": 0}}}]})") ==
        ErrorCode::UnboundReference);
  CHECK(bad(R"({"steps": [{"task": "estimate_hr_ppg", "args": {"recording": {"$ref": 1}}},
            {"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG", "at": "2019-07-25T08:05"}}]})") ==
        ErrorCode::UnboundReference);
  // summarize_hr wants an HR series, not a recording
  CHECK(bad(R"({"steps": [{"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG", "at": "2019-07-25T08:05"}},
            {"task": "summarize_hr", "args": {"hr": {"$ref": 0}}}]})") == ErrorCode::UnboundReference);
  CHECK(bad(R"({"steps": []})") == ErrorCode::InvalidArgument);
}

TEST_CASE("datapipe is write-once with sequential keys") {
  DataPipe dp;
  DataPipeEntry a;
  a.payload = 1;
  CHECK(dp.put(a).key == "dp1");
  CHECK(dp.put(a).key == "dp2");
  CHECK(dp.size() == 2);
  CHECK(dp.contains("dp2"));
  CHECK(dp.get("dp1").payload == 1);
  CHECK(code_of([&] { dp.get("dp3"); }) == ErrorCode::UnboundReference);
}

TEST_CASE("registry") {
  TaskRegistry reg = default_registry();
  CHECK(reg.specs().size() == 4);
  CHECK(reg.find("summarize_hr")->produces == ValueKind::SCALAR);
  CHECK(reg.find("nope") == nullptr);
  CHECK(code_of([&] { reg.add(*reg.find("summarize_hr"), {}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("summarize") {
  const json s = summarize(HrSeries{{0, 30, 60}, {60, kNaN, 80}});
  CHECK(s["windows"] == 3);
  CHECK(s["valid_windows"] == 2);
  CHECK(s["nan_windows"] == 1);
  CHECK(s["mean_bpm"].get<double>() == doctest::Approx(70));
  CHECK(s["min_bpm"].get<double>() == 60);
  CHECK(s["max_bpm"].get<double>() == 80);
  const json n = summarize(HrSeries{{0}, {kNaN}});
  CHECK(n["valid_windows"] == 0);
  CHECK((n["mean_bpm"].is_null() || std::isnan(n["mean_bpm"].get<double>())));
}

TEST_CASE("execute runs a plan against the store") {
  AgentFixture f;
  DataPipe dp;
  const auto results = execute(parse_plan(kGoodPlan), dp, f.registry, f.ctx);
  REQUIRE(results.size() == 3);
  for (const auto& r : results) CHECK(r.status == TaskStatus::OK);
  CHECK(results[2].output_key == "dp3");
  const DataPipeEntry& rec = dp.get("dp1");
  CHECK(rec.kind == ValueKind::TIMESERIES_REF);
  REQUIRE(rec.series);
  CHECK(rec.series->size() == 20 * 780);  // 900 s minus the calibration trim at each end
  CHECK(rec.payload.dump().size() < 400);  // samples stay out of the payload
  const DataPipeEntry& hr = dp.get("dp2");
  REQUIRE(hr.hr);
  CHECK(hr.hr->size() == 26);
  CHECK(dp.get("dp3").payload["mean_bpm"].get<double>() > 40);

  // A failing lookup stops the plan and keeps the error detail.
  const Plan late = parse_plan(R"({"steps": [
    {"task": "lookup_recording", "args": {"user_id": "s01", "modality": "PPG", "at": "2019-07-25T11:00"}},
    {"task": "estimate_hr_ppg", "args": {"recording": {"$ref": 0}}}]})");
  const auto failed = execute(late, dp, f.registry, f.ctx);
  REQUIRE(failed.size() == 1);
  CHECK(failed[0].status == TaskStatus::FAILED);
  CHECK(failed[0].error_code == ErrorCode::NoRecordingAtTime);
  CHECK(failed[0].error_detail["nearest"]["suggested_local"].is_string());
  CHECK(dp.size() == 3);
}

TEST_CASE("tag extraction") {
  const auto t = extract_tagged_values("HR was <hr>72.4</hr> then <hr> 80 </hr>, noisy <hr>NaN</hr>, bad <hr>x</hr>");
  REQUIRE(t.values.size() == 3);
  CHECK(t.values[0] == 72.4);
  CHECK(t.values[1] == 80);
  CHECK(std::isnan(t.values[2]));
  CHECK(t.skipped == 1);
  CHECK(extract_tagged_values("<b>1</b> <hr>2</hr>", "b").values == std::vector<double>{1});
  CHECK(extract_tagged_values("no tags").values.empty());
}

TEST_CASE("generate_response tags exactly the reported values") {
  DataPipe dp;
  dp.put(hr_entry({70.0, 72.0, kNaN, 74.5}, "s01_ppg_1", "PPG"));
  const std::vector<TaskResult> ok{ok_result("dp1")};
  // mean of 70, 72, 74.5 = 72.1666 -> 72.2

  SUBCASE("already tagged") {
    ScriptedBackend llm([](const std::string&) { return "It was <hr>72.2</hr> BPM."; });
    const AgentResponse r = generate_response("q", ok, dp, llm);
    CHECK(r.text == "It was <hr>72.2</hr> BPM.");
    CHECK(r.extracted_values == std::vector<double>{72.2});
    REQUIRE(r.values.size() == 1);
    CHECK(r.values[0].value == 72.2);
    CHECK(r.values[0].recording_id == "s01_ppg_1");
    REQUIRE(r.series.size() == 1);
    CHECK(r.series[0].hr.size() == 4);
    REQUIRE(llm.prompts_.size() == 1);
    CHECK(llm.prompts_[0].find(std::string(prompts::kRespondMarker)) != std::string::npos);
    CHECK(llm.prompts_[0].find("mean_bpm=72.2") != std::string::npos);
  }
  SUBCASE("bare value gets wrapped") {
    ScriptedBackend llm([](const std::string&) { return "Average 72.2 BPM over 3 of 4 windows."; });
    CHECK(generate_response("q", ok, dp, llm).text == "Average <hr>72.2</hr> BPM over 3 of 4 windows.");
  }
  SUBCASE("a stray tag is unwrapped") {
    ScriptedBackend llm([](const std::string&) { return "Peak <hr>74.5</hr> BPM, average 72.2 BPM."; });
    const AgentResponse r = generate_response("q", ok, dp, llm);
    CHECK(r.text == "Peak 74.5 BPM, average <hr>72.2</hr> BPM.");
    CHECK(r.extracted_values == std::vector<double>{72.2});
  }
  SUBCASE("an unmentioned result is appended") {
    dp.put(hr_entry({90.0, 91.0}, "s01_ecg_1", "ECG_LEAD_II"));
    const std::vector<TaskResult> both{ok_result("dp1"), ok_result("dp2")};
    ScriptedBackend llm([](const std::string&) { return "PPG said <hr>72.2</hr>."; });
    const AgentResponse r = generate_response("q", both, dp, llm);
    CHECK(r.extracted_values == std::vector<double>{72.2, 90.5});
    CHECK(r.text.find("s01_ecg_1: <hr>90.5</hr>") != std::string::npos);
  }
  SUBCASE("a tag at other precision is rewritten to the reported value") {
    ScriptedBackend llm([](const std::string&) { return "It was <hr>72.23</hr> BPM."; });
    const AgentResponse r = generate_response("q", ok, dp, llm);
    CHECK(r.text == "It was <hr>72.2</hr> BPM.");
    CHECK(r.extracted_values == std::vector<double>{72.2});
  }
  SUBCASE("dates and clock times are not values") {
    DataPipe whole;
    whole.put(hr_entry({31.0, 31.0}, "s01_ppg_1", "PPG"));
    ScriptedBackend llm([](const std::string&) { return "On 2019-07-25 at 08:31 it was 31 BPM."; });
    const AgentResponse r = generate_response("q", {ok_result("dp1")}, whole, llm);
    CHECK(r.text == "On 2019-07-25 at 08:31 it was <hr>31.0</hr> BPM.");
  }
  SUBCASE("no value at all") {
    ScriptedBackend llm([](const std::string&) { return "I don't know."; });
    CHECK(code_of([&] { generate_response("q", ok, dp, llm); }) == ErrorCode::ResponseMalformed);
  }
  SUBCASE("nothing to report") {
    ScriptedBackend llm([](const std::string&) { return ""; });
    CHECK(code_of([&] { generate_response("q", {}, dp, llm); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("generate_response reports NaN for an all-noisy recording") {
  DataPipe dp;
  dp.put(hr_entry({kNaN, kNaN}, "s01_ppg_1", "PPG"));
  HeuristicBackend llm;
  const AgentResponse r = generate_response("q", {ok_result("dp1")}, dp, llm);
  CHECK(r.text.find("<hr>NaN</hr>") != std::string::npos);
  REQUIRE(r.extracted_values.size() == 1);
  CHECK(std::isnan(r.extracted_values[0]));
  CHECK(r.to_json()["values"][0]["value"].is_null());
}

TEST_CASE("planning picks the best-scored valid candidate") {
  const TaskRegistry reg = default_registry();
  const std::string bad_plan = R"({"steps": [{"task": "summarize_hr", "args": {"hr": {"$ref": 0}}}]})";
  ScriptedBackend llm([&](const std::string& p) -> std::string {
    if (p.find(prompts::kCandidatesMarker) != std::string::npos) {
      return "<candidate>" + bad_plan + "</candidate>\n<candidate>" + kGoodPlan + "</candidate>\n<candidate>garbage</candidate>";
    }
    return R"({"scores": [9, 7, 8]})";
  });
  const Plan p = plan({"what was the HR of s01 at 08:05 on 2019-07-25?", {}, {}}, reg, llm);
  CHECK(p.steps.size() == 3);
  CHECK(llm.prompts_.size() == 2);
  CHECK(llm.prompts_[1].find(prompts::kCritiqueMarker) != std::string::npos);

  ScriptedBackend clarify([](const std::string&) { return "<clarify>Which user?</clarify>"; });
  try {
    plan({"heart rate?", {}, {}}, reg, clarify);
    FAIL("expected clarification");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NeedsClarification);
    CHECK(std::string(e.what()) == "Which user?");
  }

  ScriptedBackend junk([](const std::string& p) -> std::string {
    if (p.find(prompts::kCandidatesMarker) != std::string::npos) return "<candidate>nope</candidate>";
    return R"({"scores": [5]})";
  });
  CHECK(code_of([&] { plan({"q", {}, {}}, reg, junk); }) == ErrorCode::PlanningFailed);
}

TEST_CASE("session: valid query from the recorded transcript") {
  AgentFixture f;
  auto mock = std::dynamic_pointer_cast<MockBackend>(fixture_mock("valid_ppg.json"));
  DataPipe dp;
  const SessionOutcome out = run_session(input("What was the average heart rate of user s01 on 2019-07-25 at 08:05 from PPG?"),
                                         f.registry, *mock, f.ctx, dp);
  const auto* r = std::get_if<AgentResponse>(&out);
  REQUIRE(r != nullptr);
  CHECK(mock->calls() == 3);
  REQUIRE(r->extracted_values.size() == 1);
  CHECK(r->extracted_values[0] == r->values[0].value);
  CHECK(r->text.find("<hr>") != std::string::npos);
}

TEST_CASE("session: comparison reports both modalities") {
  AgentFixture f;
  auto mock = fixture_mock("compare_ppg_ecg.json");
  DataPipe dp;
  const SessionOutcome out =
      run_session(input("Compare PPG and ECG heart rate for user s01 on 2019-07-25 at 08:35"), f.registry, *mock, f.ctx, dp);
  const auto* r = std::get_if<AgentResponse>(&out);
  REQUIRE(r != nullptr);
  REQUIRE(r->values.size() == 2);
  CHECK(r->values[0].modality == "PPG");
  CHECK(r->values[1].modality == "ECG_LEAD_II");
  CHECK(std::fabs(r->values[0].value - r->values[1].value) < 3.0);
  CHECK(r->extracted_values.size() == 2);
}

TEST_CASE("session: replans once after NoRecordingAtTime") {
  AgentFixture f;
  auto inner = fixture_mock("replan_time.json");
  RecordingBackend rec(inner);
  DataPipe dp;
  const SessionOutcome out =
      run_session(input("What was the heart rate of user s01 on 2019-07-25 at 09:10 from PPG?"), f.registry, rec, f.ctx, dp);
  REQUIRE(std::holds_alternative<AgentResponse>(out));
  const auto ex = rec.exchanges();
  REQUIRE(ex.size() == 5);
  std::size_t planning_rounds = 0;
  for (const auto& e : ex) planning_rounds += e.prompt.find(prompts::kCandidatesMarker) != std::string::npos;
  CHECK(planning_rounds == 2);
  CHECK(ex[2].prompt.find("NoRecordingAtTime") != std::string::npos);
  CHECK(ex[2].prompt.find("suggested_local") != std::string::npos);
  CHECK(ex[0].prompt.find("NoRecordingAtTime") == std::string::npos);
}

TEST_CASE("session: persistent failure ends in a clarification after the replan budget") {
  AgentFixture f;
  auto mock = std::dynamic_pointer_cast<MockBackend>(fixture_mock("unknown_user.json"));
  DataPipe dp;
  const SessionOutcome out =
      run_session(input("What was the heart rate of user zz9 on 2019-07-25 at 08:05?"), f.registry, *mock, f.ctx, dp);
  const auto* c = std::get_if<ClarificationRequest>(&out);
  REQUIRE(c != nullptr);
  CHECK(c->attempts.size() == 4);
  for (const auto& a : c->attempts) CHECK(a.code == ErrorCode::UserNotFound);
  CHECK(mock->calls() == 8);
  const json j = c->to_json();
  CHECK(j["attempts"].size() == 4);
  CHECK(j["attempts"][0]["code"] == "UserNotFound");
}

TEST_CASE("session: missing facts ask for clarification without running anything") {
  AgentFixture f;
  auto mock = std::dynamic_pointer_cast<MockBackend>(fixture_mock("missing_user.json"));
  DataPipe dp;
  const SessionOutcome out = run_session(input("What was my heart rate yesterday?"), f.registry, *mock, f.ctx, dp);
  const auto* c = std::get_if<ClarificationRequest>(&out);
  REQUIRE(c != nullptr);
  CHECK(c->attempts.empty());
  CHECK(mock->calls() == 1);
  CHECK(dp.size() == 0);
}

TEST_CASE("session: unknown prompt to the mock is a backend failure") {
  AgentFixture f;
  MockBackend empty;
  DataPipe dp;
  const SessionOutcome out = run_session(input("anything"), f.registry, empty, f.ctx, dp);
  const auto* fail = std::get_if<SessionFailure>(&out);
  REQUIRE(fail != nullptr);
  CHECK(fail->code == ErrorCode::BackendUnavailable);
}

TEST_CASE("session: follow-up questions reuse the conversation") {
  AgentFixture f;
  HeuristicBackend llm;
  DataPipe dp;
  std::vector<Turn> history{{"user", "What was the heart rate of user s01 on 2019-07-25 at 08:05 from PPG?"}};
  const SessionOutcome out = run_session(input("And from the ECG?", history), f.registry, llm, f.ctx, dp);
  const auto* r = std::get_if<AgentResponse>(&out);
  REQUIRE(r != nullptr);
  REQUIRE(r->values.size() >= 1);
  CHECK(r->values.back().modality == "ECG_LEAD_II");
}

TEST_CASE("property: every prompt stays small and summary-only") {
  AgentFixture f;
  auto rec = std::make_shared<RecordingBackend>(std::make_shared<HeuristicBackend>());
  const std::vector<std::string> queries{
      "What was the average heart rate of user s01 on 2019-07-25 at 08:05 from PPG?",
      "Compare PPG and ECG heart rate for user s01 on 2019-07-25 at 08:35",
      "What was the heart rate of user s01 on 2019-07-25 at 09:10 from PPG?",
      "What was the heart rate of user zz9 on 2019-07-25 at 08:05?",
      "heart rate of participant s02 on 2019-07-26 at 08:10 using ECG",
  };
  for (const auto& q : queries) {
    DataPipe dp;
    run_session(input(q), f.registry, *rec, f.ctx, dp);
  }
  const auto ex = rec->exchanges();
  CHECK(ex.size() > 20);
  for (const auto& e : ex) CHECK(testing::count_numeric_literals(e.prompt) <= 64);
}

TEST_CASE("heuristic backend is deterministic") {
  AgentFixture f;
  HeuristicBackend llm;
  const SessionInput in = input("Compare PPG and ECG heart rate for user s01 on 2019-07-25 at 08:35");
  DataPipe a, b;
  const auto ra = std::get<AgentResponse>(run_session(in, f.registry, llm, f.ctx, a));
  const auto rb = std::get<AgentResponse>(run_session(in, f.registry, llm, f.ctx, b));
  CHECK(ra.text == rb.text);
  CHECK(ra.to_json() == rb.to_json());
}
