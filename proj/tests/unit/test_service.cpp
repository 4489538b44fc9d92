#include <doctest.h>

#include <condition_variable>
#include <fstream>
#include <future>
#include <thread>

#include <httplib.h>

#include "../support.hpp"
#include "pulse/agent/orchestrator.hpp"
#include "pulse/config.hpp"
#include "pulse/error.hpp"
#include "pulse/service.hpp"

using namespace pulse;
using nlohmann::json;
using pulse::testing::TempDir;

namespace {

// Response bodies are kept for the schema check that runs after this binary.
void keep_sample(const std::string& name, const std::string& body) {
  const std::filesystem::path dir = PULSE_SAMPLE_DIR;
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (name + ".json")) << body;
}

class Harness {
 public:
  Harness(std::shared_ptr<agent::LlmBackend> llm, AppConfig cfg = {}) : ds_(testing::seeded_agent_store(dir_)) {
    cfg.store = ds_->config();
    service_ = std::make_unique<service::Service>(cfg, std::move(llm), ds_);
    port_ = service_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { service_->listen(); });
  }
  ~Harness() {
    service_->stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  std::string new_session() const {
    auto res = client().Post("/v1/sessions");
    REQUIRE(res);
    REQUIRE(res->status == 201);
    return json::parse(res->body)["session_id"];
  }
  httplib::Result query(const std::string& session, const std::string& text) const {
    return client().Post("/v1/sessions/" + session + "/query", json{{"text", text}}.dump(), "application/json");
  }
  service::Service& service() { return *service_; }

 private:
  TempDir dir_;
  std::shared_ptr<store::DataStore> ds_;
  std::unique_ptr<service::Service> service_;
  int port_ = 0;
  std::thread thread_;
};

std::shared_ptr<agent::LlmBackend> fixture_mock() {
  std::vector<std::string> files;
  for (const char* f : {"valid_ppg", "compare_ppg_ecg", "replan_time", "unknown_user", "missing_user"}) {
    files.push_back(testing::fixture_path(std::string("transcripts/") + f + ".json"));
  }
  return agent::MockBackend::from_files(files);
}

// Blocks inside the first completion until released.
class GateBackend : public agent::LlmBackend {
 public:
  std::string complete(const std::string& prompt) override {
    {
      std::unique_lock lock(mu_);
      entered_ = true;
      cv_.notify_all();
      cv_.wait(lock, [this] { return released_; });
    }
    return inner_.complete(prompt);
  }
  std::string name() const override { return "gate"; }
  void wait_entered() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return entered_; });
  }
  void release() {
    std::lock_guard lock(mu_);
    released_ = true;
    cv_.notify_all();
  }

 private:
  agent::HeuristicBackend inner_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool entered_ = false;
  bool released_ = false;
};

}  // namespace

TEST_CASE("http status mapping") {
  CHECK(service::http_status(ErrorCode::ParseError) == 400);
  CHECK(service::http_status(ErrorCode::UserNotFound) == 404);
  CHECK(service::http_status(ErrorCode::NoRecordingAtTime) == 404);
  CHECK(service::http_status(ErrorCode::OverlapConflict) == 409);
  CHECK(service::http_status(ErrorCode::NeedsClarification) == 422);
  CHECK(service::http_status(ErrorCode::BackendUnavailable) == 503);
  CHECK(service::http_status(ErrorCode::BackendTimeout) == 504);
  CHECK(service::http_status(ErrorCode::TaskFailed) == 500);
}

TEST_CASE("session ids are 128-bit hex and distinct") {
  const std::string a = service::new_session_id(), b = service::new_session_id();
  CHECK(a.size() == 32);
  CHECK(a.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(a != b);
}

TEST_CASE("service: health, sessions, queries") {
  Harness h(fixture_mock());
  auto c = h.client();

  auto health = c.Get("/v1/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");
  keep_sample("healthz", health->body);

  auto created = c.Post("/v1/sessions");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(created->get_header_value("Content-Type") == "application/json");
  keep_sample("session", created->body);
  const std::string sid = json::parse(created->body)["session_id"];

  auto ok = h.query(sid, "What was the average heart rate of user s01 on 2019-07-25 at 08:05 from PPG?");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  keep_sample("agent_response", ok->body);
  const json r = json::parse(ok->body);
  CHECK(r["session_id"] == sid);
  CHECK(r["text"].get<std::string>().find("<hr>") != std::string::npos);
  REQUIRE(r["extracted_values"].size() == 1);
  CHECK(r["extracted_values"][0] == r["values"][0]["value"]);
  REQUIRE(r["hr_series"].size() == 1);
  CHECK(r["hr_series"][0]["bpm"].size() == 26);

  // Replanning happens inside one request. Each transcript was recorded
  // as the first turn of a session, hence the fresh sessions.
  auto replanned = h.query(h.new_session(), "What was the heart rate of user s01 on 2019-07-25 at 09:10 from PPG?");
  REQUIRE(replanned);
  CHECK(replanned->status == 200);

  const std::string sid2 = h.new_session();
  auto exhausted = h.query(sid2, "What was the heart rate of user zz9 on 2019-07-25 at 08:05?");
  REQUIRE(exhausted);
  CHECK(exhausted->status == 422);
  keep_sample("clarification", exhausted->body);
  const json cl = json::parse(exhausted->body);
  CHECK(cl["code"] == "NeedsClarification");
  CHECK(cl["session_id"] == sid2);
  CHECK(cl["attempts"].size() == 4);

  auto missing = h.query(h.new_session(), "What was my heart rate yesterday?");
  REQUIRE(missing);
  CHECK(missing->status == 422);
  CHECK(json::parse(missing->body)["attempts"].empty());
}

TEST_CASE("service: request errors") {
  Harness h(fixture_mock());
  auto c = h.client();
  const std::string sid = h.new_session();

  auto unknown = h.query("00ff", "hello");
  REQUIRE(unknown);
  CHECK(unknown->status == 404);
  CHECK(json::parse(unknown->body)["code"] == "SessionNotFound");
  keep_sample("error", unknown->body);

  auto bad_json = c.Post("/v1/sessions/" + sid + "/query", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
  auto no_text = c.Post("/v1/sessions/" + sid + "/query", R"({"query": "x"})", "application/json");
  REQUIRE(no_text);
  CHECK(no_text->status == 400);
  CHECK(json::parse(no_text->body)["code"] == "InvalidArgument");

  // The mock has no answer for this prompt.
  auto unscripted = h.query(sid, "Tell me a joke");
  REQUIRE(unscripted);
  CHECK(unscripted->status == 503);
  CHECK(json::parse(unscripted->body)["code"] == "BackendUnavailable");

  auto nowhere = c.Get("/v1/nowhere");
  REQUIRE(nowhere);
  CHECK(nowhere->status == 404);
  CHECK(json::parse(nowhere->body).contains("code"));
}

TEST_CASE("service: one query at a time per session") {
  auto gate = std::make_shared<GateBackend>();
  Harness h(gate);
  const std::string sid = h.new_session();
  auto first = std::async(std::launch::async, [&] {
    return h.query(sid, "What was the average heart rate of user s01 on 2019-07-25 at 08:05 from PPG?");
  });
  gate->wait_entered();
  auto second = h.query(sid, "What was the average heart rate of user s01 on 2019-07-25 at 08:05 from PPG?");
  REQUIRE(second);
  CHECK(second->status == 409);
  CHECK(json::parse(second->body)["code"] == "SessionBusy");
  // Other sessions are not blocked by it.
  CHECK(h.client().Post("/v1/sessions")->status == 201);
  gate->release();
  auto done = first.get();
  REQUIRE(done);
  CHECK(done->status == 200);
}

TEST_CASE("service: idle sessions expire") {
  AppConfig cfg;
  cfg.session_idle_s = 0.2;
  Harness h(fixture_mock(), cfg);
  const std::string old = h.new_session();
  std::this_thread::sleep_for(std::chrono::milliseconds(300));
  h.new_session();
  CHECK(h.service().session_count() == 1);
  auto gone = h.query(old, "What was my heart rate yesterday?");
  REQUIRE(gone);
  CHECK(gone->status == 404);
}

TEST_CASE("service: recordings upload and listing") {
  Harness h(fixture_mock());
  auto c = h.client();

  auto list = c.Get("/v1/users/s01/recordings");
  REQUIRE(list);
  CHECK(list->status == 200);
  keep_sample("recordings", list->body);
  const json l = json::parse(list->body);
  CHECK(l.size() == 4);  // two PPG and two ECG recordings
  CHECK(l[0]["user_id"] == "s01");

  auto nobody = c.Get("/v1/users/nobody/recordings");
  REQUIRE(nobody);
  CHECK(nobody->status == 404);
  CHECK(json::parse(nobody->body)["code"] == "UserNotFound");

  std::vector<double> samples(20 * 200);
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = std::sin(0.4 * static_cast<double>(i));
  const std::string csv = store::format_recording_csv(samples, 20.0);
  const auto form = [&](const std::string& start, const std::string& body) {
    return httplib::MultipartFormDataItems{{"file", body, "rec.csv", "text/csv"},
                                           {"user_id", "p07", "", ""},
                                           {"modality", "PPG", "", ""},
                                           {"start", start, "", ""},
                                           {"rate_hz", "20", "", ""}};
  };
  auto up = c.Post("/v1/recordings", form("2019-08-01T09:00", csv));
  REQUIRE(up);
  CHECK(up->status == 201);
  keep_sample("recording_meta", up->body);
  const json m = json::parse(up->body);
  CHECK(m["recording_id"] == "p07_ppg_1564650000000");
  CHECK(m["duration_s"] == 200.0);

  auto epoch_start = c.Post("/v1/recordings", form("1564650200", csv));
  REQUIRE(epoch_start);
  CHECK(epoch_start->status == 201);

  auto overlap = c.Post("/v1/recordings", form("2019-08-01T09:01", csv));
  REQUIRE(overlap);
  CHECK(overlap->status == 409);
  CHECK(json::parse(overlap->body)["code"] == "OverlapConflict");

  auto bad_csv = c.Post("/v1/recordings", form("2019-08-02T09:00", "t_offset_s,value\n0,1\n0.5,2\n"));
  REQUIRE(bad_csv);
  CHECK(bad_csv->status == 400);
  CHECK(json::parse(bad_csv->body)["code"] == "ParseError");

  httplib::MultipartFormDataItems partial{{"user_id", "p07", "", ""}};
  auto missing = c.Post("/v1/recordings", partial);
  REQUIRE(missing);
  CHECK(missing->status == 400);

  auto not_form = c.Post("/v1/recordings", "{}", "application/json");
  REQUIRE(not_form);
  CHECK(not_form->status == 400);

  CHECK(json::parse(c.Get("/v1/users/p07/recordings")->body).size() == 2);
}

TEST_CASE("remote backend speaks chat-completion JSON") {
  httplib::Server fake;
  json seen;
  std::string auth;
  fake.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(R"({"choices": [{"message": {"role": "assistant", "content": "pong"}}]})", "application/json");
  });
  fake.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content("{}", "application/json");
  });
  fake.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("oops", "text/plain");
  });
  fake.Post("/garbled", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"choices": []})", "application/json");
  });
  const int port = fake.bind_to_any_port("127.0.0.1");
  std::thread t([&] { fake.listen_after_bind(); });
  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  agent::RemoteConfig rc;
  rc.endpoint = base + "/v1/chat/completions";
  rc.model = "test-model";
  rc.api_key = "k123";
  rc.timeout = std::chrono::milliseconds(2000);
  CHECK(agent::RemoteBackend(rc).complete("ping") == "pong");
  CHECK(seen["model"] == "test-model");
  CHECK(seen["temperature"] == 0);
  CHECK(seen["messages"][0]["role"] == "user");
  CHECK(seen["messages"][0]["content"] == "ping");
  CHECK(auth == "Bearer k123");

  const auto code = [&](const std::string& path, int timeout_ms) {
    agent::RemoteConfig c = rc;
    c.endpoint = base + path;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    try {
      agent::RemoteBackend(c).complete("ping");
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::TaskFailed;
  };
  CHECK(code("/slow", 300) == ErrorCode::BackendTimeout);
  CHECK(code("/broken", 2000) == ErrorCode::BackendUnavailable);
  CHECK(code("/garbled", 2000) == ErrorCode::BackendUnavailable);
  fake.stop();
  t.join();

  // Nothing listens there any more.
  agent::RemoteConfig dead = rc;
  CHECK_THROWS_AS(agent::RemoteBackend(dead).complete("ping"), Error);
  try {
    agent::RemoteBackend(dead).complete("ping");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendUnavailable);
  }
  rc.endpoint = "not a url";
  CHECK_THROWS_AS(agent::RemoteBackend{rc}, Error);
}
