#include "pulse/service.hpp"

#include <openssl/rand.h>

#include <cmath>
#include <charconv>

#include <fmt/format.h>
#include <httplib.h>

#include "pulse/error.hpp"

namespace pulse::service {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::ParseError:
    case ErrorCode::NonFiniteSample:
    case ErrorCode::SeriesTooShort:
    case ErrorCode::InvalidWindowSpec:
      return 400;
    case ErrorCode::UserNotFound:
    case ErrorCode::NoRecordingAtTime:
      return 404;
    case ErrorCode::OverlapConflict:
      return 409;
    case ErrorCode::NeedsClarification:
      return 422;
    case ErrorCode::BackendUnavailable:
      return 503;
    case ErrorCode::BackendTimeout:
      return 504;
    default:
      return 500;
  }
}

std::string new_session_id() {
  unsigned char bytes[16];
  if (RAND_bytes(bytes, sizeof bytes) != 1) throw Error(ErrorCode::IoError, "no randomness for session id");
  std::string id;
  for (unsigned char b : bytes) id += fmt::format("{:02x}", b);
  return id;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

void send_error(httplib::Response& res, const Error& e) {
  send_error(res, http_status(e.code()), to_string(e.code()), e.what());
}

double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("{} must be a number", what));
  }
  return v;
}

}  // namespace

Service::Service(AppConfig config, std::shared_ptr<agent::LlmBackend> llm,
                 std::shared_ptr<store::DataStore> store)
    : config_(std::move(config)),
      llm_(std::move(llm)),
      store_(std::move(store)),
      registry_(agent::default_registry()),
      server_(std::make_unique<httplib::Server>()) {
  context_.store = store_;
  context_.ppg = config_.ppg;
  context_.qrs = config_.qrs;
  routes();
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
  if (port == 0) {
    const int p = server_->bind_to_any_port(host);
    if (p < 0) throw Error(ErrorCode::IoError, fmt::format("cannot bind {}", host));
    return p;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::IoError, fmt::format("cannot bind {}:{}", host, port));
  }
  return port;
}

void Service::listen() { server_->listen_after_bind(); }

void Service::stop() {
  if (server_) server_->stop();
}

std::size_t Service::session_count() {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

void Service::expire_idle() {
  const auto now = std::chrono::steady_clock::now();
  const auto idle = std::chrono::duration<double>(config_.session_idle_s);
  std::lock_guard lock(sessions_mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    Session& s = *it->second;
    std::unique_lock busy(s.busy, std::try_to_lock);
    if (busy.owns_lock() && now - s.last_used > idle) {
      busy.unlock();
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

std::shared_ptr<Session> Service::find_session(const std::string& id) {
  std::lock_guard lock(sessions_mu_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

void Service::routes() {
  httplib::Server& srv = *server_;

  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  });

  srv.Get("/v1/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  srv.Post("/v1/sessions", [this](const httplib::Request&, httplib::Response& res) {
    expire_idle();
    auto s = std::make_shared<Session>();
    s->id = new_session_id();
    s->last_used = std::chrono::steady_clock::now();
    {
      std::lock_guard lock(sessions_mu_);
      sessions_.emplace(s->id, s);
    }
    send_json(res, 201, {{"session_id", s->id}});
  });

  srv.Post(R"(/v1/sessions/([0-9a-f]+)/query)", [this](const httplib::Request& req, httplib::Response& res) {
    expire_idle();
    const std::shared_ptr<Session> s = find_session(req.matches[1]);
    if (!s) return send_error(res, 404, "SessionNotFound", "unknown or expired session");
    std::unique_lock busy(s->busy, std::try_to_lock);
    if (!busy.owns_lock()) return send_error(res, 409, "SessionBusy", "a query is already running in this session");
    s->last_used = std::chrono::steady_clock::now();

    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      return send_error(res, 400, "InvalidArgument", "body must be JSON {\"text\": ...}");
    }
    if (!body.is_object() || !body.contains("text") || !body["text"].is_string() ||
        body["text"].get<std::string>().empty()) {
      return send_error(res, 400, "InvalidArgument", "body must be JSON {\"text\": ...}");
    }
    agent::SessionInput input;
    input.query = body["text"].get<std::string>();
    input.history = s->history;
    input.max_replans = config_.max_replans;
    const agent::SessionOutcome outcome = agent::run_session(input, registry_, *llm_, context_, s->datapipe);
    s->history.push_back({"user", input.query});
    s->last_used = std::chrono::steady_clock::now();

    if (const auto* r = std::get_if<agent::AgentResponse>(&outcome)) {
      agent::AgentResponse out = *r;
      out.session_id = s->id;
      s->history.push_back({"agent", out.text});
      return send_json(res, 200, out.to_json());
    }
    if (const auto* c = std::get_if<agent::ClarificationRequest>(&outcome)) {
      s->history.push_back({"agent", c->text});
      json j = c->to_json();
      return send_json(res, 422, {{"code", "NeedsClarification"},
                                  {"message", c->text},
                                  {"session_id", s->id},
                                  {"attempts", j["attempts"]}});
    }
    const auto& f = std::get<agent::SessionFailure>(outcome);
    send_error(res, http_status(f.code), to_string(f.code), f.message);
  });

  srv.Get(R"(/v1/users/([A-Za-z0-9_-]+)/recordings)", [this](const httplib::Request& req, httplib::Response& res) {
    json out = json::array();
    for (const store::RecordingMeta& m : store_->list_recordings(req.matches[1].str())) {
      out.push_back(store::to_json(m));
    }
    send_json(res, 200, out);
  });

  srv.Post("/v1/recordings", [this](const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      return send_error(res, 400, "InvalidArgument", "expected multipart/form-data");
    }
    for (const char* f : {"file", "user_id", "modality", "start", "rate_hz"}) {
      if (!req.has_file(f)) return send_error(res, 400, "InvalidArgument", fmt::format("missing field '{}'", f));
    }
    store::IngestRequest ir;
    ir.user_id = req.get_file_value("user_id").content;
    ir.modality = channel_from_string(req.get_file_value("modality").content);
    const std::string start = req.get_file_value("start").content;
    ir.start_epoch_s = start.find('-') != std::string::npos && start.size() >= 16
                           ? store::parse_local_time(start, store_->config().utc_offset_minutes)
                           : parse_double(start, "start");
    ir.sample_rate_hz = parse_double(req.get_file_value("rate_hz").content, "rate_hz");
    const store::RecordingMeta meta = store_->ingest_csv(req.get_file_value("file").content, ir);
    send_json(res, 201, store::to_json(meta));
  });

  srv.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "NotFound" : "HttpError", httplib::status_message(res.status));
    }
  });
}

}  // namespace pulse::service
