#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "pulse/agent/orchestrator.hpp"
#include "pulse/config.hpp"

namespace httplib {
class Server;
}

namespace pulse::service {

/// HTTP status for a library error code.
int http_status(ErrorCode code);

struct Session {
  std::string id;
  std::mutex busy;  // held for the duration of a query
  std::vector<agent::Turn> history;
  agent::DataPipe datapipe;
  std::chrono::steady_clock::time_point last_used;
};

/// ≥128-bit random hex identifier.
std::string new_session_id();

/// HTTP front end over one datastore and one backend. Sessions live in
/// memory only and expire after `session_idle_s` without a request.
class Service {
 public:
  Service(AppConfig config, std::shared_ptr<agent::LlmBackend> llm,
          std::shared_ptr<store::DataStore> store);
  ~Service();

  /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  void stop();

  std::size_t session_count();

 private:
  void routes();
  std::shared_ptr<Session> find_session(const std::string& id);
  void expire_idle();

  AppConfig config_;
  std::shared_ptr<agent::LlmBackend> llm_;
  std::shared_ptr<store::DataStore> store_;
  agent::TaskRegistry registry_;
  agent::TaskContext context_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace pulse::service
