#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pulse/agent/backend.hpp"
#include "pulse/ecg.hpp"
#include "pulse/metrics.hpp"
#include "pulse/ppg.hpp"
#include "pulse/store.hpp"

namespace pulse {

struct LlmConfig {
  std::string backend = "mock";  // mock | remote | heuristic
  std::string endpoint;
  std::string model = "gpt-3.5-turbo";
  double timeout_s = 30.0;
  std::vector<std::string> fixtures;  // transcript files for the mock
};

/// Service and CLI settings. Every key is optional in the file; unknown keys
/// are rejected so typos surface.
struct AppConfig {
  store::StoreConfig store;
  LlmConfig llm;
  ppg::PipelineConfig ppg;
  ecg::QrsParams qrs;
  double outlier_lo = eval::kOutlierLo;
  double outlier_hi = eval::kOutlierHi;
  std::string host = "127.0.0.1";
  int port = 8080;
  double session_idle_s = 1800.0;
  std::size_t max_replans = 3;

  nlohmann::json to_json() const;
};

/// Throws ParseError (unknown key, wrong type) or IoError.
AppConfig load_config(const std::string& path);
AppConfig config_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");

/// Builds the configured backend. The remote key comes from PULSE_AGENT_LLM_KEY.
std::shared_ptr<agent::LlmBackend> make_backend(const LlmConfig& cfg);

}  // namespace pulse
