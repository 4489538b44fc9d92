#include "pulse/agent/backend.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include "pulse/error.hpp"

namespace pulse::agent {

using nlohmann::json;

std::string normalize_prompt(std::string_view prompt) {
  std::string out;
  out.reserve(prompt.size());
  bool pending_space = false;
  for (char c : prompt) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::string prompt_fingerprint(std::string_view prompt) {
  const std::string norm = normalize_prompt(prompt);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(norm.data(), norm.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::IoError, "SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::vector<TranscriptEntry> load_transcript(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read transcript " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path, e.what()));
  }
  if (!doc.is_array()) throw Error(ErrorCode::ParseError, path + ": transcript must be an array");
  std::vector<TranscriptEntry> out;
  for (const json& j : doc) {
    if (!j.is_object() || !j.contains("prompt_fingerprint") || !j.contains("response")) {
      throw Error(ErrorCode::ParseError, path + ": entries need prompt_fingerprint and response");
    }
    out.push_back({j["prompt_fingerprint"].get<std::string>(), j["response"].get<std::string>()});
  }
  return out;
}

void save_transcript(const std::string& path, const std::vector<TranscriptEntry>& entries) {
  json doc = json::array();
  for (const TranscriptEntry& e : entries) {
    doc.push_back({{"prompt_fingerprint", e.prompt_fingerprint}, {"response", e.response}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoError, "cannot write transcript " + path);
}

MockBackend::MockBackend(const std::vector<TranscriptEntry>& entries) {
  for (const TranscriptEntry& e : entries) add(e.prompt_fingerprint, e.response);
}

std::shared_ptr<MockBackend> MockBackend::from_files(const std::vector<std::string>& paths) {
  auto mock = std::make_shared<MockBackend>();
  for (const std::string& p : paths) {
    for (TranscriptEntry& e : load_transcript(p)) mock->add(e.prompt_fingerprint, std::move(e.response));
  }
  return mock;
}

void MockBackend::add(const std::string& fingerprint, std::string response) {
  canned_[fingerprint] = std::move(response);
}

std::string MockBackend::complete(const std::string& prompt) {
  ++calls_;
  const std::string fp = prompt_fingerprint(prompt);
  const auto it = canned_.find(fp);
  if (it == canned_.end()) {
    throw Error(ErrorCode::BackendUnavailable, "mock backend has no response for this prompt",
                {{"prompt_fingerprint", fp}});
  }
  return it->second;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "remote endpoint must be an http(s) URL");
  }
  const std::size_t path_start = url.find('/', scheme_end + 3);
  base_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string RemoteBackend::complete(const std::string& prompt) {
  httplib::Client client(base_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const json body = {{"model", config_.model},
                     {"temperature", 0},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
  const auto started = std::chrono::steady_clock::now();
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  const auto elapsed = std::chrono::steady_clock::now() - started;
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || elapsed >= config_.timeout) {
      throw Error(ErrorCode::BackendTimeout,
                  fmt::format("no answer from {} within {} ms", base_, config_.timeout.count()));
    }
    throw Error(ErrorCode::BackendUnavailable,
                fmt::format("{}: {}", base_, httplib::to_string(err)));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::BackendUnavailable, fmt::format("{} answered HTTP {}", base_, res->status),
                {{"status", res->status}});
  }
  try {
    const json reply = json::parse(res->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("unexpected completion payload: ") + e.what());
  }
}

std::string RecordingBackend::complete(const std::string& prompt) {
  std::string response;
  try {
    response = inner_->complete(prompt);
  } catch (...) {
    std::lock_guard lock(mu_);
    log_.push_back({prompt, {}});
    throw;
  }
  std::lock_guard lock(mu_);
  log_.push_back({prompt, response});
  return response;
}

std::vector<RecordingBackend::Exchange> RecordingBackend::exchanges() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::vector<TranscriptEntry> RecordingBackend::transcript() const {
  std::lock_guard lock(mu_);
  std::vector<TranscriptEntry> out;
  for (const Exchange& e : log_) {
    if (!e.response.empty()) out.push_back({prompt_fingerprint(e.prompt), e.response});
  }
  return out;
}

void RecordingBackend::clear() {
  std::lock_guard lock(mu_);
  log_.clear();
}

}  // namespace pulse::agent
