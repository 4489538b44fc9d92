#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pulse::agent {

/// Text completion provider. Implementations must tolerate concurrent calls.
class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  /// Throws BackendUnavailable or BackendTimeout.
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string name() const = 0;
};

/// Collapses whitespace runs to one space and trims both ends.
std::string normalize_prompt(std::string_view prompt);
/// Lowercase hex SHA-256 of the normalized prompt.
std::string prompt_fingerprint(std::string_view prompt);

struct TranscriptEntry {
  std::string prompt_fingerprint;
  std::string response;
};

std::vector<TranscriptEntry> load_transcript(const std::string& path);
void save_transcript(const std::string& path, const std::vector<TranscriptEntry>& entries);

/// Canned responses keyed by prompt fingerprint. Unknown prompts raise
/// BackendUnavailable with the fingerprint in the error detail.
class MockBackend : public LlmBackend {
 public:
  MockBackend() = default;
  explicit MockBackend(const std::vector<TranscriptEntry>& entries);
  static std::shared_ptr<MockBackend> from_files(const std::vector<std::string>& paths);

  /// Later entries for the same fingerprint replace earlier ones.
  void add(const std::string& fingerprint, std::string response);
  void add_prompt(std::string_view prompt, std::string response) {
    add(prompt_fingerprint(prompt), std::move(response));
  }

  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "mock"; }
  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::unordered_map<std::string, std::string> canned_;
  std::atomic<std::size_t> calls_{0};
};

struct RemoteConfig {
  std::string endpoint;  // full URL of a chat-completions resource
  std::string model = "gpt-3.5-turbo";
  std::string api_key;   // sent as a bearer token when non-empty
  std::chrono::milliseconds timeout{30000};
};

/// Chat-completion JSON over HTTP(S): one user message in,
/// choices[0].message.content out.
class RemoteBackend : public LlmBackend {
 public:
  explicit RemoteBackend(RemoteConfig config);
  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "remote"; }

 private:
  RemoteConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

/// Rule-based stand-in for a language model that answers the orchestrator's
/// own prompt templates. Deterministic; used for offline demos and to
/// produce mock transcripts.
class HeuristicBackend : public LlmBackend {
 public:
  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "heuristic"; }
};

/// Forwards to another backend and keeps every exchange.
class RecordingBackend : public LlmBackend {
 public:
  struct Exchange {
    std::string prompt;
    std::string response;  // empty when the inner call threw
  };

  explicit RecordingBackend(std::shared_ptr<LlmBackend> inner) : inner_(std::move(inner)) {}

  std::string complete(const std::string& prompt) override;
  std::string name() const override { return inner_->name(); }

  std::vector<Exchange> exchanges() const;
  std::vector<TranscriptEntry> transcript() const;
  void clear();

 private:
  std::shared_ptr<LlmBackend> inner_;
  mutable std::mutex mu_;
  std::vector<Exchange> log_;
};

}  // namespace pulse::agent
