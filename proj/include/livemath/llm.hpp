#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace livemath::llm {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);

struct Message {
  Role role = Role::User;
  std::string text;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  int max_tokens = 2048;
  double temperature = 0.0;
  std::string request_tag;

  /// Throws ArgumentError: messages empty, first non-system message not from
  /// the user, max_tokens < 1 or temperature < 0.
  void validate() const;
};

enum class FinishReason { Stop, Length, Error };

std::string_view to_string(FinishReason f);
FinishReason finish_from_string(std::string_view s);  // unknown -> Error

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  FinishReason finish = FinishReason::Stop;
  Usage usage;
  int attempts = 1;
};

enum class BackendKind { HttpOpenAICompatible, ReplayMock };

BackendKind backend_kind_from_string(std::string_view s);  // "http" | "replay"

struct RetryPolicy {
  int max_attempts = 4;
  int base_backoff_ms = 250;
  int max_backoff_ms = 16000;
};

struct BackendConfig {
  BackendKind kind = BackendKind::ReplayMock;
  std::string base_url;     // http only, e.g. "http://localhost:8000/v1"
  std::string api_key_env;  // http only; empty means no Authorization header
  int max_in_flight = 4;
  RetryPolicy retry;
  double requests_per_second = 0.0;  // 0 disables the token bucket
  int burst = 1;
  int timeout_ms = 120000;
  std::filesystem::path fixture;  // replay only

  /// Throws ConfigError on any violated constraint.
  void validate() const;
};

/// Outcome of one transport attempt.
struct Attempt {
  enum class Status { Ok, Retryable, Fatal };
  Status status = Status::Ok;
  ChatResponse response;
  int http_status = 0;
  std::string error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Attempt send(const ChatRequest& req) = 0;
};

/// POST {base_url}/chat/completions in the common chat-completions shape.
/// 429, 5xx, timeouts and connection failures are retryable; other non-2xx
/// statuses are fatal.
class HttpBackend : public ChatBackend {
 public:
  /// Reads the key from the environment variable named in cfg.api_key_env;
  /// throws ConfigError if that variable is named but unset.
  explicit HttpBackend(const BackendConfig& cfg);
  Attempt send(const ChatRequest& req) override;

 private:
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string api_key_;
  int timeout_ms_;
};

struct FixtureEntry {
  std::string tag;
  std::string response;
  FinishReason finish = FinishReason::Stop;
};

/// Answers from a fixture keyed by request_tag; unknown tags throw
/// MockMissError.
class ReplayBackend : public ChatBackend {
 public:
  explicit ReplayBackend(std::span<const FixtureEntry> entries);
  static std::shared_ptr<ReplayBackend> load(const std::filesystem::path& path);
  Attempt send(const ChatRequest& req) override;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::string, FixtureEntry, std::less<>> entries_;
};

/// Passes requests through and keeps every successful exchange.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
  Attempt send(const ChatRequest& req) override;
  std::vector<std::pair<ChatRequest, ChatResponse>> session() const;

 private:
  std::shared_ptr<ChatBackend> inner_;
  mutable std::mutex mu_;
  std::vector<std::pair<ChatRequest, ChatResponse>> session_;
};

/// Fixture JSONL sorted by tag. Throws FixtureError on duplicate tags.
std::string record_replay(std::span<const std::pair<ChatRequest, ChatResponse>> session);
std::vector<FixtureEntry> parse_fixture(std::string_view jsonl);  // throws FixtureError

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& cfg);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Thread-safe front door to one backend: bounded in-flight requests,
/// optional token-bucket rate limit, retries with exponential backoff and
/// jitter. Responses are returned verbatim.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, BackendConfig cfg, Sleeper sleeper = {},
          std::uint64_t jitter_seed = 0);

  /// Throws TransportError when retries run out, RequestError on a fatal
  /// status, MockMissError from the replay backend.
  ChatResponse complete(const ChatRequest& req);

  int peak_in_flight() const;
  const BackendConfig& config() const { return cfg_; }

 private:
  void acquire_slot();
  void release_slot();
  void take_token();
  std::chrono::milliseconds backoff(int attempt);

  std::shared_ptr<ChatBackend> backend_;
  BackendConfig cfg_;
  Sleeper sleeper_;

  mutable std::mutex mu_;
  std::condition_variable slot_free_;
  int in_flight_ = 0;
  int peak_ = 0;

  std::mutex bucket_mu_;
  double tokens_ = 0.0;
  std::chrono::steady_clock::time_point last_refill_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

}  // namespace livemath::llm
