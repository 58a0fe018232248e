#include <cmath>
#include <algorithm>
#include <cstdlib>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "livemath/error.hpp"
#include "livemath/io.hpp"
#include "livemath/llm.hpp"

namespace livemath::llm {

namespace {

bool retryable_status(int status) { return status == 429 || status >= 500; }

void default_sleep(std::chrono::milliseconds ms) { std::this_thread::sleep_for(ms); }

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

std::string_view to_string(FinishReason f) {
  switch (f) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Error: return "error";
  }
  return "error";
}

FinishReason finish_from_string(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  return FinishReason::Error;
}

BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "http" || s == "http_openai_compatible") return BackendKind::HttpOpenAICompatible;
  if (s == "replay" || s == "replay_mock") return BackendKind::ReplayMock;
  throw ConfigError(fmt::format("unknown backend kind '{}' (http|replay)", s));
}

void ChatRequest::validate() const {
  if (messages.empty()) throw ArgumentError("chat request has no messages");
  auto first = std::find_if(messages.begin(), messages.end(),
                            [](const Message& m) { return m.role != Role::System; });
  if (first == messages.end() || first->role != Role::User) {
    throw ArgumentError("first non-system message must come from the user");
  }
  if (max_tokens < 1) throw ArgumentError("max_tokens must be positive");
  if (temperature < 0) throw ArgumentError("temperature must be non-negative");
}

void BackendConfig::validate() const {
  if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
  if (retry.base_backoff_ms < 0 || retry.max_backoff_ms < retry.base_backoff_ms) {
    throw ConfigError("retry backoff bounds are inconsistent");
  }
  if (requests_per_second < 0) throw ConfigError("requests_per_second must be >= 0");
  if (burst < 1) throw ConfigError("burst must be >= 1");
  if (kind == BackendKind::HttpOpenAICompatible) {
    if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
      throw ConfigError(fmt::format("base_url '{}' must start with http:// or https://", base_url));
    }
  } else if (fixture.empty()) {
    throw ConfigError("replay backend needs a fixture path");
  }
}

HttpBackend::HttpBackend(const BackendConfig& cfg) : timeout_ms_(cfg.timeout_ms) {
  auto scheme_end = cfg.base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url lacks a scheme");
  auto path_start = cfg.base_url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg.base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : cfg.base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (!cfg.api_key_env.empty()) {
    const char* key = std::getenv(cfg.api_key_env.c_str());
    if (!key || !*key) {
      throw ConfigError(fmt::format("environment variable {} holds no API key", cfg.api_key_env));
    }
    api_key_ = key;
  }
}

Attempt HttpBackend::send(const ChatRequest& req) {
  Json body;
  body["model"] = req.model_id;
  body["max_tokens"] = req.max_tokens;
  body["temperature"] = req.temperature;
  body["messages"] = Json::array();
  for (const auto& m : req.messages) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.text}});
  }

  httplib::Client client(scheme_host_port_);
  auto secs = timeout_ms_ / 1000;
  auto usecs = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  if (!req.request_tag.empty()) headers.emplace("X-Request-Tag", req.request_tag);

  Attempt out;
  auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                         "application/json");
  if (!res) {
    out.status = Attempt::Status::Retryable;
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.http_status = res->status;
  if (res->status < 200 || res->status >= 300) {
    out.status = retryable_status(res->status) ? Attempt::Status::Retryable : Attempt::Status::Fatal;
    out.error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 300));
    return out;
  }
  try {
    Json j = Json::parse(res->body);
    const Json& choice = j.at("choices").at(0);
    const Json& content = choice.at("message").at("content");
    out.response.text = content.is_string() ? content.get<std::string>() : std::string();
    auto fr = choice.find("finish_reason");
    out.response.finish = fr != choice.end() && fr->is_string()
                              ? finish_from_string(fr->get<std::string>())
                              : FinishReason::Stop;
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      out.response.usage.prompt_tokens = u->value("prompt_tokens", 0L);
      out.response.usage.completion_tokens = u->value("completion_tokens", 0L);
    }
  } catch (const Json::exception& e) {
    // A malformed body from a healthy status is not going to improve on retry.
    out.status = Attempt::Status::Fatal;
    out.error = fmt::format("malformed completion body: {}", e.what());
  }
  return out;
}

ReplayBackend::ReplayBackend(std::span<const FixtureEntry> entries) {
  for (const auto& e : entries) {
    if (!entries_.emplace(e.tag, e).second) {
      throw FixtureError(fmt::format("duplicate request tag '{}' in fixture", e.tag));
    }
  }
}

std::shared_ptr<ReplayBackend> ReplayBackend::load(const std::filesystem::path& path) {
  auto entries = parse_fixture(read_file(path));
  return std::make_shared<ReplayBackend>(entries);
}

Attempt ReplayBackend::send(const ChatRequest& req) {
  auto it = entries_.find(req.request_tag);
  if (it == entries_.end()) throw MockMissError(req.request_tag);
  Attempt out;
  out.response.text = it->second.response;
  out.response.finish = it->second.finish;
  return out;
}

Attempt RecordingBackend::send(const ChatRequest& req) {
  Attempt a = inner_->send(req);
  if (a.status == Attempt::Status::Ok) {
    std::lock_guard lock(mu_);
    session_.emplace_back(req, a.response);
  }
  return a;
}

std::vector<std::pair<ChatRequest, ChatResponse>> RecordingBackend::session() const {
  std::lock_guard lock(mu_);
  return session_;
}

std::string record_replay(std::span<const std::pair<ChatRequest, ChatResponse>> session) {
  std::vector<const std::pair<ChatRequest, ChatResponse>*> sorted;
  std::set<std::string_view> seen;
  for (const auto& exchange : session) {
    if (!seen.insert(exchange.first.request_tag).second) {
      throw FixtureError(fmt::format("duplicate request tag '{}'", exchange.first.request_tag));
    }
    sorted.push_back(&exchange);
  }
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return a->first.request_tag < b->first.request_tag;
  });
  std::string out;
  for (const auto* e : sorted) {
    OrderedJson j;
    j["tag"] = e->first.request_tag;
    j["response"] = e->second.text;
    j["finish"] = to_string(e->second.finish);
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<FixtureEntry> parse_fixture(std::string_view jsonl) {
  std::vector<FixtureEntry> out;
  std::set<std::string> seen;
  auto lines = split_lines(std::string(jsonl));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      Json j = Json::parse(lines[i]);
      FixtureEntry e;
      e.tag = j.at("tag").get<std::string>();
      e.response = j.at("response").get<std::string>();
      e.finish = finish_from_string(j.value("finish", std::string("stop")));
      if (!seen.insert(e.tag).second) {
        throw FixtureError(fmt::format("fixture line {}: duplicate tag '{}'", i + 1, e.tag));
      }
      out.push_back(std::move(e));
    } catch (const Json::exception& ex) {
      throw FixtureError(fmt::format("fixture line {}: {}", i + 1, ex.what()));
    }
  }
  return out;
}

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == BackendKind::HttpOpenAICompatible) return std::make_shared<HttpBackend>(cfg);
  return ReplayBackend::load(cfg.fixture);
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, BackendConfig cfg, Sleeper sleeper,
                 std::uint64_t jitter_seed)
    : backend_(std::move(backend)),
      cfg_(std::move(cfg)),
      sleeper_(sleeper ? std::move(sleeper) : Sleeper(default_sleep)),
      tokens_(cfg_.burst),
      last_refill_(std::chrono::steady_clock::now()),
      rng_(jitter_seed) {
  if (cfg_.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
  if (cfg_.retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
}

int Gateway::peak_in_flight() const {
  std::lock_guard lock(mu_);
  return peak_;
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mu_);
  slot_free_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  slot_free_.notify_one();
}

void Gateway::take_token() {
  if (cfg_.requests_per_second <= 0) return;
  for (;;) {
    std::chrono::milliseconds wait{0};
    {
      std::lock_guard lock(bucket_mu_);
      auto now = std::chrono::steady_clock::now();
      double elapsed = std::chrono::duration<double>(now - last_refill_).count();
      last_refill_ = now;
      tokens_ = std::min<double>(cfg_.burst, tokens_ + elapsed * cfg_.requests_per_second);
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      double deficit = 1.0 - tokens_;
      wait = std::chrono::milliseconds(
          static_cast<long>(deficit / cfg_.requests_per_second * 1000.0) + 1);
    }
    std::this_thread::sleep_for(wait);
  }
}

std::chrono::milliseconds Gateway::backoff(int attempt) {
  double cap = std::min<double>(cfg_.retry.max_backoff_ms,
                                cfg_.retry.base_backoff_ms * std::pow(2.0, attempt - 1));
  double jitter;
  {
    std::lock_guard lock(rng_mu_);
    jitter = std::uniform_real_distribution<double>(0.5, 1.0)(rng_);
  }
  return std::chrono::milliseconds(static_cast<long>(cap * jitter));
}

ChatResponse Gateway::complete(const ChatRequest& req) {
  req.validate();
  struct SlotGuard {
    Gateway* g;
    ~SlotGuard() { g->release_slot(); }
  };
  std::string last_error;
  for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
    take_token();
    Attempt a;
    {
      acquire_slot();
      SlotGuard guard{this};
      a = backend_->send(req);
    }
    if (a.status == Attempt::Status::Ok) {
      ChatResponse r = std::move(a.response);
      r.attempts = attempt;
      if (r.finish == FinishReason::Stop && r.text.empty()) r.finish = FinishReason::Error;
      return r;
    }
    if (a.status == Attempt::Status::Fatal) {
      throw RequestError(fmt::format("request '{}' rejected: {}", req.request_tag, a.error));
    }
    last_error = a.error;
    if (attempt < cfg_.retry.max_attempts) sleeper_(backoff(attempt));
  }
  throw TransportError(fmt::format("request '{}' failed after {} attempts: {}", req.request_tag,
                                   cfg_.retry.max_attempts, last_error));
}

}  // namespace livemath::llm
