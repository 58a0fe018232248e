#include <doctest.h>

#include <atomic>
#include <future>
#include <random>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "livemath/error.hpp"
#include "livemath/hash.hpp"
#include "livemath/io.hpp"
#include "livemath/llm.hpp"

using namespace livemath;
using namespace livemath::llm;

namespace {

// Chat-completions stub on a free loopback port.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return fmt::format("http://127.0.0.1:{}/v1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& text) {
  return Json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}},
                            {"finish_reason", "stop"}}}},
              {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
      .dump();
}

BackendConfig http_config(const std::string& url) {
  BackendConfig cfg;
  cfg.kind = BackendKind::HttpOpenAICompatible;
  cfg.base_url = url;
  cfg.retry.base_backoff_ms = 1;
  cfg.retry.max_backoff_ms = 4;
  cfg.timeout_ms = 10000;
  return cfg;
}

ChatRequest request(std::string tag, std::string text = "Is this math?") {
  ChatRequest r;
  r.model_id = "stub-model";
  r.messages = {{Role::User, std::move(text)}};
  r.request_tag = std::move(tag);
  return r;
}

Sleeper no_sleep() {
  return [](std::chrono::milliseconds) {};
}

}  // namespace

TEST_CASE("replay returns the recorded text and misses name the tag") {
  std::vector<FixtureEntry> fx{{"t1", "\\boxed{1}"}};
  BackendConfig cfg;
  cfg.fixture = "unused";
  Gateway g(std::make_shared<ReplayBackend>(fx), cfg);
  auto r = g.complete(request("t1"));
  CHECK(r.text == "\\boxed{1}");
  CHECK(r.attempts == 1);
  try {
    g.complete(request("t2"));
    FAIL("expected a miss");
  } catch (const MockMissError& e) {
    CHECK(e.tag() == "t2");
    CHECK(e.kind() == "mock_miss");
  }
}

TEST_CASE("429 twice then 200 succeeds on the third attempt") {
  std::atomic<int> calls{0};
  std::string seen_body, seen_tag;
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    if (++calls <= 2) {
      res.status = 429;
      res.set_content("slow down", "text/plain");
      return;
    }
    seen_body = req.body;
    seen_tag = req.get_header_value("X-Request-Tag");
    res.set_content(completion("\\boxed{1}"), "application/json");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway g(std::make_shared<HttpBackend>(http_config(stub.url())), http_config(stub.url()),
            [&](std::chrono::milliseconds d) { sleeps.push_back(d); }, 1);
  auto r = g.complete(request("detect/T1"));
  CHECK(r.text == "\\boxed{1}");
  CHECK(r.attempts == 3);
  CHECK(r.usage.prompt_tokens == 11);
  CHECK(calls == 3);
  CHECK(sleeps.size() == 2);
  CHECK(seen_tag == "detect/T1");
  auto body = Json::parse(seen_body);
  CHECK(body["model"] == "stub-model");
  CHECK(body["temperature"] == 0.0);
  CHECK(body["messages"][0]["role"] == "user");
}

TEST_CASE("exhausted retries, fatal statuses and success are not retried") {
  std::atomic<int> calls{0};
  int status = 503;
  StubServer stub([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = status;
    if (status == 200) res.set_content(completion("ok"), "application/json");
  });
  auto cfg = http_config(stub.url());
  Gateway g(std::make_shared<HttpBackend>(cfg), cfg, no_sleep());
  CHECK_THROWS_AS(g.complete(request("a")), TransportError);
  CHECK(calls == cfg.retry.max_attempts);

  calls = 0;
  status = 400;
  CHECK_THROWS_AS(g.complete(request("b")), RequestError);
  CHECK(calls == 1);

  calls = 0;
  status = 200;
  CHECK(g.complete(request("c")).attempts == 1);
  CHECK(calls == 1);
}

TEST_CASE("unreachable servers are transport errors") {
  auto cfg = http_config("http://127.0.0.1:1/v1");
  cfg.retry.max_attempts = 2;
  Gateway g(std::make_shared<HttpBackend>(cfg), cfg, no_sleep());
  CHECK_THROWS_AS(g.complete(request("x")), TransportError);
}

TEST_CASE("50 concurrent requests never exceed max_in_flight at the server") {
  std::atomic<int> active{0}, peak{0};
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    int now = ++active;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(15));
    --active;
    res.set_content(completion(req.get_header_value("X-Request-Tag")), "application/json");
  });
  auto cfg = http_config(stub.url());
  cfg.max_in_flight = 4;
  Gateway g(std::make_shared<HttpBackend>(cfg), cfg, no_sleep());
  std::vector<std::future<ChatResponse>> futures;
  for (int i = 0; i < 50; ++i) {
    futures.push_back(std::async(std::launch::async, [&g, i] {
      return g.complete(request(fmt::format("r{}", i)));
    }));
  }
  for (int i = 0; i < 50; ++i) CHECK(futures[i].get().text == fmt::format("r{}", i));
  CHECK(peak.load() <= 4);
  CHECK(peak.load() >= 2);
  CHECK(g.peak_in_flight() <= 4);
}

TEST_CASE("token bucket spaces requests") {
  std::vector<FixtureEntry> fx;
  for (int i = 0; i < 6; ++i) fx.push_back({fmt::format("t{}", i), "x"});
  BackendConfig cfg;
  cfg.fixture = "unused";
  cfg.requests_per_second = 50;
  cfg.burst = 1;
  Gateway g(std::make_shared<ReplayBackend>(fx), cfg);
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) g.complete(request(fmt::format("t{}", i)));
  auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(elapsed >= std::chrono::milliseconds(90));
}

TEST_CASE("record then replay 100 randomized exchanges") {
  std::mt19937_64 rng(42);
  StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
    auto body = Json::parse(req.body);
    auto text = body["messages"][0]["content"].get<std::string>();
    res.set_content(completion("echo: " + text + " \\boxed{" + std::to_string(text.size()) + "}"),
                    "application/json");
  });
  auto cfg = http_config(stub.url());
  auto recorder = std::make_shared<RecordingBackend>(std::make_shared<HttpBackend>(cfg));
  Gateway live(recorder, cfg, no_sleep());
  std::vector<std::string> hashes;
  std::vector<ChatRequest> requests;
  for (int i = 0; i < 100; ++i) {
    std::string text;
    for (auto n = 1 + rng() % 40; n > 0; --n) text += static_cast<char>('a' + rng() % 26);
    text += " \"quoted\" \\frac{1}{2}\n\u00e9";
    requests.push_back(request(fmt::format("ex/{:03}", i), text));
    hashes.push_back(digest_hex(live.complete(requests.back()).text));
  }
  auto fixture = record_replay(recorder->session());
  BackendConfig rcfg;
  rcfg.fixture = "unused";
  Gateway replay(std::make_shared<ReplayBackend>(parse_fixture(fixture)), rcfg);
  int identical = 0;
  for (int i = 0; i < 100; ++i) identical += digest_hex(replay.complete(requests[i]).text) == hashes[i];
  CHECK(identical == 100);
  CHECK_THROWS_AS(replay.complete(request("ex/unknown")), MockMissError);

  auto entries = parse_fixture(fixture);
  entries.push_back(entries.front());
  CHECK_THROWS_AS(ReplayBackend{entries}, FixtureError);
}

TEST_CASE("request and config validation") {
  ChatRequest r = request("v");
  r.messages.clear();
  CHECK_THROWS_AS(r.validate(), ArgumentError);
  r = request("v");
  r.messages.insert(r.messages.begin(), {Role::Assistant, "hi"});
  CHECK_THROWS_AS(r.validate(), ArgumentError);
  r = request("v");
  r.max_tokens = 0;
  CHECK_THROWS_AS(r.validate(), ArgumentError);

  BackendConfig cfg;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // replay without fixture
  cfg.fixture = "f.jsonl";
  CHECK_NOTHROW(cfg.validate());
  cfg.max_in_flight = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  auto http = http_config("ftp://nope");
  CHECK_THROWS_AS(http.validate(), ConfigError);
  http.base_url = "http://localhost:1/v1";
  http.api_key_env = "LIVEMATH_TEST_UNSET_KEY";
  unsetenv("LIVEMATH_TEST_UNSET_KEY");
  CHECK_THROWS_AS(HttpBackend{http}, ConfigError);
  CHECK(finish_from_string("length") == FinishReason::Length);
  CHECK(finish_from_string("weird") == FinishReason::Error);
}
