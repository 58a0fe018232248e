#include "livemath/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/hash.hpp"
#include "livemath/io.hpp"

namespace livemath::config {

namespace {

constexpr std::string_view kBackendFields[] = {
    "backend",   "base_url", "api_key_env", "max_in_flight", "max_attempts", "base_backoff_ms",
    "max_backoff_ms", "requests_per_second", "burst", "timeout_ms", "fixture"};

constexpr std::string_view kPathSuffixes[] = {".fixture", "difficulty_map", "llm.record"};

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_path_key(std::string_view key) {
  return std::any_of(std::begin(kPathSuffixes), std::end(kPathSuffixes), [&](std::string_view s) {
    return key.size() >= s.size() && key.substr(key.size() - s.size()) == s;
  });
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k{"workers",
                               "seed",
                               "difficulty_map",
                               "llm.max_tokens",
                               "llm.temperature",
                               "llm.record",
                               "detect.model",
                               "extract.model",
                               "rewriters",
                               "train_n",
                               "eval_n",
                               "eval.from",
                               "eval.to",
                               "train.cutoff",
                               "proof_markers",
                               "sft.template",
                               "sft.fields",
                               "decontam.fields",
                               "decontam.bucket_months",
                               "annotate.fraction",
                               "annotate.annotators",
                               "annotate.host",
                               "annotate.port",
                               "annotate.cors_origin",
                               "annotate.compact_every"};
    for (std::string_view stage : {"llm", "detect", "extract", "rewrite"}) {
      for (auto f : kBackendFields) k.push_back(fmt::format("{}.{}", stage, f));
    }
    std::sort(k.begin(), k.end());
    return k;
  }();
  return keys;
}

RunConfig RunConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir_ = base_dir;
  auto lines = split_lines(std::string(text));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("config line {}: expected key = value", i + 1));
    }
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("config line {}: empty key", i + 1));
    if (!cfg.entries_.emplace(key, value).second) {
      throw ConfigError(fmt::format("config line {}: duplicate key '{}'", i + 1, key));
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  auto cfg = parse(read_file(path), path.parent_path());
  return cfg;
}

std::string RunConfig::env_name(std::string_view key) {
  std::string out = "LIVEMATH_";
  for (char c : key) {
    out += (c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

void RunConfig::apply_env() {
  for (const auto& key : known_keys()) {
    if (const char* v = std::getenv(env_name(key).c_str())) entries_[key] = trim(v);
  }
}

void RunConfig::set(const std::string& key, std::string value) { entries_[key] = trim(value); }

std::optional<std::string> RunConfig::get(std::string_view key) const {
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

std::string RunConfig::get_or(std::string_view key, std::string fallback) const {
  return get(key).value_or(std::move(fallback));
}

long RunConfig::get_int(std::string_view key, long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  auto n = parse_number<long>(*v);
  if (!n) throw ConfigError(fmt::format("config key {} = '{}' is not an integer", key, *v));
  return *n;
}

double RunConfig::get_double(std::string_view key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  auto d = parse_double(*v);
  if (!d) throw ConfigError(fmt::format("config key {} = '{}' is not a number", key, *v));
  return *d;
}

std::vector<std::string> RunConfig::get_list(std::string_view key,
                                             std::vector<std::string> fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = v->find(',', start);
    auto item = trim(std::string_view(*v).substr(start, comma == std::string::npos
                                                             ? std::string::npos
                                                             : comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<std::filesystem::path> RunConfig::get_path(std::string_view key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  std::filesystem::path p(*v);
  if (p.is_relative() && !base_dir_.empty()) p = base_dir_ / p;
  return p;
}

std::optional<Timestamp> RunConfig::get_instant(std::string_view key) const {
  auto v = get(key);
  if (!v) return std::nullopt;
  auto ts = parse_instant_or_date(*v);
  if (!ts) throw ConfigError(fmt::format("config key {} = '{}' is not a date", key, *v));
  return ts;
}

llm::BackendConfig RunConfig::backend(std::string_view stage) const {
  auto key = [&](std::string_view field) -> std::string {
    auto own = fmt::format("{}.{}", stage, field);
    if (get(own)) return own;
    return fmt::format("llm.{}", field);
  };
  llm::BackendConfig b;
  b.kind = llm::backend_kind_from_string(get_or(key("backend"), "replay"));
  b.base_url = get_or(key("base_url"), "");
  b.api_key_env = get_or(key("api_key_env"), "");
  b.max_in_flight = static_cast<int>(get_int(key("max_in_flight"), b.max_in_flight));
  b.retry.max_attempts = static_cast<int>(get_int(key("max_attempts"), b.retry.max_attempts));
  b.retry.base_backoff_ms =
      static_cast<int>(get_int(key("base_backoff_ms"), b.retry.base_backoff_ms));
  b.retry.max_backoff_ms = static_cast<int>(get_int(key("max_backoff_ms"), b.retry.max_backoff_ms));
  b.requests_per_second = get_double(key("requests_per_second"), b.requests_per_second);
  b.burst = static_cast<int>(get_int(key("burst"), b.burst));
  b.timeout_ms = static_cast<int>(get_int(key("timeout_ms"), b.timeout_ms));
  if (auto p = get_path(key("fixture"))) b.fixture = *p;
  return b;
}

void RunConfig::validate() const {
  const auto& known = known_keys();
  for (const auto& [k, v] : entries_) {
    if (!std::binary_search(known.begin(), known.end(), k)) {
      throw ConfigError(fmt::format("unknown config key '{}'", k));
    }
  }
  for (std::string_view k : {"workers", "seed", "train_n", "eval_n", "decontam.bucket_months",
                             "annotate.port", "annotate.compact_every"}) {
    get_int(k, 0);
  }
  for (std::string_view k : {"llm.temperature", "annotate.fraction"}) get_double(k, 0);
  for (std::string_view k : {"eval.from", "eval.to", "train.cutoff"}) get_instant(k);
  if (get_int("train_n", 10) < 1 || get_int("eval_n", 8) < 1) {
    throw ConfigError("train_n and eval_n must be >= 1");
  }
}

std::string RunConfig::hash() const {
  std::string canon;
  for (const auto& [k, v] : entries_) canon += k + '=' + v + '\n';
  return digest_hex(canon);
}

}  // namespace livemath::config
