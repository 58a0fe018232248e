#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "livemath/llm.hpp"
#include "livemath/time.hpp"

namespace livemath::config {

/// Flat "key = value" settings. '#' starts a comment line, blank lines are
/// ignored, values are trimmed and lists are comma-separated. Relative path
/// values resolve against the directory of the file they came from.
class RunConfig {
 public:
  /// Throws ConfigError naming the line on a malformed or duplicate entry.
  static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Environment variable name for a key: "detect.max_in_flight" ->
  /// "LIVEMATH_DETECT_MAX_IN_FLIGHT".
  static std::string env_name(std::string_view key);
  /// Overrides every known key whose environment variable is set.
  void apply_env();
  void set(const std::string& key, std::string value);

  std::optional<std::string> get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const;
  long get_int(std::string_view key, long fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::vector<std::string> get_list(std::string_view key,
                                    std::vector<std::string> fallback = {}) const;
  std::optional<std::filesystem::path> get_path(std::string_view key) const;
  std::optional<Timestamp> get_instant(std::string_view key) const;

  /// Backend settings for a stage ("detect", "extract", "rewrite"); each
  /// field falls back to the "llm." key of the same name.
  llm::BackendConfig backend(std::string_view stage) const;

  /// Throws ConfigError for unknown keys or values of the wrong shape.
  void validate() const;

  /// BLAKE2b over the sorted "key=value" lines.
  std::string hash() const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::filesystem::path base_dir_;
};

}  // namespace livemath::config
