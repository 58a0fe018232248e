#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace livemath {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path);

/// Splits on '\n'; a trailing "\r" is dropped from each line. A final empty
/// line after the last newline is not reported.
std::vector<std::string> split_lines(const std::string& text);

std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename so readers never observe a
/// half-written artifact. Creates parent directories.
void write_file(const std::filesystem::path& path, const std::string& contents);

/// One compact JSON document per line, trailing newline after each.
template <typename Range>
std::string to_jsonl(const Range& docs) {
  std::string out;
  for (const auto& d : docs) {
    out += d.dump();
    out += '\n';
  }
  return out;
}

/// Parses every non-blank line; throws InputError naming the line on failure.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

Json read_json(const std::filesystem::path& path);

/// Pretty JSON with a trailing newline.
std::string dump_pretty(const OrderedJson& j);

/// Rounds to 2 decimals for reporting.
double round2(double v);

}  // namespace livemath
