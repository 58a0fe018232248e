#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "livemath/io.hpp"
#include "livemath/time.hpp"

namespace livemath::ingest {

enum class Difficulty { MiddleSchool, HighSchool, College, HighSchoolOlympiads, Others };

inline constexpr Difficulty kAllDifficulties[] = {
    Difficulty::MiddleSchool, Difficulty::HighSchool, Difficulty::College,
    Difficulty::HighSchoolOlympiads, Difficulty::Others};

std::string_view to_string(Difficulty d);
std::optional<Difficulty> difficulty_from_string(std::string_view name);

struct Post {
  int post_number = 0;
  std::string author;
  std::string body;
  Timestamp created_at{};

  friend bool operator==(const Post&, const Post&) = default;
};

/// A forum thread. Construct through make_topic() so the invariants hold:
/// posts sorted by unique post_number starting at 1, non-blank bodies, and
/// first_posted_at == posts[0].created_at.
struct Topic {
  std::string topic_id;
  std::vector<Post> posts;
  std::optional<std::string> category_tag;
  Timestamp first_posted_at{};

  const Post* find_post(int post_number) const;

  friend bool operator==(const Topic&, const Topic&) = default;
};

/// Sorts posts and validates; throws InputError describing the violation.
Topic make_topic(std::string topic_id, std::vector<Post> posts,
                 std::optional<std::string> category_tag);

struct RejectRecord {
  std::size_t line = 0;  // 1-based
  std::string reason;    // "schema" | "duplicate" | "timestamp"
  std::string detail;

  friend bool operator==(const RejectRecord&, const RejectRecord&) = default;
};

struct DumpResult {
  std::vector<Topic> topics;
  std::vector<RejectRecord> rejects;
};

/// Every line yields exactly one topic or one reject; accepted topics keep
/// input order and the first occurrence of a topic_id wins.
DumpResult parse_dump(std::istream& in, unsigned workers = 1);
DumpResult parse_dump_lines(std::span<const std::string> lines, unsigned workers = 1);

Json topic_to_json(const Topic& topic);
Topic topic_from_json(const Json& j);  // throws InputError
std::string serialize_dump(std::span<const Topic> topics);
Json reject_to_json(const RejectRecord& r);

/// Raw forum board name -> difficulty bucket. Keys are stored normalized
/// (see normalize_tag); unknown or missing tags map to Others.
class DifficultyTable {
 public:
  static DifficultyTable builtin();
  static DifficultyTable from_json(const Json& j);
  static DifficultyTable load(const std::filesystem::path& path);

  static std::string normalize_tag(std::string_view tag);

  Difficulty lookup(const std::optional<std::string>& tag) const;
  const std::map<std::string, Difficulty>& entries() const { return entries_; }

 private:
  std::map<std::string, Difficulty> entries_;
};

Difficulty derive_difficulty(const Topic& topic, const DifficultyTable& table);
Difficulty derive_difficulty(const Topic& topic);

/// Topics with from <= first_posted_at < to, sorted by (first_posted_at,
/// topic_id). Throws ArgumentError unless from < to.
std::vector<Topic> window(std::span<const Topic> topics, Timestamp from, Timestamp to);

}  // namespace livemath::ingest
