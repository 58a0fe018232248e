#include "livemath/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>
#include <unordered_set>
#include <variant>

#include "livemath/error.hpp"
#include "livemath/parallel.hpp"
#include "livemath/resources.hpp"

namespace livemath::ingest {

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

struct LineReject {
  std::string reason;
  std::string detail;
};

// Timestamp failures are reported separately from structural ones.
class TimestampError : public InputError {
 public:
  using InputError::InputError;
};

std::variant<Topic, LineReject> parse_line(const std::string& line) {
  if (is_blank(line)) return LineReject{"schema", "blank line"};
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& e) {
    return LineReject{"schema", e.what()};
  }
  try {
    return topic_from_json(j);
  } catch (const TimestampError& e) {
    return LineReject{"timestamp", e.what()};
  } catch (const InputError& e) {
    return LineReject{"schema", e.what()};
  }
}

}  // namespace

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::MiddleSchool: return "MiddleSchool";
    case Difficulty::HighSchool: return "HighSchool";
    case Difficulty::College: return "College";
    case Difficulty::HighSchoolOlympiads: return "HighSchoolOlympiads";
    case Difficulty::Others: return "Others";
  }
  return "Others";
}

std::optional<Difficulty> difficulty_from_string(std::string_view name) {
  for (Difficulty d : kAllDifficulties) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

const Post* Topic::find_post(int post_number) const {
  auto it = std::lower_bound(posts.begin(), posts.end(), post_number,
                             [](const Post& p, int n) { return p.post_number < n; });
  if (it == posts.end() || it->post_number != post_number) return nullptr;
  return &*it;
}

Topic make_topic(std::string topic_id, std::vector<Post> posts,
                 std::optional<std::string> category_tag) {
  if (topic_id.empty()) throw InputError("topic_id is empty");
  if (posts.empty()) throw InputError("topic " + topic_id + " has no posts");
  std::sort(posts.begin(), posts.end(),
            [](const Post& a, const Post& b) { return a.post_number < b.post_number; });
  for (std::size_t i = 0; i < posts.size(); ++i) {
    const Post& p = posts[i];
    if (p.post_number < 1) throw InputError("post number must be >= 1");
    if (i > 0 && posts[i - 1].post_number == p.post_number) {
      throw InputError("duplicate post number " + std::to_string(p.post_number));
    }
    if (is_blank(p.body)) {
      throw InputError("post " + std::to_string(p.post_number) + " has an empty body");
    }
  }
  if (posts.front().post_number != 1) throw InputError("post 1 missing");
  Topic t;
  t.topic_id = std::move(topic_id);
  t.first_posted_at = posts.front().created_at;
  t.posts = std::move(posts);
  t.category_tag = std::move(category_tag);
  return t;
}

Topic topic_from_json(const Json& j) {
  if (!j.is_object()) throw InputError("record is not an object");
  auto id = j.find("topic_id");
  if (id == j.end() || !id->is_string()) throw InputError("topic_id missing or not a string");

  std::optional<std::string> category;
  if (auto c = j.find("category"); c != j.end() && !c->is_null()) {
    if (!c->is_string()) throw InputError("category must be a string or null");
    category = c->get<std::string>();
  }

  auto posts_it = j.find("posts");
  if (posts_it == j.end() || !posts_it->is_array()) throw InputError("posts missing or not an array");
  std::vector<Post> posts;
  posts.reserve(posts_it->size());
  for (const auto& pj : *posts_it) {
    if (!pj.is_object()) throw InputError("post is not an object");
    auto n = pj.find("n");
    auto user = pj.find("user");
    auto ts = pj.find("ts");
    auto text = pj.find("text");
    if (n == pj.end() || !n->is_number_integer()) throw InputError("post.n missing or not an integer");
    if (user == pj.end() || !user->is_string()) throw InputError("post.user missing or not a string");
    if (ts == pj.end() || !ts->is_string()) throw InputError("post.ts missing or not a string");
    if (text == pj.end() || !text->is_string()) throw InputError("post.text missing or not a string");
    auto when = parse_rfc3339(ts->get_ref<const std::string&>());
    if (!when) throw TimestampError("unparseable timestamp '" + ts->get<std::string>() + "'");
    auto number = n->get<long long>();
    if (number < 1 || number > 1'000'000'000) throw InputError("post.n out of range");
    posts.push_back(Post{static_cast<int>(number), user->get<std::string>(),
                         text->get<std::string>(), *when});
  }
  return make_topic(id->get<std::string>(), std::move(posts), std::move(category));
}

Json topic_to_json(const Topic& t) {
  Json posts = Json::array();
  for (const auto& p : t.posts) {
    posts.push_back(Json{{"n", p.post_number},
                         {"user", p.author},
                         {"ts", format_rfc3339(p.created_at)},
                         {"text", p.body}});
  }
  Json j;
  j["topic_id"] = t.topic_id;
  j["category"] = t.category_tag ? Json(*t.category_tag) : Json(nullptr);
  j["posts"] = std::move(posts);
  return j;
}

std::string serialize_dump(std::span<const Topic> topics) {
  std::string out;
  for (const auto& t : topics) {
    out += topic_to_json(t).dump();
    out += '\n';
  }
  return out;
}

Json reject_to_json(const RejectRecord& r) {
  return Json{{"line", r.line}, {"reason", r.reason}};
}

DumpResult parse_dump_lines(std::span<const std::string> lines, unsigned workers) {
  std::vector<std::variant<Topic, LineReject>> parsed(lines.size());
  parallel_for(lines.size(), workers, [&](std::size_t i) { parsed[i] = parse_line(lines[i]); });

  DumpResult result;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (auto* topic = std::get_if<Topic>(&parsed[i])) {
      if (!seen.insert(topic->topic_id).second) {
        result.rejects.push_back({i + 1, "duplicate", "topic_id " + topic->topic_id});
        continue;
      }
      result.topics.push_back(std::move(*topic));
    } else {
      auto& rej = std::get<LineReject>(parsed[i]);
      result.rejects.push_back({i + 1, std::move(rej.reason), std::move(rej.detail)});
    }
  }
  return result;
}

DumpResult parse_dump(std::istream& in, unsigned workers) {
  std::ostringstream ss;
  ss << in.rdbuf();
  auto lines = split_lines(ss.str());
  return parse_dump_lines(lines, workers);
}

std::string DifficultyTable::normalize_tag(std::string_view tag) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : tag) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

DifficultyTable DifficultyTable::from_json(const Json& j) {
  auto map = j.find("map");
  if (map == j.end() || !map->is_object()) throw ConfigError("difficulty table needs a \"map\" object");
  DifficultyTable table;
  for (const auto& [key, value] : map->items()) {
    if (!value.is_string()) throw ConfigError("difficulty for '" + key + "' must be a string");
    auto d = difficulty_from_string(value.get<std::string>());
    if (!d) throw ConfigError("unknown difficulty label '" + value.get<std::string>() + "'");
    table.entries_[normalize_tag(key)] = *d;
  }
  return table;
}

DifficultyTable DifficultyTable::builtin() {
  static const DifficultyTable table =
      from_json(Json::parse(std::string(resources::kDifficultyMap)));
  return table;
}

DifficultyTable DifficultyTable::load(const std::filesystem::path& path) {
  try {
    return from_json(read_json(path));
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

Difficulty DifficultyTable::lookup(const std::optional<std::string>& tag) const {
  if (!tag) return Difficulty::Others;
  auto it = entries_.find(normalize_tag(*tag));
  return it == entries_.end() ? Difficulty::Others : it->second;
}

Difficulty derive_difficulty(const Topic& topic, const DifficultyTable& table) {
  return table.lookup(topic.category_tag);
}

Difficulty derive_difficulty(const Topic& topic) {
  return derive_difficulty(topic, DifficultyTable::builtin());
}

std::vector<Topic> window(std::span<const Topic> topics, Timestamp from, Timestamp to) {
  if (!(from < to)) throw ArgumentError("window requires from < to");
  std::vector<Topic> out;
  for (const auto& t : topics) {
    if (from <= t.first_posted_at && t.first_posted_at < to) out.push_back(t);
  }
  std::sort(out.begin(), out.end(), [](const Topic& a, const Topic& b) {
    if (a.first_posted_at != b.first_posted_at) return a.first_posted_at < b.first_posted_at;
    return a.topic_id < b.topic_id;
  });
  return out;
}

}  // namespace livemath::ingest
