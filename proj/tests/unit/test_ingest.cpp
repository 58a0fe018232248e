#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "livemath/error.hpp"
#include "livemath/ingest.hpp"
#include "synth.hpp"

using namespace livemath;
using ingest::Difficulty;

namespace {

std::string topic_line(int i, Timestamp ts) {
  OrderedJson j{{"topic_id", "t" + std::to_string(i)},
                {"category", i % 2 ? Json("Algebra") : Json(nullptr)},
                {"posts",
                 {{{"n", 1}, {"user", "u" + std::to_string(i)}, {"ts", format_rfc3339(ts)},
                   {"text", "Solve x+" + std::to_string(i) + "=0."}},
                  {{"n", 2}, {"user", "helper"}, {"ts", format_rfc3339(ts + std::chrono::minutes(5))},
                   {"text", "x=-" + std::to_string(i)}}}}};
  return j.dump();
}

std::vector<ingest::Topic> random_topics(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto lo = synth::at(2023, 6, 1).time_since_epoch().count();
  auto hi = synth::at(2025, 6, 1).time_since_epoch().count();
  std::uniform_int_distribution<long long> when(lo, hi);
  std::vector<ingest::Topic> out;
  for (std::size_t i = 0; i < n; ++i) {
    Timestamp ts{std::chrono::seconds(when(rng))};
    out.push_back(ingest::make_topic("r" + std::to_string(i),
                                     {{1, "a", "question " + std::to_string(i), ts},
                                      {2, "b", "answer", ts + std::chrono::hours(1)}},
                                     std::nullopt));
  }
  return out;
}

std::vector<std::string> ids(const std::vector<ingest::Topic>& topics) {
  std::vector<std::string> out;
  for (const auto& t : topics) out.push_back(t.topic_id);
  return out;
}

}  // namespace

TEST_CASE("one valid line yields one topic") {
  std::istringstream in(topic_line(1, synth::at(2024, 2, 2)) + "\n");
  auto r = ingest::parse_dump(in);
  REQUIRE(r.topics.size() == 1);
  CHECK(r.rejects.empty());
  CHECK(r.topics[0].posts.size() == 2);
  CHECK(r.topics[0].first_posted_at == synth::at(2024, 2, 2));
  CHECK(r.topics[0].category_tag == "Algebra");
}

TEST_CASE("a repeated topic_id rejects the later line") {
  auto line = topic_line(1, synth::at(2024, 2, 2));
  std::istringstream in(line + "\n" + line + "\n");
  auto r = ingest::parse_dump(in);
  CHECK(r.topics.size() == 1);
  REQUIRE(r.rejects.size() == 1);
  CHECK(r.rejects[0].line == 2);
  CHECK(r.rejects[0].reason == "duplicate");
}

TEST_CASE("1000-line dump with three corrupted lines") {
  std::vector<std::string> lines;
  for (int i = 0; i < 1000; ++i) lines.push_back(topic_line(i, synth::at(2024, 1 + i % 8, 1 + i % 28)));
  lines[17] = lines[17].substr(0, lines[17].size() / 2);
  lines[404] = topic_line(404, synth::at(2024, 1, 1));
  auto ts = lines[404].find("2024-01-01T12:00:00Z");
  lines[404].replace(ts, 20, "2024-13-01T12:00:00Z");
  lines[999] = R"({"topic_id": "t999", "category": null, "posts": []})";

  // Independent count: a line is good iff it parses, has a post list, and
  // every timestamp has a month in 1..12.
  std::size_t oracle_good = 0;
  for (const auto& l : lines) {
    auto j = Json::parse(l, nullptr, false);
    if (j.is_discarded() || j["posts"].empty()) continue;
    bool ok = true;
    for (const auto& p : j["posts"]) {
      int month = std::stoi(p["ts"].get<std::string>().substr(5, 2));
      ok = ok && month >= 1 && month <= 12;
    }
    oracle_good += ok;
  }
  REQUIRE(oracle_good == 997);

  std::string text;
  for (const auto& l : lines) text += l + "\n";
  for (unsigned workers : {1u, 4u}) {
    std::istringstream in(text);
    auto r = ingest::parse_dump(in, workers);
    CHECK(r.topics.size() == oracle_good);
    REQUIRE(r.rejects.size() == 3);
    CHECK(r.topics.size() + r.rejects.size() == lines.size());
    CHECK(r.rejects[0] == ingest::RejectRecord{18, "schema", r.rejects[0].detail});
    CHECK(r.rejects[1].line == 405);
    CHECK(r.rejects[1].reason == "timestamp");
    CHECK(r.rejects[2].line == 1000);
    CHECK(r.rejects[2].reason == "schema");
    CHECK(r.topics.front().topic_id == "t0");
    CHECK(r.topics.back().topic_id == "t998");
  }
}

TEST_CASE("every line is accounted for under arbitrary garbage") {
  std::mt19937_64 rng(3);
  std::vector<std::string> lines;
  for (int i = 0; i < 300; ++i) {
    auto l = topic_line(i % 120, synth::at(2024, 3, 3));
    if (rng() % 3 == 0) l.erase(rng() % l.size(), 1 + rng() % 5);
    lines.push_back(l);
  }
  lines.push_back("");
  auto r = ingest::parse_dump_lines(lines, 3);
  CHECK(r.topics.size() + r.rejects.size() == lines.size());
  auto sorted = r.rejects;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.line < b.line; });
  CHECK(sorted == r.rejects);
}

TEST_CASE("serialize then parse round-trips") {
  auto topics = random_topics(50, 11);
  topics[3].category_tag = "Geometry";
  auto text = ingest::serialize_dump(topics);
  std::istringstream in(text);
  auto r = ingest::parse_dump(in, 2);
  CHECK(r.rejects.empty());
  CHECK(r.topics == topics);
}

TEST_CASE("make_topic enforces the post invariants") {
  auto t0 = synth::at(2024, 1, 1);
  auto t = ingest::make_topic("a", {{2, "b", "reply", t0 + std::chrono::hours(1)}, {1, "a", "q", t0}},
                              std::nullopt);
  CHECK(t.posts[0].post_number == 1);
  CHECK(t.first_posted_at == t0);
  CHECK(t.find_post(2)->author == "b");
  CHECK(t.find_post(3) == nullptr);
  CHECK_THROWS_AS(ingest::make_topic("a", {}, std::nullopt), InputError);
  CHECK_THROWS_AS(ingest::make_topic("a", {{2, "a", "q", t0}}, std::nullopt), InputError);
  CHECK_THROWS_AS(ingest::make_topic("a", {{1, "a", "q", t0}, {1, "b", "r", t0}}, std::nullopt),
                  InputError);
  CHECK_THROWS_AS(ingest::make_topic("a", {{1, "a", "  \n", t0}}, std::nullopt), InputError);
  CHECK_THROWS_AS(ingest::make_topic("a", {{0, "a", "q", t0}}, std::nullopt), InputError);
}

TEST_CASE("window boundaries are half-open") {
  auto a = ingest::make_topic("a", {{1, "u", "q", make_timestamp(2023, 12, 31, 23, 59, 59)}}, {});
  auto b = ingest::make_topic("b", {{1, "u", "q", make_timestamp(2024, 1, 1)}}, {});
  auto c = ingest::make_topic("c", {{1, "u", "q", make_timestamp(2024, 9, 1)}}, {});
  std::vector<ingest::Topic> all{c, a, b};
  auto w = ingest::window(all, make_timestamp(2024, 1, 1), make_timestamp(2024, 9, 1));
  CHECK(ids(w) == std::vector<std::string>{"b"});
  CHECK(ingest::window({}, make_timestamp(2024, 1, 1), make_timestamp(2024, 9, 1)).empty());
  CHECK_THROWS_AS(ingest::window(all, make_timestamp(2024, 1, 1), make_timestamp(2024, 1, 1)),
                  ArgumentError);
}

TEST_CASE("window matches a brute-force filter, is idempotent and partitions by month") {
  auto topics = random_topics(100, 5);
  auto from = make_timestamp(2024, 1, 1), to = make_timestamp(2025, 1, 1);
  auto w = ingest::window(topics, from, to);

  std::vector<ingest::Topic> brute;
  for (const auto& t : topics) {
    if (t.first_posted_at >= from && t.first_posted_at < to) brute.push_back(t);
  }
  std::sort(brute.begin(), brute.end(), [](const auto& x, const auto& y) {
    return std::tie(x.first_posted_at, x.topic_id) < std::tie(y.first_posted_at, y.topic_id);
  });
  CHECK(ids(w) == ids(brute));
  CHECK(ingest::window(w, from, to) == w);

  std::vector<std::string> months;
  for (unsigned m = 1; m <= 12; ++m) {
    auto lo = make_timestamp(2024, m, 1);
    auto hi = m == 12 ? to : make_timestamp(2024, m + 1, 1);
    for (const auto& t : ingest::window(topics, lo, hi)) months.push_back(t.topic_id);
  }
  auto year = ids(w);
  std::sort(months.begin(), months.end());
  std::sort(year.begin(), year.end());
  CHECK(months == year);
}

TEST_CASE("difficulty from the shipped table") {
  auto table = ingest::DifficultyTable::load(DIFFICULTY_MAP);
  auto topic = [](std::optional<std::string> tag) {
    return ingest::make_topic("d", {{1, "u", "q", make_timestamp(2024, 1, 1)}}, std::move(tag));
  };
  CHECK(ingest::derive_difficulty(topic("High School Olympiads"), table) ==
        Difficulty::HighSchoolOlympiads);
  CHECK(ingest::derive_difficulty(topic("college-math"), table) == Difficulty::College);
  CHECK(ingest::derive_difficulty(topic("  MIDDLE   school "), table) == Difficulty::MiddleSchool);
  CHECK(ingest::derive_difficulty(topic(std::nullopt), table) == Difficulty::Others);
  CHECK(ingest::derive_difficulty(topic("Underwater basket weaving"), table) == Difficulty::Others);
  CHECK(ingest::derive_difficulty(topic("High School Olympiads")) == Difficulty::HighSchoolOlympiads);

  // Every entry in the file resolves to its own bucket.
  auto raw = read_json(DIFFICULTY_MAP)["map"];
  for (const auto& [key, value] : raw.items()) {
    CHECK(to_string(table.lookup(key)) == value.get<std::string>());
  }
  for (auto d : ingest::kAllDifficulties) CHECK(ingest::difficulty_from_string(to_string(d)) == d);
}

TEST_CASE("timestamps normalize to UTC") {
  CHECK(parse_rfc3339("2024-03-01T05:00:00+05:00") == make_timestamp(2024, 3, 1));
  CHECK(parse_rfc3339("2024-03-01 00:00:00.999Z") == make_timestamp(2024, 3, 1));
  CHECK_FALSE(parse_rfc3339("2024-02-30T00:00:00Z"));
  CHECK_FALSE(parse_rfc3339("2024-03-01T00:00:00"));
  CHECK(format_rfc3339(make_timestamp(2024, 3, 1, 4, 5, 6)) == "2024-03-01T04:05:06Z");
  CHECK(month_bucket(make_timestamp(2024, 12, 31, 23, 59, 59)) == "2024-12");
  CHECK(parse_instant_or_date("2024-09") == make_timestamp(2024, 9, 1));
}
