#include <doctest.h>

#include <random>

#include "livemath/error.hpp"
#include "livemath/stages.hpp"
#include "synth.hpp"

using namespace livemath;

namespace {

ingest::Topic thread() {
  auto t0 = synth::at(2024, 3, 1);
  return ingest::make_topic("X1",
                            {{1, "alpha", "How many divisors does 360 have?", t0},
                             {2, "beta", "It has 24.", t0 + std::chrono::hours(1)},
                             {3, "alpha", "Thanks!", t0 + std::chrono::hours(2)},
                             {4, "gamma", "Listing confirms 24.", t0 + std::chrono::hours(3)}},
                            "Number Theory");
}

struct Harness {
  std::unique_ptr<llm::Gateway> gateway;
  stages::StageContext ctx;
};

Harness harness(const std::vector<llm::FixtureEntry>& entries, bool two_rewriters = true) {
  Harness h;
  llm::BackendConfig cfg;
  cfg.max_in_flight = 8;
  h.gateway = std::make_unique<llm::Gateway>(std::make_shared<llm::ReplayBackend>(entries), cfg);
  h.ctx.detect = {synth::kDetectModel, h.gateway.get()};
  h.ctx.extract = {synth::kExtractModel, h.gateway.get()};
  h.ctx.rewriters.push_back({synth::kRefRewriter, h.gateway.get()});
  if (two_rewriters) h.ctx.rewriters.push_back({synth::kChkRewriter, h.gateway.get()});
  return h;
}

std::size_t partition_sum(const stages::PipelineCounters& c) {
  return c.pruned + c.quarantined_detect + c.no_answers + c.quarantined_extract +
         c.quarantined_rewrite + c.qa_pairs;
}

}  // namespace

TEST_CASE("detection reads the last boxed 0 or 1") {
  CHECK(stages::parse_detection("Reasoning... \\boxed{1}"));
  CHECK_FALSE(stages::parse_detection("\\boxed{ 0 }"));
  CHECK_FALSE(stages::parse_detection("first \\boxed{1} then \\boxed{0}"));
  CHECK(stages::parse_detection("\\boxed{2} is wrong, \\boxed {1}"));
  CHECK_THROWS_AS(stages::parse_detection("yes it is math"), StageParseError);
  CHECK_THROWS_AS(stages::parse_detection("\\boxed{10}"), StageParseError);
  CHECK_THROWS_AS(stages::parse_detection(""), StageParseError);
}

TEST_CASE("extraction keeps valid, existing, unique answer posts") {
  auto t = thread();
  auto refs = stages::parse_extraction(
      "Summary: beta answers, gamma confirms.\n"
      "{\"answers\": [{\"user\": \"beta\", \"post number\": 2}, {\"user\": \"gamma\", \"post number\": 4}]}",
      t);
  CHECK(refs == std::vector<stages::AnswerRef>{{2, "beta"}, {4, "gamma"}});

  // Fenced block, question post, missing post and a duplicate are dropped.
  refs = stages::parse_extraction(
      "```json\n{\"answers\": [{\"post number\": 1}, {\"post number\": 9}, {\"post number\": 4},"
      " {\"post number\": 4}]}\n```",
      t);
  CHECK(refs == std::vector<stages::AnswerRef>{{4, "gamma"}});

  CHECK(stages::parse_extraction("{\"answers\": []}", t).empty());
  CHECK_THROWS_AS(stages::parse_extraction("no json here", t), StageParseError);
  CHECK_THROWS_AS(stages::parse_extraction("{\"answer\": []}", t), StageParseError);
  CHECK_THROWS_AS(stages::parse_extraction("{\"answers\": [{\"post number\": \"2\"}]}", t),
                  StageParseError);
  CHECK_THROWS_AS(stages::parse_extraction("{\"answers\": [{\"post number\": 2, \"user\": 5}]}", t),
                  StageParseError);
}

TEST_CASE("stage parsers reject random noise") {
  auto t = thread();
  std::mt19937_64 rng(99);
  const std::string alphabet = "abcxyz0123 {}[]\":,\\boxed post number answers user\n";
  std::uniform_int_distribution<std::size_t> len(0, 120), ch(0, alphabet.size() - 1);
  int detect_accepts = 0, extract_accepts = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    std::string s;
    for (auto n = len(rng); n > 0; --n) s += alphabet[ch(rng)];
    try {
      stages::parse_detection(s);
      ++detect_accepts;
      CHECK((s.find("\\boxed") != std::string::npos));
    } catch (const StageParseError&) {
    }
    try {
      auto refs = stages::parse_extraction(s, t);
      ++extract_accepts;
      std::set<int> seen;
      for (const auto& r : refs) {
        CHECK(r.post_number > 1);
        REQUIRE(t.find_post(r.post_number) != nullptr);
        CHECK(t.find_post(r.post_number)->author == r.author);
        CHECK(seen.insert(r.post_number).second);
      }
    } catch (const StageParseError&) {
    }
  }
  CHECK(detect_accepts < trials / 1000);
  CHECK(extract_accepts < trials / 1000);
}

TEST_CASE("fill_template substitutes once and keeps unknown braces") {
  CHECK(stages::fill_template("{a} and {b} {c}", {{"a", "{b}"}, {"b", "B"}}) == "{b} and B {c}");
  CHECK(stages::fill_template("\\boxed{1} {", {}) == "\\boxed{1} {");
}

TEST_CASE("the 20-topic smoke fixture reproduces its ledger") {
  auto h = harness(synth::smoke_replay());
  auto topics = synth::smoke_topics();
  synth::SmokeExpect want;
  auto r = stages::run_eval_pipeline(topics, h.ctx, 3);
  const auto& c = r.counters;
  CHECK(c.input_topics == want.input_topics);
  CHECK(c.pruned == want.pruned);
  CHECK(c.detected_math == want.input_topics - want.pruned);
  CHECK(c.no_answers == want.no_answers);
  CHECK(c.qa_pairs == want.qa_pairs);
  CHECK(c.retries == want.retries);
  CHECK(r.quarantined.empty());
  CHECK(partition_sum(c) == c.input_topics);
  CHECK(r.pairs.size() == c.qa_pairs);
  std::size_t solutions = 0;
  for (const auto& p : r.pairs) {
    solutions += p.solutions.size();
    for (const auto& s : p.solutions) CHECK(s.rewrites.size() == 2);
  }
  CHECK(c.solutions == solutions);

  auto funnel = c.funnel();
  REQUIRE(funnel.stages().size() == 3);
  CHECK(funnel.input() == 20);
  CHECK(funnel.output() == 16);

  auto t10 = std::find_if(r.pairs.begin(), r.pairs.end(), [](auto& p) { return p.topic_id == "T10"; });
  REQUIRE(t10 != r.pairs.end());
  CHECK(t10->solutions.size() == 2);
  CHECK(t10->difficulty == ingest::Difficulty::HighSchool);
  CHECK(t10->solutions[1].rewrite_by(synth::kChkRewriter)->boxed_answer == "45");
}

TEST_CASE("pipeline output does not depend on worker count") {
  auto h = harness(synth::smoke_replay());
  auto topics = synth::smoke_topics();
  auto a = stages::run_eval_pipeline(topics, h.ctx, 1);
  auto b = stages::run_eval_pipeline(topics, h.ctx, 6);
  CHECK(stages::serialize_qa_pairs(a.pairs) == stages::serialize_qa_pairs(b.pairs));
  CHECK(a.counters == b.counters);
}

TEST_CASE("training variant runs only the first rewriter") {
  auto h = harness(synth::smoke_replay());
  auto r = stages::run_training_pipeline(synth::smoke_topics(), h.ctx, 2);
  CHECK(r.counters.qa_pairs == 16);
  for (const auto& p : r.pairs) {
    for (const auto& s : p.solutions) {
      REQUIRE(s.rewrites.size() == 1);
      CHECK(s.rewrites[0].rewriter_id == synth::kRefRewriter);
    }
  }
}

TEST_CASE("all-negative detection prunes every topic without further calls") {
  std::vector<llm::FixtureEntry> entries;
  for (const auto& t : synth::smoke_topics()) {
    entries.push_back({stages::detect_tag(t.topic_id), "Not a problem. \\boxed{0}"});
  }
  auto h = harness(entries);
  auto r = stages::run_eval_pipeline(synth::smoke_topics(), h.ctx, 2);
  CHECK(r.pairs.empty());
  CHECK(r.quarantined.empty());
  CHECK(r.counters.pruned == 20);
  CHECK(r.counters.detected_math == 0);
  CHECK(partition_sum(r.counters) == 20);
}

TEST_CASE("a missing replay entry quarantines only its topic") {
  auto entries = synth::smoke_replay();
  std::erase_if(entries, [](const llm::FixtureEntry& e) {
    return e.tag == stages::rewrite_tag(synth::kChkRewriter, "T13", 2);
  });
  auto h = harness(entries);
  auto r = stages::run_eval_pipeline(synth::smoke_topics(), h.ctx, 2);
  REQUIRE(r.quarantined.size() == 1);
  CHECK(r.quarantined[0].topic_id == "T13");
  CHECK(r.quarantined[0].stage == "rewrite");
  CHECK(r.quarantined[0].error_kind == "mock_miss");
  CHECK(r.counters.quarantined_rewrite == 1);
  CHECK(r.counters.qa_pairs == 15);
  CHECK(partition_sum(r.counters) == 20);
}

TEST_CASE("a parse failure on both attempts quarantines the topic") {
  auto entries = synth::smoke_replay();
  for (auto& e : entries) {
    if (e.tag == stages::retry_tag(stages::detect_tag("T05"))) e.response = "still unsure";
  }
  auto h = harness(entries);
  auto r = stages::run_eval_pipeline(synth::smoke_topics(), h.ctx, 1);
  REQUIRE(r.quarantined.size() == 1);
  CHECK(r.quarantined[0].stage == "detect");
  CHECK(r.quarantined[0].error_kind == "stage_parse");
  CHECK(r.counters.quarantined_detect == 1);
  CHECK(partition_sum(r.counters) == 20);
}

TEST_CASE("rewrite rejects blank input and records a missing box") {
  auto h = harness({{stages::rewrite_tag(synth::kRefRewriter, "X1", 2), "No box here."}});
  CHECK_THROWS_AS(stages::rewrite("q", "   ", "X1", 2, h.ctx.rewriters[0], h.ctx), ArgumentError);
  auto r = stages::rewrite("q", "It has 24.", "X1", 2, h.ctx.rewriters[0], h.ctx);
  CHECK_FALSE(r.boxed_answer);
  CHECK(r.rewriter_id == synth::kRefRewriter);
}

TEST_CASE("prompts carry the topic and examples") {
  auto prompts = stages::PromptSet::builtin();
  auto msgs = stages::parse_messages(thread(), prompts);
  REQUIRE(msgs.size() == 1);
  CHECK(msgs[0].text.find("post 2 by user beta: It has 24.") != std::string::npos);
  CHECK(msgs[0].text.find("{topic}") == std::string::npos);
  auto cls = stages::classify_messages(thread(), prompts);
  CHECK(cls[0].text.find("How many divisors does 360 have?") != std::string::npos);
  auto rw = stages::rewrite_messages("Q?", "S.", prompts);
  CHECK(rw[0].text.find("Q?") != std::string::npos);
  CHECK(rw[0].text.find("S.") != std::string::npos);
}

TEST_CASE("QA pairs round-trip through JSONL") {
  auto h = harness(synth::smoke_replay());
  auto r = stages::run_eval_pipeline(synth::smoke_topics(), h.ctx, 2);
  synth::TempDir dir;
  auto path = dir.path() / "pairs.jsonl";
  write_file(path, stages::serialize_qa_pairs(r.pairs));
  CHECK(stages::load_qa_pairs(path) == r.pairs);
}
