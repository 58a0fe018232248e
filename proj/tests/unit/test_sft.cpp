#include <doctest.h>

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/sft.hpp"
#include "synth.hpp"

using namespace livemath;

namespace {

decontam::NgramIndex index_of(const std::vector<std::string>& docs, int n) {
  std::vector<decontam::TokenStream> streams;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    streams.push_back(decontam::tokenize(docs[i], fmt::format("d{}", i)));
  }
  return decontam::NgramIndex::build(streams, n, {"test"});
}

sft::ExportOptions options_at(Timestamp cutoff) {
  sft::ExportOptions o;
  o.cutoff = cutoff;
  return o;
}

}  // namespace

TEST_CASE("instruction template renders byte-exact") {
  auto t = sft::ChatTemplate::builtin("inst");
  CHECK(t.pattern() == "<s>[INST] {question} [/INST]{solution}");
  CHECK(t.render("Find x", "x=2") == "<s>[INST] Find x [/INST]x=2");
  // Placeholders inside the inputs stay literal; UTF-8 and newlines pass through.
  CHECK(t.render("{solution}?", "{question}") == "<s>[INST] {solution}? [/INST]{question}");
  CHECK(t.render("Soit \u00e9 \n$x$", "\\boxed{2}\n") == "<s>[INST] Soit \u00e9 \n$x$ [/INST]\\boxed{2}\n");
  // Re-substituting the placeholders reproduces the pattern.
  CHECK(t.render("{question}", "{solution}") == t.pattern());
  sft::ChatTemplate custom("chatml", "<|user|>{question}<|assistant|>{solution}<|end|>");
  CHECK(custom.render("{question}", "{solution}") == custom.pattern());
}

TEST_CASE("template validation") {
  CHECK_THROWS_AS(sft::ChatTemplate("a", "{question} only"), ConfigError);
  CHECK_THROWS_AS(sft::ChatTemplate("a", "{question}{question}{solution}"), ConfigError);
  CHECK_THROWS_AS(sft::ChatTemplate::builtin("nope"), ConfigError);
}

TEST_CASE("twelve-pair fixture exports seven records") {
  auto f = synth::twelve_pair_fixture();
  auto index = index_of(f.test_docs, 10);
  sft::ExportOptions opt;
  opt.cutoff = f.cutoff;
  opt.chat_template = sft::ChatTemplate::builtin("inst");
  for (unsigned workers : {1u, 3u}) {
    opt.workers = workers;
    auto r = sft::export_sft(f.pairs, &index, opt);
    CHECK(r.report.candidates == 12);
    CHECK(r.report.exported == f.exported);
    CHECK(r.report.excluded_contaminated == f.contaminated);
    CHECK(r.report.excluded_cutoff == f.past_cutoff);
    CHECK(r.report.exported + r.report.excluded_contaminated + r.report.excluded_cutoff ==
          r.report.candidates);
    REQUIRE(r.records.size() == f.exported);
    for (const auto& rec : r.records) {
      CHECK(rec.first_posted_at < f.cutoff);
      CHECK(rec.rendered == opt.chat_template->render(rec.instruction, rec.response));
    }
    auto j = sft::record_to_json(r.records[0]);
    CHECK(j["meta"]["rewriter_id"] == synth::kRefRewriter);
    CHECK(j["instruction"] == r.records[0].instruction);
  }

  // Without an index only the cutoff applies.
  auto plain = sft::export_sft(f.pairs, nullptr, opt);
  CHECK(plain.report.exported == 10);
  CHECK_FALSE(sft::export_sft(f.pairs, nullptr, options_at(f.cutoff)).records[0].rendered);
}

TEST_CASE("the cutoff instant itself is excluded") {
  auto cutoff = synth::at(2024, 6, 1, 0);
  stages::Solution s{2, "u", "raw", {}};
  s.rewrites.push_back({"a", 2, "rw", "x = 3 \\boxed{3}", "3"});
  std::vector<stages::QaPair> pairs{synth::qa_pair("on", "Solve x.", cutoff, {s}),
                                    synth::qa_pair("before", "Solve y.", cutoff - std::chrono::seconds(1), {s})};
  auto r = sft::export_sft(pairs, nullptr, options_at(cutoff));
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].topic_id == "before");
  CHECK(r.report.excluded_cutoff == 1);
}

TEST_CASE("every rewrite of every solution is a candidate") {
  stages::Solution a{2, "u", "raw", {}}, b{3, "v", "raw", {}};
  a.rewrites = {{"t", 2, "rw1", "one \\boxed{1}", "1"}, {"t", 2, "rw2", "uno \\boxed{1}", "1"}};
  b.rewrites = {{"t", 3, "rw1", "two \\boxed{1}", "1"}};
  std::vector<stages::QaPair> pairs{synth::qa_pair("t", "Compute one.", synth::at(2024, 1, 1), {a, b})};
  auto opt = options_at(synth::at(2025, 1, 1));
  CHECK(sft::export_sft(pairs, nullptr, opt).records.size() == 3);
  opt.rewriter = "rw1";
  auto only = sft::export_sft(pairs, nullptr, opt);
  REQUIRE(only.records.size() == 2);
  CHECK(only.records[1].post_number == 3);
}

TEST_CASE("question+solution fields widen decontamination") {
  stages::Solution s{2, "u", "raw", {}};
  const std::string leaked = "apply the binomial theorem to expand and collect the like terms carefully now";
  s.rewrites = {{"t", 2, "rw", leaked + " \\boxed{7}", "7"}};
  std::vector<stages::QaPair> pairs{synth::qa_pair("t", "Expand it.", synth::at(2024, 1, 1), {s})};
  auto index = index_of({leaked}, 10);
  auto opt = options_at(synth::at(2025, 1, 1));
  CHECK(sft::export_sft(pairs, &index, opt).report.exported == 1);
  opt.fields = decontam::Fields::QuestionSolution;
  CHECK(sft::export_sft(pairs, &index, opt).report.excluded_contaminated == 1);
}

TEST_CASE("blank questions are input errors") {
  stages::Solution s{2, "u", "raw", {}};
  s.rewrites = {{"t", 2, "rw", "x \\boxed{1}", "1"}};
  std::vector<stages::QaPair> pairs{synth::qa_pair("t", "  ", synth::at(2024, 1, 1), {s})};
  CHECK_THROWS_AS(sft::export_sft(pairs, nullptr, options_at(synth::at(2025, 1, 1))), InputError);
}
