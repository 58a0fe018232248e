#include <doctest.h>

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "livemath/decontam.hpp"
#include "livemath/error.hpp"
#include "synth.hpp"

using namespace livemath;
using decontam::TokenStream;

namespace {

TokenStream words(std::size_t count, const std::string& prefix, const std::string& id) {
  std::string text;
  for (std::size_t i = 0; i < count; ++i) text += fmt::format("{}{} ", prefix, i);
  return decontam::tokenize(text, id);
}

std::vector<std::string> flagged_ids(const decontam::OverlapReport& r) {
  std::vector<std::string> out;
  for (const auto& f : r.flagged) out.push_back(f.doc_id);
  return out;
}

}  // namespace

TEST_CASE("tokenizer") {
  using V = std::vector<std::string>;
  CHECK(decontam::tokenize("The  QUICK fox.").tokens == V{"the", "quick", "fox"});
  CHECK(decontam::tokenize("").tokens.empty());
  CHECK(decontam::tokenize(" ... ( ) ").tokens.empty());
  CHECK(decontam::tokenize("Let $\\frac{a}{b}$ be (positive).").tokens ==
        V{"let", "\\frac{a}{b}", "be", "positive"});
  CHECK(decontam::tokenize("\\sqrt 2, \\pi").tokens == V{"\\sqrt", "2", "\\pi"});
  CHECK(decontam::tokenize("n < 5").tokens == V{"n", "5"});
}

TEST_CASE("57-word paragraph matches an external word count") {
  const std::string paragraph =
      "Let n be a positive integer such that the sum of the digits of n equals twelve. "
      "Find the smallest such n that is also divisible by seven, and prove that no smaller "
      "value works. You may assume $n\\leq10^6$ and use \\frac{a}{b} notation where needed; "
      "justify every step, because partial answers without reasoning will receive "
      "no credit.";
  synth::TempDir dir;
  write_file(dir.path() / "p.txt", paragraph);
  std::string out;
  REQUIRE(std::system(("wc -w < '" + (dir.path() / "p.txt").string() + "' > '" +
                       (dir.path() / "count").string() + "'")
                          .c_str()) == 0);
  auto external = std::stoul(read_file(dir.path() / "count"));
  CHECK(external == 57);
  CHECK(decontam::tokenize(paragraph).tokens.size() == external);
}

TEST_CASE("window counts") {
  std::vector<TokenStream> ten{words(10, "t", "a")}, nine{words(9, "t", "a")};
  CHECK(decontam::NgramIndex::build(ten, 10).size() == 1);
  CHECK(decontam::NgramIndex::build(nine, 10).size() == 0);
  CHECK(decontam::NgramIndex::build(ten, 1).size() == 10);
  CHECK_THROWS_AS(decontam::NgramIndex::build(ten, 0), ArgumentError);
}

TEST_CASE("index membership equals a naive window set over 1000 docs") {
  std::mt19937_64 rng(17);
  std::vector<TokenStream> docs;
  std::set<std::string> naive;
  const int n = 5;
  for (int d = 0; d < 1000; ++d) {
    std::vector<std::string> toks;
    for (auto len = rng() % 15; len > 0; --len) toks.push_back(fmt::format("v{}", rng() % 40));
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
      std::string key;
      for (std::size_t k = i; k < i + n; ++k) key += toks[k] + '\x1f';
      naive.insert(key);
    }
    docs.push_back({fmt::format("d{}", d), toks});
  }
  auto index = decontam::NgramIndex::build(docs, n, {}, 3);
  CHECK(index.size() == naive.size());
  for (const auto& d : docs) {
    for (std::size_t i = 0; i + n <= d.tokens.size(); ++i) {
      CHECK(index.contains(decontam::window_fingerprint(d.tokens, i, n)));
    }
  }
  std::vector<std::string> absent{"v0", "v1", "v2", "v3", "zz"};
  CHECK_FALSE(index.contains(decontam::window_fingerprint(absent, 0, n)));
}

TEST_CASE("identical and near-miss queries") {
  std::vector<TokenStream> corpus{words(20, "a", "c0")};
  auto index = decontam::NgramIndex::build(corpus, 10);

  auto same = corpus[0];
  same.doc_id = "same";
  auto nine = words(9, "a", "nine");  // a0..a8 only
  nine.tokens.push_back("other");
  nine.tokens.push_back("more");
  std::vector<TokenStream> query{same, nine};
  auto r = decontam::flag_contaminated(query, index);
  REQUIRE(r.flagged.size() == 1);
  CHECK(r.flagged[0].doc_id == "same");
  CHECK(r.flagged[0].offset == 0);
  CHECK(r.overlap_pct == 50.0);
  CHECK(r.total_docs == 2);
}

TEST_CASE("randomized trials agree with the exact-window oracle") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto t = synth::decontam_trial(seed, 300, seed);
    CHECK(t.mismatches == 0);
    CHECK(t.monotone);
    CHECK(t.flagged10 > 0);
    CHECK(t.flagged8 >= t.flagged10);
  }
}

TEST_CASE("small all-pairs substring scan") {
  std::mt19937_64 rng(8);
  auto doc = [&](const std::string& id) {
    std::vector<std::string> toks;
    for (int i = 0; i < 30; ++i) toks.push_back(fmt::format("k{}", rng() % 6));
    return TokenStream{id, toks};
  };
  std::vector<TokenStream> corpus, query;
  for (int i = 0; i < 40; ++i) corpus.push_back(doc(fmt::format("c{}", i)));
  for (int i = 0; i < 40; ++i) query.push_back(doc(fmt::format("q{}", i)));
  const std::size_t n = 4;
  auto index = decontam::NgramIndex::build(corpus, n);
  auto r = decontam::flag_contaminated(query, index);
  std::vector<std::string> brute;
  for (const auto& q : query) {
    bool hit = false;
    for (std::size_t i = 0; !hit && i + n <= q.tokens.size(); ++i) {
      for (const auto& c : corpus) {
        for (std::size_t j = 0; !hit && j + n <= c.tokens.size(); ++j) {
          hit = std::equal(q.tokens.begin() + i, q.tokens.begin() + i + n, c.tokens.begin() + j);
        }
      }
    }
    if (hit) brute.push_back(q.doc_id);
  }
  CHECK(flagged_ids(r) == brute);
}

TEST_CASE("flags do not depend on query order or workers") {
  std::vector<TokenStream> corpus, query;
  for (int i = 0; i < 50; ++i) corpus.push_back(words(12, fmt::format("c{}x", i), fmt::format("c{}", i)));
  for (int i = 0; i < 50; ++i) {
    query.push_back(i % 4 == 0 ? corpus[i] : words(12, fmt::format("q{}x", i), fmt::format("c{}", i)));
    query.back().doc_id = fmt::format("q{:02}", i);
  }
  auto index = decontam::NgramIndex::build(corpus, 8, {}, 4);
  auto base = decontam::flag_contaminated(query, index, 1);
  auto reversed = query;
  std::reverse(reversed.begin(), reversed.end());
  auto rev = decontam::flag_contaminated(reversed, index, 5);
  auto a = flagged_ids(base), b = flagged_ids(rev);
  std::sort(b.begin(), b.end());
  CHECK(a == b);
  CHECK(a.size() == 13);
  CHECK(base.overlap_pct == rev.overlap_pct);
  CHECK(decontam::NgramIndex::build(corpus, 8, {}, 1).fingerprints() == index.fingerprints());
}

TEST_CASE("pairwise overlap matrix") {
  decontam::NamedCorpus a{"A", {}}, b{"B", {}}, other{"C", {}};
  for (int i = 0; i < 10; ++i) a.docs.push_back(words(12, fmt::format("a{}_", i), fmt::format("a{}", i)));
  for (int i = 0; i < 3; ++i) b.docs.push_back(a.docs[i]);
  for (int i = 0; i < 7; ++i) b.docs.push_back(words(12, fmt::format("b{}_", i), fmt::format("b{}", i)));
  for (int i = 0; i < 4; ++i) other.docs.push_back(words(12, fmt::format("z{}_", i), fmt::format("z{}", i)));
  std::vector<decontam::NamedCorpus> all{a, b, other};
  auto m = decontam::pairwise_overlap(all, 10, 2);
  CHECK(m[0][1] == 30.0);
  CHECK(m[1][0] == 30.0);
  for (int i = 0; i < 3; ++i) CHECK(m[i][i] == 100.0);
  CHECK(m[0][2] == 0.0);
  CHECK(m[2][1] == 0.0);
  CHECK_THROWS_AS(decontam::pairwise_overlap(std::span(all.data(), 1), 10), ArgumentError);
}

TEST_CASE("time buckets sum to totals") {
  std::vector<TokenStream> corpus{words(10, "s", "c")};
  auto index = decontam::NgramIndex::build(corpus, 10);
  std::vector<TokenStream> query;
  std::vector<std::optional<Timestamp>> ts;
  for (int i = 0; i < 12; ++i) {
    query.push_back(i % 3 == 0 ? corpus[0] : words(10, "u", "u"));
    query.back().doc_id = fmt::format("q{}", i);
    ts.push_back(i == 11 ? std::nullopt : std::optional(synth::at(2023, 1 + i, 5)));
  }
  auto r = decontam::flag_contaminated(query, index, 2, ts);
  std::size_t flagged = 0, total = 0;
  for (const auto& b : r.buckets) {
    flagged += b.flagged;
    total += b.total;
  }
  CHECK(flagged == r.flagged.size());
  CHECK(total == r.total_docs);
  REQUIRE(r.buckets.size() == 4);
  CHECK(r.buckets[0].bucket == "23/01-04");
  CHECK(r.buckets[0].total == 4);
  CHECK(r.buckets[0].flagged == 2);
  CHECK(r.buckets[3].bucket == "unknown");
  CHECK(decontam::time_bucket(synth::at(2024, 8, 31)) == "24/05-08");
  CHECK(decontam::time_bucket(synth::at(2024, 8, 31), 6) == "24/07-12");
}

TEST_CASE("index files round-trip and carry the tokenizer version") {
  std::vector<TokenStream> corpus{words(30, "r", "c")};
  auto index = decontam::NgramIndex::build(corpus, 8, {"train"});
  synth::TempDir dir;
  index.save(dir.path() / "idx.bin");
  auto loaded = decontam::NgramIndex::load(dir.path() / "idx.bin");
  CHECK(loaded.n() == 8);
  CHECK(loaded.corpus_ids() == std::vector<std::string>{"train"});
  CHECK(loaded.fingerprints() == index.fingerprints());
  CHECK(loaded.serialize() == index.serialize());

  auto bytes = index.serialize();
  CHECK_THROWS_AS(decontam::NgramIndex::deserialize(bytes.substr(0, bytes.size() - 3)), InputError);
  auto wrong_magic = bytes;
  wrong_magic[0] = 'X';
  CHECK_THROWS_AS(decontam::NgramIndex::deserialize(wrong_magic), InputError);

  auto pos = bytes.find(decontam::kTokenizerVersion);
  REQUIRE(pos != std::string::npos);
  auto other = bytes;
  other[pos] = 'X';
  auto foreign = decontam::NgramIndex::deserialize(other);
  CHECK_THROWS_AS(decontam::flag_contaminated(corpus, foreign), ConfigError);
}
