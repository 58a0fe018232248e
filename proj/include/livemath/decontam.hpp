#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "livemath/hash.hpp"
#include "livemath/io.hpp"
#include "livemath/time.hpp"

namespace livemath::decontam {

/// Stored in every index; flagging refuses an index built by another tokenizer.
inline constexpr std::string_view kTokenizerVersion = "ws-lower-punct-v1";

/// Characters stripped from both ends of each token.
inline constexpr std::string_view kEdgePunctuation = ".,;:!?\"'()[]<>$`";

struct TokenStream {
  std::string doc_id;
  std::vector<std::string> tokens;
};

/// ASCII-lowercases, splits on whitespace and strips kEdgePunctuation from
/// token edges; tokens that end up empty are dropped. LaTeX commands such as
/// "\frac" survive intact.
TokenStream tokenize(std::string_view text, std::string doc_id = {});

/// Fingerprint of tokens[offset, offset + n), joined with 0x1F.
Fingerprint window_fingerprint(std::span<const std::string> tokens, std::size_t offset,
                               std::size_t n);

/// Sorted set of window fingerprints over one or more reference corpora.
class NgramIndex {
 public:
  /// Throws ArgumentError when n < 1. Documents shorter than n add nothing.
  static NgramIndex build(std::span<const TokenStream> docs, int n,
                          std::vector<std::string> corpus_ids = {}, unsigned workers = 1);

  int n() const { return n_; }
  const std::string& tokenizer_version() const { return tokenizer_version_; }
  const std::vector<std::string>& corpus_ids() const { return corpus_ids_; }
  const std::vector<Fingerprint>& fingerprints() const { return fingerprints_; }
  std::size_t size() const { return fingerprints_.size(); }
  bool contains(const Fingerprint& fp) const;

  /// Little-endian layout: "LMNGIDX1", u32 format version, tokenizer version,
  /// u32 n, corpus ids, u64 count, count x (u64 hi, u64 lo) ascending.
  /// Strings are u32-length-prefixed.
  std::string serialize() const;
  static NgramIndex deserialize(std::string_view bytes);  // throws InputError
  void save(const std::filesystem::path& path) const;
  static NgramIndex load(const std::filesystem::path& path);

 private:
  int n_ = 1;
  std::string tokenizer_version_{kTokenizerVersion};
  std::vector<std::string> corpus_ids_;
  std::vector<Fingerprint> fingerprints_;
};

/// Offset of the first window of `doc` present in the index.
std::optional<std::size_t> first_match(const TokenStream& doc, const NgramIndex& index);

struct Flag {
  std::string doc_id;
  std::size_t offset = 0;
};

struct BucketCount {
  std::string bucket;
  std::size_t flagged = 0;
  std::size_t total = 0;
};

struct OverlapReport {
  int n = 0;
  std::size_t total_docs = 0;
  std::vector<Flag> flagged;  // query order
  double overlap_pct = 0.0;
  std::vector<BucketCount> buckets;
};

/// Calendar bucket label such as "23/01-04" for span_months = 4.
std::string time_bucket(Timestamp ts, unsigned span_months = 4);

/// `timestamps`, when non-empty, is parallel to `query` and drives the
/// per-bucket counts; documents without a timestamp land in "unknown".
/// Throws ConfigError if the index was built by a different tokenizer.
OverlapReport flag_contaminated(std::span<const TokenStream> query, const NgramIndex& index,
                                unsigned workers = 1,
                                std::span<const std::optional<Timestamp>> timestamps = {},
                                unsigned bucket_months = 4);

OrderedJson report_to_json(const OverlapReport& report);

struct NamedCorpus {
  std::string name;
  std::vector<TokenStream> docs;
};

/// Entry (i, j) is the percentage of corpus i flagged against an index of
/// corpus j. Throws ArgumentError for fewer than two corpora or n < 1.
std::vector<std::vector<double>> pairwise_overlap(std::span<const NamedCorpus> corpora, int n,
                                                  unsigned workers = 1);

enum class Fields { Question, QuestionSolution };

Fields fields_from_string(std::string_view s);  // "question" | "question+solution"

struct CorpusDoc {
  std::string id;
  std::string text;
  std::optional<Timestamp> ts;
};

/// Reads a JSONL corpus. Recognizes topic dumps, QA pairs, bench items and
/// SFT records: the id comes from "id", "question_id" or "topic_id", the
/// question from "text", "question", "question_text", "instruction" or the
/// first post, and solutions (for QuestionSolution) from "solution",
/// "response" or "solutions".
std::vector<CorpusDoc> load_corpus(const std::filesystem::path& path, Fields fields);

std::vector<TokenStream> tokenize_all(std::span<const CorpusDoc> docs, unsigned workers = 1);

}  // namespace livemath::decontam
