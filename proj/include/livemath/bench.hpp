#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "livemath/answer.hpp"
#include "livemath/decontam.hpp"
#include "livemath/funnel.hpp"
#include "livemath/ingest.hpp"
#include "livemath/io.hpp"
#include "livemath/stages.hpp"
#include "livemath/time.hpp"

namespace livemath::bench {

inline constexpr std::string_view kStageDecontam = "decontaminate_8gram";
inline constexpr std::string_view kStageHeuristic = "heuristic_filter";
inline constexpr std::string_view kStageMerge = "merge_duplicates";
inline constexpr std::string_view kStageCrossCheck = "cross_check";

struct CrossCheckTriplet {
  std::string question_id;
  std::optional<std::string> a_qwen;  // reference rewriter
  std::optional<std::string> a_llama;  // check rewriter
  std::optional<std::string> a_original;
};

struct CrossCheckResult {
  bool keep = false;
  std::vector<std::string> final_answers;  // empty unless keep
  std::string reason;
};

/// Kept iff both rewrites are boxed and equivalent. Candidates are a_qwen
/// plus a_original when present, deduplicated by dedup_answers().
CrossCheckResult cross_check(const CrossCheckTriplet& t);

/// Equivalence classes in order of their representative; the representative
/// is the member with the shortest normalized form, then the smallest
/// normalized form, then the smallest raw string.
std::vector<std::string> dedup_answers(std::span<const std::string> candidates);

struct ProvenanceRef {
  std::string topic_id;
  int post_number = 0;
  std::string author;

  friend bool operator==(const ProvenanceRef&, const ProvenanceRef&) = default;
};

struct BenchItem {
  std::string question_id;
  std::string question_text;
  std::vector<std::string> final_answers;
  Timestamp first_posted_at{};
  std::string month_bucket;
  ingest::Difficulty difficulty = ingest::Difficulty::Others;
  answer::AnswerType answer_type = answer::AnswerType::Others;
  std::vector<ProvenanceRef> provenance;  // solutions whose triplet was kept
  bool multi_answer = false;

  friend bool operator==(const BenchItem&, const BenchItem&) = default;
};

struct Removal {
  std::string topic_id;
  std::string stage;
  std::string reason;
};

struct HeuristicConfig {
  std::vector<std::string> proof_markers{"prove", "show that", "prove that", "justify"};
};

/// True if the question contains a proof marker as a run of whole tokens
/// (decontam tokenizer), so "prove" does not fire on "improve".
bool has_proof_marker(std::string_view question, const HeuristicConfig& cfg);

struct FilterResult {
  std::vector<stages::QaPair> kept;
  std::vector<Removal> removed;  // reasons "proof" | "no_boxed_answer"
};

FilterResult filter_heuristic(std::span<const stages::QaPair> pairs, const HeuristicConfig& cfg);

/// Decontam tokens of the question joined by single spaces.
std::string question_key(std::string_view question);

struct QuestionGroup {
  std::string key;
  std::vector<stages::QaPair> members;  // sorted by (first_posted_at, topic_id)
};

/// Groups sorted by key.
std::vector<QuestionGroup> merge_duplicates(std::span<const stages::QaPair> pairs);

struct BenchOptions {
  Timestamp from{};
  Timestamp to{};
  std::string reference_rewriter;
  std::string check_rewriter;
  HeuristicConfig heuristics;
  unsigned workers = 1;
};

struct BenchHeader {
  std::string bench_version;  // "YYYY-MM" of the last month in the window
  Timestamp built_at{};       // window end
  std::string pipeline_hash;
};

struct BenchResult {
  BenchHeader header;
  std::vector<BenchItem> items;  // sorted by question_id
  FunnelReport funnel;
  std::vector<Removal> removed;
};

/// Decontaminate, filter, merge and cross-check. Each pair is flagged when
/// its question shares a window with any of `train_indices`. Throws
/// InputError if a pair lies outside [from, to), ArgumentError if from >= to
/// or the rewriter ids are empty or equal.
BenchResult build_bench(std::span<const stages::QaPair> pairs,
                        std::span<const decontam::NgramIndex> train_indices,
                        const BenchOptions& options);

OrderedJson header_to_json(const BenchHeader& h);
OrderedJson bench_item_to_json(const BenchItem& item);
BenchItem bench_item_from_json(const Json& j);  // throws InputError

struct BenchFile {
  std::optional<BenchHeader> header;
  std::vector<BenchItem> items;
};

std::string serialize_bench(const BenchHeader& header, std::span<const BenchItem> items);
BenchFile load_bench(const std::filesystem::path& path);

struct Share {
  std::string key;
  std::size_t count = 0;
  double pct = 0.0;
};

struct StatsReport {
  std::size_t total = 0;
  std::vector<Share> answers_per_question;
  std::vector<Share> per_year;
  std::vector<Share> per_month;
  std::vector<Share> by_difficulty;
  std::vector<Share> by_answer_type;  // bench only

  OrderedJson to_json() const;
};

/// Answers per question counts solutions.
StatsReport dataset_stats(std::span<const stages::QaPair> pairs);
/// Answers per question counts final answers.
StatsReport dataset_stats(std::span<const BenchItem> items);

}  // namespace livemath::bench
