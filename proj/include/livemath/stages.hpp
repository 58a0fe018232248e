#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "livemath/funnel.hpp"
#include "livemath/ingest.hpp"
#include "livemath/io.hpp"
#include "livemath/llm.hpp"
#include "livemath/time.hpp"

namespace livemath::stages {

/// Fills {name} placeholders in one left-to-right pass, so text substituted
/// for one placeholder is never rescanned. Unknown {...} spans are copied
/// verbatim.
std::string fill_template(std::string_view pattern,
                          const std::map<std::string, std::string, std::less<>>& values);

struct PromptSet {
  std::string classify;
  std::string classify_examples;
  std::string parse;
  std::string parse_examples;
  std::string rewrite;

  /// The templates compiled in from prompts/.
  static PromptSet builtin();
};

struct StageModel {
  std::string model_id;
  llm::Gateway* gateway = nullptr;
};

struct StageContext {
  StageModel detect;
  StageModel extract;
  /// The first rewriter is the reference model of the cross-check; the
  /// training pipeline uses only it.
  std::vector<StageModel> rewriters;
  PromptSet prompts = PromptSet::builtin();
  int max_tokens = 2048;
  double temperature = 0.0;
  const ingest::DifficultyTable* difficulty = nullptr;  // null -> builtin table
};

std::string detect_tag(std::string_view topic_id);
std::string extract_tag(std::string_view topic_id);
std::string rewrite_tag(std::string_view rewriter, std::string_view topic_id, int post_number);
/// Tag of the single retry after a stage parse failure.
std::string retry_tag(std::string_view tag);

struct DetectionVerdict {
  std::string topic_id;
  bool is_math_question = false;
  std::string raw_model_text;
};

struct AnswerRef {
  int post_number = 0;
  std::string author;

  friend bool operator==(const AnswerRef&, const AnswerRef&) = default;
};

struct ExtractionResult {
  std::string topic_id;
  std::string question_text;
  std::vector<AnswerRef> answers;
};

struct RewrittenSolution {
  std::string topic_id;
  int post_number = 0;
  std::string rewriter_id;
  std::string text;
  std::optional<std::string> boxed_answer;

  friend bool operator==(const RewrittenSolution&, const RewrittenSolution&) = default;
};

struct Solution {
  int post_number = 0;
  std::string author;
  std::string raw_text;
  std::vector<RewrittenSolution> rewrites;  // one per rewriter, rewriter order

  const RewrittenSolution* rewrite_by(std::string_view rewriter_id) const;
  friend bool operator==(const Solution&, const Solution&) = default;
};

struct QaPair {
  std::string topic_id;
  std::string question_text;
  std::vector<Solution> solutions;
  Timestamp first_posted_at{};
  ingest::Difficulty difficulty = ingest::Difficulty::Others;
  std::optional<std::string> category;

  friend bool operator==(const QaPair&, const QaPair&) = default;
};

/// Value of the last \boxed{0} or \boxed{1}; StageParseError if there is none.
bool parse_detection(std::string_view text);

/// Validates the structured payload against `topic`: fences and prose around
/// the outermost {...} are discarded once, "answers" must be a list of
/// objects carrying an integer "post number". References to post 1 or to
/// posts the topic lacks are dropped; the author is taken from the topic.
/// Repeated references keep the first. Throws StageParseError.
std::vector<AnswerRef> parse_extraction(std::string_view text, const ingest::Topic& topic);

/// "post i by user j: body" lines joined by blank lines.
std::string render_topic(const ingest::Topic& topic);

std::vector<llm::Message> classify_messages(const ingest::Topic& topic, const PromptSet& prompts);
std::vector<llm::Message> parse_messages(const ingest::Topic& topic, const PromptSet& prompts);
std::vector<llm::Message> rewrite_messages(std::string_view question, std::string_view solution,
                                           const PromptSet& prompts);

/// `tag` overrides the default request tag (used for the retry).
DetectionVerdict detect(const ingest::Topic& topic, const StageContext& ctx,
                        std::optional<std::string> tag = std::nullopt);
ExtractionResult extract(const ingest::Topic& topic, const StageContext& ctx,
                         std::optional<std::string> tag = std::nullopt);
/// Throws ArgumentError on a blank raw solution and StageParseError when the
/// model returns no text; a missing box is not an error.
RewrittenSolution rewrite(std::string_view question, std::string_view raw_solution,
                          std::string_view topic_id, int post_number, const StageModel& rewriter,
                          const StageContext& ctx, std::optional<std::string> tag = std::nullopt);

/// Topic-axis counters. Every input topic ends in exactly one of pruned,
/// quarantined_detect, no_answers, quarantined_extract, quarantined_rewrite
/// or qa_pairs.
struct PipelineCounters {
  std::size_t input_topics = 0;
  std::size_t detected_math = 0;
  std::size_t pruned = 0;
  std::size_t quarantined_detect = 0;
  std::size_t with_answers = 0;
  std::size_t no_answers = 0;
  std::size_t quarantined_extract = 0;
  std::size_t quarantined_rewrite = 0;
  std::size_t qa_pairs = 0;
  std::size_t solutions = 0;
  std::size_t retries = 0;

  PipelineCounters& operator+=(const PipelineCounters& o);
  friend bool operator==(const PipelineCounters&, const PipelineCounters&) = default;

  /// Stages "detect", "extract", "rewrite" over topics.
  FunnelReport funnel() const;
  OrderedJson to_json() const;
};

struct Quarantine {
  std::string topic_id;
  std::string stage;  // "detect" | "extract" | "rewrite"
  std::string error_kind;
  std::string message;
};

struct PipelineResult {
  std::vector<QaPair> pairs;  // input topic order
  PipelineCounters counters;
  std::vector<Quarantine> quarantined;  // input topic order
};

/// Detect, extract and rewrite each topic. Stage parse failures are retried
/// once under retry_tag(); any remaining per-topic error (including transport
/// and replay misses) quarantines the topic. `all_rewriters` selects the
/// evaluation variant that runs every rewriter in ctx instead of only the
/// first.
PipelineResult run_pipeline(std::span<const ingest::Topic> topics, const StageContext& ctx,
                            bool all_rewriters, unsigned workers = 1);

inline PipelineResult run_training_pipeline(std::span<const ingest::Topic> topics,
                                            const StageContext& ctx, unsigned workers = 1) {
  return run_pipeline(topics, ctx, false, workers);
}

inline PipelineResult run_eval_pipeline(std::span<const ingest::Topic> topics,
                                        const StageContext& ctx, unsigned workers = 1) {
  return run_pipeline(topics, ctx, true, workers);
}

OrderedJson verdict_to_json(const DetectionVerdict& v);
OrderedJson extraction_to_json(const ExtractionResult& r);
ExtractionResult extraction_from_json(const Json& j);  // throws InputError
OrderedJson quarantine_to_json(const Quarantine& q);

/// {"topic_id", "question", "first_posted_at", "difficulty", "category",
///  "solutions": [{"post_number", "author", "raw_text",
///                 "rewrites": [{"rewriter", "text", "boxed_answer"}]}]}
OrderedJson qa_pair_to_json(const QaPair& p);
QaPair qa_pair_from_json(const Json& j);  // throws InputError
std::vector<QaPair> load_qa_pairs(const std::filesystem::path& path);
std::string serialize_qa_pairs(std::span<const QaPair> pairs);

}  // namespace livemath::stages
