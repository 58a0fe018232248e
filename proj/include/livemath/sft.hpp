#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "livemath/decontam.hpp"
#include "livemath/io.hpp"
#include "livemath/stages.hpp"
#include "livemath/time.hpp"

namespace livemath::sft {

/// A chat template with exactly one {question} and one {solution}.
class ChatTemplate {
 public:
  /// Throws ConfigError unless each placeholder occurs exactly once.
  ChatTemplate(std::string name, std::string pattern);

  /// Named templates shipped with the tool: "inst" is
  /// "<s>[INST] {question} [/INST]{solution}".
  static ChatTemplate builtin(std::string_view name);

  const std::string& name() const { return name_; }
  const std::string& pattern() const { return pattern_; }

  /// Byte-exact substitution; nothing else in the pattern changes.
  std::string render(std::string_view question, std::string_view solution) const;

 private:
  std::string name_;
  std::string pattern_;
};

struct SftRecord {
  std::string instruction;
  std::string response;
  std::optional<std::string> rendered;
  std::string topic_id;
  int post_number = 0;
  std::string rewriter_id;
  Timestamp first_posted_at{};
};

struct ExportReport {
  std::size_t candidates = 0;
  std::size_t exported = 0;
  std::size_t excluded_contaminated = 0;
  std::size_t excluded_cutoff = 0;

  OrderedJson to_json() const;
};

struct ExportOptions {
  Timestamp cutoff{};
  decontam::Fields fields = decontam::Fields::Question;
  std::optional<ChatTemplate> chat_template;
  std::optional<std::string> rewriter;  // unset: every rewrite is a candidate
  unsigned workers = 1;
};

struct ExportResult {
  std::vector<SftRecord> records;
  ExportReport report;
};

/// One candidate per (pair, solution, rewrite). Candidates dated on or after
/// the cutoff are excluded first; the rest are excluded when the question
/// (or question plus rewrite, per options.fields) shares a window with the
/// index. `index` may be null to skip decontamination. Throws ConfigError on
/// a tokenizer mismatch and InputError on a blank question or rewrite.
ExportResult export_sft(std::span<const stages::QaPair> pairs, const decontam::NgramIndex* index,
                        const ExportOptions& options);

/// {"instruction", "response", "rendered"?, "meta": {"topic_id",
///  "post_number", "rewriter_id", "first_posted_at"}}
OrderedJson record_to_json(const SftRecord& r);

}  // namespace livemath::sft
