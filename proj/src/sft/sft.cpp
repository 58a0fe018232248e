#include "livemath/sft.hpp"

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/parallel.hpp"

namespace livemath::sft {

namespace {

std::size_t count_of(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

struct Candidate {
  const stages::QaPair* pair;
  const stages::Solution* solution;
  const stages::RewrittenSolution* rewrite;
};

}  // namespace

ChatTemplate::ChatTemplate(std::string name, std::string pattern)
    : name_(std::move(name)), pattern_(std::move(pattern)) {
  for (std::string_view ph : {"{question}", "{solution}"}) {
    auto n = count_of(pattern_, ph);
    if (n != 1) {
      throw ConfigError(fmt::format("chat template '{}' must contain {} exactly once (found {})",
                                    name_, ph, n));
    }
  }
}

ChatTemplate ChatTemplate::builtin(std::string_view name) {
  if (name == "inst") return ChatTemplate("inst", "<s>[INST] {question} [/INST]{solution}");
  throw ConfigError(fmt::format("unknown chat template '{}'", name));
}

std::string ChatTemplate::render(std::string_view question, std::string_view solution) const {
  return stages::fill_template(pattern_, {{"question", std::string(question)},
                                          {"solution", std::string(solution)}});
}

OrderedJson ExportReport::to_json() const {
  return {{"candidates", candidates},
          {"exported", exported},
          {"excluded_contaminated", excluded_contaminated},
          {"excluded_cutoff", excluded_cutoff}};
}

ExportResult export_sft(std::span<const stages::QaPair> pairs, const decontam::NgramIndex* index,
                        const ExportOptions& options) {
  if (index && index->tokenizer_version() != decontam::kTokenizerVersion) {
    throw ConfigError(fmt::format("index tokenizer '{}' differs from '{}'",
                                  index->tokenizer_version(), decontam::kTokenizerVersion));
  }
  std::vector<Candidate> candidates;
  for (const auto& p : pairs) {
    for (const auto& s : p.solutions) {
      for (const auto& r : s.rewrites) {
        if (options.rewriter && r.rewriter_id != *options.rewriter) continue;
        candidates.push_back({&p, &s, &r});
      }
    }
  }

  enum class Fate : char { Export, Cutoff, Contaminated };
  std::vector<Fate> fate(candidates.size(), Fate::Export);
  parallel_for(candidates.size(), options.workers, [&](std::size_t i) {
    const auto& c = candidates[i];
    auto blank = [](std::string_view t) { return t.find_first_not_of(" \t\r\n") == std::string_view::npos; };
    if (blank(c.pair->question_text) || blank(c.rewrite->text)) {
      throw InputError(fmt::format("blank question or rewrite in topic {} post {}",
                                   c.pair->topic_id, c.solution->post_number));
    }
    if (c.pair->first_posted_at >= options.cutoff) {
      fate[i] = Fate::Cutoff;
      return;
    }
    if (!index) return;
    std::string text = c.pair->question_text;
    if (options.fields == decontam::Fields::QuestionSolution) text += "\n" + c.rewrite->text;
    if (decontam::first_match(decontam::tokenize(text, c.pair->topic_id), *index)) {
      fate[i] = Fate::Contaminated;
    }
  });

  ExportResult out;
  out.report.candidates = candidates.size();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (fate[i] == Fate::Cutoff) {
      ++out.report.excluded_cutoff;
      continue;
    }
    if (fate[i] == Fate::Contaminated) {
      ++out.report.excluded_contaminated;
      continue;
    }
    const auto& c = candidates[i];
    SftRecord r;
    r.instruction = c.pair->question_text;
    r.response = c.rewrite->text;
    if (options.chat_template) r.rendered = options.chat_template->render(r.instruction, r.response);
    r.topic_id = c.pair->topic_id;
    r.post_number = c.solution->post_number;
    r.rewriter_id = c.rewrite->rewriter_id;
    r.first_posted_at = c.pair->first_posted_at;
    out.records.push_back(std::move(r));
  }
  out.report.exported = out.records.size();
  return out;
}

OrderedJson record_to_json(const SftRecord& r) {
  OrderedJson j;
  j["instruction"] = r.instruction;
  j["response"] = r.response;
  if (r.rendered) j["rendered"] = *r.rendered;
  j["meta"] = {{"topic_id", r.topic_id},
               {"post_number", r.post_number},
               {"rewriter_id", r.rewriter_id},
               {"first_posted_at", format_rfc3339(r.first_posted_at)}};
  return j;
}

}  // namespace livemath::sft
