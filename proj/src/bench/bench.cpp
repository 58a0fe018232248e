#include "livemath/bench.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/hash.hpp"
#include "livemath/parallel.hpp"

namespace livemath::bench {

namespace {

std::optional<std::string> original_box(std::string_view raw_text) {
  try {
    if (auto box = answer::extract_boxed(raw_text)) return box->raw;
  } catch (const ExtractError&) {
  }
  return std::nullopt;
}

std::optional<std::string> rewrite_box(const stages::Solution& s, std::string_view rewriter) {
  const auto* r = s.rewrite_by(rewriter);
  if (!r) return std::nullopt;
  return r->boxed_answer;
}

bool has_boxed_rewrite(const stages::QaPair& p) {
  for (const auto& s : p.solutions) {
    for (const auto& r : s.rewrites) {
      if (r.boxed_answer) return true;
    }
  }
  return false;
}

bool earlier(const stages::QaPair& a, const stages::QaPair& b) {
  return std::tie(a.first_posted_at, a.topic_id) < std::tie(b.first_posted_at, b.topic_id);
}

struct GroupOutcome {
  std::optional<BenchItem> item;
  std::string reason;
};

GroupOutcome cross_check_group(const QuestionGroup& g, const BenchOptions& opt) {
  const auto& first = g.members.front();
  std::vector<std::string> candidates;
  std::vector<ProvenanceRef> provenance;
  std::string reason = "no triplet";
  for (const auto& member : g.members) {
    for (const auto& s : member.solutions) {
      CrossCheckTriplet t{first.topic_id, rewrite_box(s, opt.reference_rewriter),
                          rewrite_box(s, opt.check_rewriter), original_box(s.raw_text)};
      if (!t.a_qwen && !t.a_llama) continue;
      auto r = cross_check(t);
      if (!r.keep) {
        reason = r.reason;
        continue;
      }
      candidates.insert(candidates.end(), r.final_answers.begin(), r.final_answers.end());
      provenance.push_back({member.topic_id, s.post_number, s.author});
    }
  }
  if (candidates.empty()) return {std::nullopt, reason};
  BenchItem item;
  item.question_id = first.topic_id;
  item.question_text = first.question_text;
  item.final_answers = dedup_answers(candidates);
  item.first_posted_at = first.first_posted_at;
  item.month_bucket = month_bucket(first.first_posted_at);
  item.difficulty = first.difficulty;
  item.answer_type = answer::classify_answer_type(item.final_answers.front());
  item.provenance = std::move(provenance);
  item.multi_answer = item.final_answers.size() > 1;
  return {std::move(item), {}};
}

std::string pipeline_hash(std::span<const decontam::NgramIndex> indices, const BenchOptions& opt) {
  OrderedJson j;
  j["stages"] = {kStageDecontam, kStageHeuristic, kStageMerge, kStageCrossCheck};
  j["from"] = format_rfc3339(opt.from);
  j["to"] = format_rfc3339(opt.to);
  j["reference_rewriter"] = opt.reference_rewriter;
  j["check_rewriter"] = opt.check_rewriter;
  j["proof_markers"] = opt.heuristics.proof_markers;
  j["equivalence"] = {{"relative_tolerance", answer::EquivalenceOptions{}.relative_tolerance},
                      {"probe_points", answer::EquivalenceOptions{}.probe_points}};
  OrderedJson idx = OrderedJson::array();
  for (const auto& index : indices) {
    Hasher h;
    for (const auto& fp : index.fingerprints()) {
      h.update(fmt::format("{:016x}{:016x}", fp.hi, fp.lo));
    }
    idx.push_back({{"n", index.n()},
                   {"tokenizer", index.tokenizer_version()},
                   {"corpora", index.corpus_ids()},
                   {"fingerprints", h.hex()}});
  }
  j["indices"] = idx;
  return digest_hex(j.dump());
}

Share share(std::string key, std::size_t count, std::size_t total) {
  double pct = total == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(total);
  return {std::move(key), count, pct};
}

std::vector<Share> shares(const std::map<std::string, std::size_t>& counts, std::size_t total) {
  std::vector<Share> out;
  for (const auto& [k, c] : counts) out.push_back(share(k, c, total));
  return out;
}

// Numeric keys sort numerically ("2" before "10").
std::vector<Share> numeric_shares(const std::map<std::size_t, std::size_t>& counts,
                                  std::size_t total) {
  std::vector<Share> out;
  for (const auto& [k, c] : counts) out.push_back(share(std::to_string(k), c, total));
  return out;
}

OrderedJson shares_to_json(const std::vector<Share>& v) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& s : v) {
    arr.push_back({{"key", s.key}, {"count", s.count}, {"pct", round2(s.pct)}});
  }
  return arr;
}

}  // namespace

CrossCheckResult cross_check(const CrossCheckTriplet& t) {
  if (!t.a_qwen || !t.a_llama) return {false, {}, "one rewrite has no boxed answer"};
  if (!answer::equivalent(*t.a_qwen, *t.a_llama).equivalent) {
    return {false, {}, "rewrites disagree"};
  }
  std::vector<std::string> candidates{*t.a_qwen};
  if (t.a_original) candidates.push_back(*t.a_original);
  return {true, dedup_answers(candidates), "rewrites agree"};
}

std::vector<std::string> dedup_answers(std::span<const std::string> candidates) {
  struct Entry {
    std::size_t len;
    std::string norm;
    std::string raw;
  };
  std::vector<Entry> entries;
  for (const auto& c : candidates) {
    auto n = answer::normalize_answer(c);
    entries.push_back({n.size(), std::move(n), c});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(a.len, a.norm, a.raw) < std::tie(b.len, b.norm, b.raw);
  });
  std::vector<std::string> out;
  for (const auto& e : entries) {
    bool dup = std::any_of(out.begin(), out.end(), [&](const std::string& kept) {
      return answer::equivalent(kept, e.raw).equivalent;
    });
    if (!dup) out.push_back(e.raw);
  }
  return out;
}

bool has_proof_marker(std::string_view question, const HeuristicConfig& cfg) {
  auto tokens = decontam::tokenize(question).tokens;
  for (const auto& marker : cfg.proof_markers) {
    auto m = decontam::tokenize(marker).tokens;
    if (m.empty() || m.size() > tokens.size()) continue;
    if (std::search(tokens.begin(), tokens.end(), m.begin(), m.end()) != tokens.end()) return true;
  }
  return false;
}

FilterResult filter_heuristic(std::span<const stages::QaPair> pairs, const HeuristicConfig& cfg) {
  FilterResult out;
  for (const auto& p : pairs) {
    if (has_proof_marker(p.question_text, cfg)) {
      out.removed.push_back({p.topic_id, std::string(kStageHeuristic), "proof"});
    } else if (!has_boxed_rewrite(p)) {
      out.removed.push_back({p.topic_id, std::string(kStageHeuristic), "no_boxed_answer"});
    } else {
      out.kept.push_back(p);
    }
  }
  return out;
}

std::string question_key(std::string_view question) {
  std::string key;
  for (const auto& t : decontam::tokenize(question).tokens) {
    if (!key.empty()) key += ' ';
    key += t;
  }
  return key;
}

std::vector<QuestionGroup> merge_duplicates(std::span<const stages::QaPair> pairs) {
  std::map<std::string, std::vector<stages::QaPair>> groups;
  for (const auto& p : pairs) groups[question_key(p.question_text)].push_back(p);
  std::vector<QuestionGroup> out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), earlier);
    out.push_back({key, std::move(members)});
  }
  return out;
}

BenchResult build_bench(std::span<const stages::QaPair> pairs,
                        std::span<const decontam::NgramIndex> train_indices,
                        const BenchOptions& opt) {
  if (opt.from >= opt.to) throw ArgumentError("bench window must satisfy from < to");
  if (opt.reference_rewriter.empty() || opt.check_rewriter.empty() ||
      opt.reference_rewriter == opt.check_rewriter) {
    throw ArgumentError("cross-check needs two distinct rewriter ids");
  }
  for (const auto& index : train_indices) {
    if (index.tokenizer_version() != decontam::kTokenizerVersion) {
      throw ConfigError(fmt::format("index tokenizer '{}' differs from '{}'",
                                    index.tokenizer_version(), decontam::kTokenizerVersion));
    }
  }
  for (const auto& p : pairs) {
    if (p.first_posted_at < opt.from || p.first_posted_at >= opt.to) {
      throw InputError(fmt::format("QA pair {} ({}) lies outside the bench window", p.topic_id,
                                   format_rfc3339(p.first_posted_at)));
    }
  }

  BenchResult result;
  result.header.bench_version = month_bucket(opt.to - std::chrono::seconds(1));
  result.header.built_at = opt.to;
  result.header.pipeline_hash = pipeline_hash(train_indices, opt);

  std::vector<char> flagged(pairs.size(), 0);
  parallel_for(pairs.size(), opt.workers, [&](std::size_t i) {
    auto doc = decontam::tokenize(pairs[i].question_text, pairs[i].topic_id);
    for (const auto& index : train_indices) {
      if (decontam::first_match(doc, index)) {
        flagged[i] = 1;
        return;
      }
    }
  });
  std::vector<stages::QaPair> clean;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (flagged[i]) {
      result.removed.push_back({pairs[i].topic_id, std::string(kStageDecontam), "ngram_overlap"});
    } else {
      clean.push_back(pairs[i]);
    }
  }
  result.funnel.add(std::string(kStageDecontam), pairs.size(), clean.size());

  auto filtered = filter_heuristic(clean, opt.heuristics);
  result.removed.insert(result.removed.end(), filtered.removed.begin(), filtered.removed.end());
  result.funnel.add(std::string(kStageHeuristic), clean.size(), filtered.kept.size());

  auto groups = merge_duplicates(filtered.kept);
  for (const auto& g : groups) {
    for (std::size_t m = 1; m < g.members.size(); ++m) {
      result.removed.push_back({g.members[m].topic_id, std::string(kStageMerge),
                                "duplicate of " + g.members.front().topic_id});
    }
  }
  result.funnel.add(std::string(kStageMerge), filtered.kept.size(), groups.size());

  std::vector<GroupOutcome> outcomes(groups.size());
  parallel_for(groups.size(), opt.workers,
               [&](std::size_t i) { outcomes[i] = cross_check_group(groups[i], opt); });
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (outcomes[i].item) {
      result.items.push_back(std::move(*outcomes[i].item));
    } else {
      result.removed.push_back(
          {groups[i].members.front().topic_id, std::string(kStageCrossCheck), outcomes[i].reason});
    }
  }
  result.funnel.add(std::string(kStageCrossCheck), groups.size(), result.items.size());

  std::sort(result.items.begin(), result.items.end(),
            [](const BenchItem& a, const BenchItem& b) { return a.question_id < b.question_id; });
  std::stable_sort(result.removed.begin(), result.removed.end(),
                   [](const Removal& a, const Removal& b) {
                     return std::tie(a.stage, a.topic_id) < std::tie(b.stage, b.topic_id);
                   });
  return result;
}

OrderedJson header_to_json(const BenchHeader& h) {
  return {{"bench_version", h.bench_version},
          {"built_at", format_rfc3339(h.built_at)},
          {"pipeline_hash", h.pipeline_hash}};
}

OrderedJson bench_item_to_json(const BenchItem& item) {
  OrderedJson prov = OrderedJson::array();
  for (const auto& p : item.provenance) {
    prov.push_back({{"topic_id", p.topic_id}, {"post_number", p.post_number}, {"author", p.author}});
  }
  OrderedJson j;
  j["question_id"] = item.question_id;
  j["question_text"] = item.question_text;
  j["final_answers"] = item.final_answers;
  j["first_posted_at"] = format_rfc3339(item.first_posted_at);
  j["month_bucket"] = item.month_bucket;
  j["difficulty"] = ingest::to_string(item.difficulty);
  j["answer_type"] = answer::to_string(item.answer_type);
  j["provenance"] = prov;
  j["multi_answer"] = item.multi_answer;
  return j;
}

BenchItem bench_item_from_json(const Json& j) {
  try {
    BenchItem item;
    item.question_id = j.at("question_id").get<std::string>();
    item.question_text = j.at("question_text").get<std::string>();
    item.final_answers = j.at("final_answers").get<std::vector<std::string>>();
    if (item.final_answers.empty()) {
      throw InputError("bench item " + item.question_id + " has no final answers");
    }
    auto ts = parse_rfc3339(j.at("first_posted_at").get<std::string>());
    if (!ts) throw InputError("bench item " + item.question_id + " has a bad timestamp");
    item.first_posted_at = *ts;
    item.month_bucket = month_bucket(*ts);
    auto diff = ingest::difficulty_from_string(j.value("difficulty", std::string("Others")));
    if (!diff) throw InputError("bench item " + item.question_id + " has an unknown difficulty");
    item.difficulty = *diff;
    if (auto t = j.find("answer_type"); t != j.end()) {
      auto type = answer::answer_type_from_string(t->get<std::string>());
      if (!type) throw InputError("bench item " + item.question_id + " has an unknown answer type");
      item.answer_type = *type;
    } else {
      item.answer_type = answer::classify_answer_type(item.final_answers.front());
    }
    for (const auto& p : j.value("provenance", Json::array())) {
      item.provenance.push_back({p.at("topic_id").get<std::string>(), p.at("post_number").get<int>(),
                                 p.value("author", std::string())});
    }
    item.multi_answer = j.value("multi_answer", item.final_answers.size() > 1);
    return item;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed bench item: ") + e.what());
  }
}

std::string serialize_bench(const BenchHeader& header, std::span<const BenchItem> items) {
  std::string out = header_to_json(header).dump() + '\n';
  for (const auto& item : items) out += bench_item_to_json(item).dump() + '\n';
  return out;
}

BenchFile load_bench(const std::filesystem::path& path) {
  BenchFile out;
  std::set<std::string> ids;
  for (const auto& j : read_jsonl(path)) {
    if (j.contains("bench_version")) {
      try {
        auto ts = parse_rfc3339(j.at("built_at").get<std::string>());
        if (!ts) throw InputError("bench header has a bad built_at");
        out.header = BenchHeader{j.at("bench_version").get<std::string>(), *ts,
                                 j.value("pipeline_hash", std::string())};
      } catch (const Json::exception& e) {
        throw InputError(std::string("malformed bench header: ") + e.what());
      }
      continue;
    }
    auto item = bench_item_from_json(j);
    if (!ids.insert(item.question_id).second) {
      throw InputError("duplicate question_id in bench: " + item.question_id);
    }
    out.items.push_back(std::move(item));
  }
  return out;
}

OrderedJson StatsReport::to_json() const {
  OrderedJson j;
  j["total"] = total;
  j["answers_per_question"] = shares_to_json(answers_per_question);
  j["per_year"] = shares_to_json(per_year);
  j["per_month"] = shares_to_json(per_month);
  j["by_difficulty"] = shares_to_json(by_difficulty);
  if (!by_answer_type.empty()) j["by_answer_type"] = shares_to_json(by_answer_type);
  return j;
}

StatsReport dataset_stats(std::span<const stages::QaPair> pairs) {
  StatsReport r;
  r.total = pairs.size();
  std::map<std::size_t, std::size_t> answers;
  std::map<std::string, std::size_t> years, months, difficulty;
  for (const auto& p : pairs) {
    ++answers[p.solutions.size()];
    ++years[std::to_string(year_of(p.first_posted_at))];
    ++months[month_bucket(p.first_posted_at)];
    ++difficulty[std::string(ingest::to_string(p.difficulty))];
  }
  r.answers_per_question = numeric_shares(answers, r.total);
  r.per_year = shares(years, r.total);
  r.per_month = shares(months, r.total);
  r.by_difficulty = shares(difficulty, r.total);
  return r;
}

StatsReport dataset_stats(std::span<const BenchItem> items) {
  StatsReport r;
  r.total = items.size();
  std::map<std::size_t, std::size_t> answers;
  std::map<std::string, std::size_t> years, months, difficulty, types;
  for (const auto& item : items) {
    ++answers[item.final_answers.size()];
    ++years[std::to_string(year_of(item.first_posted_at))];
    ++months[item.month_bucket];
    ++difficulty[std::string(ingest::to_string(item.difficulty))];
    ++types[std::string(answer::to_string(item.answer_type))];
  }
  r.answers_per_question = numeric_shares(answers, r.total);
  r.per_year = shares(years, r.total);
  r.per_month = shares(months, r.total);
  r.by_difficulty = shares(difficulty, r.total);
  r.by_answer_type = shares(types, r.total);
  return r;
}

}  // namespace livemath::bench
