#include "livemath/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "livemath/annotate.hpp"
#include "livemath/bench.hpp"
#include "livemath/config.hpp"
#include "livemath/decontam.hpp"
#include "livemath/error.hpp"
#include "livemath/eval.hpp"
#include "livemath/hash.hpp"
#include "livemath/ingest.hpp"
#include "livemath/io.hpp"
#include "livemath/llm.hpp"
#include "livemath/parallel.hpp"
#include "livemath/sft.hpp"
#include "livemath/stages.hpp"

#ifndef LIVEMATH_VERSION
#define LIVEMATH_VERSION "0.0.0"
#endif

namespace livemath::cli {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::string config;
  std::optional<unsigned> workers;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string manifest;
};

struct Env {
  config::RunConfig cfg;
  unsigned workers = 1;
  std::uint64_t seed = 0;
};

Env resolve(const Globals& g) {
  Env env;
  if (!g.config.empty()) env.cfg = config::RunConfig::load(g.config);
  env.cfg.apply_env();
  for (const auto& s : g.sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + s + "'");
    env.cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  env.cfg.validate();
  env.workers = resolve_workers(g.workers.value_or(
      static_cast<unsigned>(std::max(0L, env.cfg.get_int("workers", 0)))));
  env.seed = g.seed.value_or(static_cast<std::uint64_t>(env.cfg.get_int("seed", 0)));
  return env;
}

/// Inputs, outputs and settings of one run; no wall-clock values, so two
/// identical runs write identical manifests.
class Manifest {
 public:
  Manifest(std::string subcommand, const Env& env) {
    doc_["tool"] = "livemath";
    doc_["version"] = LIVEMATH_VERSION;
    doc_["subcommand"] = std::move(subcommand);
    doc_["config_hash"] = env.cfg.hash();
    doc_["seed"] = env.seed;
    doc_["arguments"] = OrderedJson::object();
    doc_["inputs"] = OrderedJson::array();
    doc_["outputs"] = OrderedJson::array();
  }

  void arg(const std::string& key, OrderedJson value) { doc_["arguments"][key] = std::move(value); }
  void input(const fs::path& p) { doc_["inputs"].push_back(entry(p)); }
  void output(const fs::path& p) {
    doc_["outputs"].push_back(entry(p));
    if (default_path_.empty()) default_path_ = p.string() + ".manifest.json";
  }
  void set_default_path(fs::path p) { default_path_ = std::move(p); }

  void write(const std::string& override_path) const {
    fs::path dest = override_path.empty() ? default_path_ : fs::path(override_path);
    if (dest.empty()) return;
    write_file(dest, dump_pretty(doc_));
  }

 private:
  static OrderedJson entry(const fs::path& p) {
    return {{"path", p.generic_string()}, {"blake2b", file_digest_hex(p)}};
  }

  OrderedJson doc_;
  fs::path default_path_;
};

void emit_summary(std::ostream& out, const OrderedJson& j) { out << j.dump() << '\n'; }

void write_jsonl(const fs::path& path, const std::vector<OrderedJson>& docs) {
  write_file(path, to_jsonl(docs));
}

std::vector<ingest::Topic> load_topics(const fs::path& path, unsigned workers) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  auto result = ingest::parse_dump(in, workers);
  if (!result.rejects.empty()) {
    const auto& r = result.rejects.front();
    throw InputError(fmt::format("{}: line {} rejected ({}): {}", path.string(), r.line, r.reason,
                                 r.detail));
  }
  return std::move(result.topics);
}

ingest::DifficultyTable difficulty_table(const Env& env) {
  if (auto p = env.cfg.get_path("difficulty_map")) return ingest::DifficultyTable::load(*p);
  return ingest::DifficultyTable::builtin();
}

Timestamp required_instant(const Env& env, const std::string& cli_value, std::string_view key) {
  if (!cli_value.empty()) {
    auto ts = parse_instant_or_date(cli_value);
    if (!ts) throw ArgumentError(fmt::format("'{}' is not a date", cli_value));
    return *ts;
  }
  if (auto ts = env.cfg.get_instant(key)) return *ts;
  throw ConfigError(fmt::format("no value for {} (flag or config key)", key));
}

decontam::Fields fields_setting(const Env& env, const std::string& cli_value,
                                std::string_view key) {
  return decontam::fields_from_string(cli_value.empty() ? env.cfg.get_or(key, "question")
                                                        : cli_value);
}

// One gateway per stage; rewriters share the rewrite gateway.
struct Llm {
  std::vector<std::unique_ptr<llm::Gateway>> gateways;
  std::vector<std::shared_ptr<llm::RecordingBackend>> recorders;
  std::optional<fs::path> record_path;
  std::unique_ptr<ingest::DifficultyTable> table;
  stages::StageContext ctx;

  void flush_recording() const {
    if (!record_path) return;
    std::vector<std::pair<llm::ChatRequest, llm::ChatResponse>> all;
    for (const auto& r : recorders) {
      auto s = r->session();
      all.insert(all.end(), s.begin(), s.end());
    }
    write_file(*record_path, llm::record_replay(all));
  }
};

std::unique_ptr<Llm> make_llm(const Env& env, const std::vector<std::string>& rewriter_override) {
  auto out = std::make_unique<Llm>();
  out->record_path = env.cfg.get_path("llm.record");
  out->table = std::make_unique<ingest::DifficultyTable>(difficulty_table(env));
  std::map<std::string, llm::Gateway*> by_stage;
  for (std::string stage : {"detect", "extract", "rewrite"}) {
    auto bc = env.cfg.backend(stage);
    std::shared_ptr<llm::ChatBackend> backend = llm::make_backend(bc);
    if (out->record_path) {
      auto rec = std::make_shared<llm::RecordingBackend>(backend);
      out->recorders.push_back(rec);
      backend = rec;
    }
    out->gateways.push_back(std::make_unique<llm::Gateway>(backend, bc, llm::Sleeper{}, env.seed));
    by_stage[stage] = out->gateways.back().get();
  }
  auto& ctx = out->ctx;
  ctx.detect = {env.cfg.get_or("detect.model", "qwen2.5-14b-instruct"), by_stage["detect"]};
  ctx.extract = {env.cfg.get_or("extract.model", "llama-3.1-70b-instruct"), by_stage["extract"]};
  auto rewriters = rewriter_override.empty()
                       ? env.cfg.get_list("rewriters",
                                          {"qwen2.5-72b-instruct", "llama-3.1-70b-instruct"})
                       : rewriter_override;
  if (rewriters.empty()) throw ConfigError("no rewriters configured");
  for (const auto& r : rewriters) ctx.rewriters.push_back({r, by_stage["rewrite"]});
  ctx.max_tokens = static_cast<int>(env.cfg.get_int("llm.max_tokens", ctx.max_tokens));
  ctx.temperature = env.cfg.get_double("llm.temperature", ctx.temperature);
  ctx.difficulty = out->table.get();
  return out;
}

template <typename Fn>
auto retry_once(const std::string& tag, Fn&& call) {
  try {
    return call(tag);
  } catch (const StageParseError&) {
    return call(stages::retry_tag(tag));
  }
}

struct StageQuarantine {
  std::vector<std::optional<stages::Quarantine>> slots;

  explicit StageQuarantine(std::size_t n) : slots(n) {}
  void put(std::size_t i, const std::string& topic, const std::string& stage, const Error& e) {
    slots[i] = stages::Quarantine{topic, stage, e.kind(), e.what()};
  }
  std::vector<OrderedJson> docs() const {
    std::vector<OrderedJson> out;
    for (const auto& q : slots) {
      if (q) out.push_back(stages::quarantine_to_json(*q));
    }
    return out;
  }
};

void write_quarantine(const std::string& path, const StageQuarantine& q, Manifest& m) {
  if (path.empty()) return;
  write_jsonl(path, q.docs());
  m.output(path);
}

// ---- ingest -------------------------------------------------------------

struct IngestOpts {
  std::string dump, out, rejects, from, to;
};

void cmd_ingest(const IngestOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  std::ifstream in(o.dump, std::ios::binary);
  if (!in) throw IoError("cannot read " + o.dump);
  m.input(o.dump);
  auto result = ingest::parse_dump(in, env.workers);
  std::vector<ingest::Topic> topics = std::move(result.topics);
  std::size_t parsed = topics.size();
  if (!o.from.empty() || !o.to.empty()) {
    auto from = required_instant(env, o.from, "eval.from");
    auto to = required_instant(env, o.to, "eval.to");
    topics = ingest::window(topics, from, to);
    m.arg("from", format_rfc3339(from));
    m.arg("to", format_rfc3339(to));
  }
  write_file(o.out, ingest::serialize_dump(topics));
  m.output(o.out);
  if (!o.rejects.empty()) {
    std::vector<OrderedJson> docs;
    for (const auto& r : result.rejects) docs.push_back(OrderedJson(ingest::reject_to_json(r)));
    write_jsonl(o.rejects, docs);
    m.output(o.rejects);
  }
  emit_summary(out, {{"accepted", parsed}, {"rejected", result.rejects.size()},
                     {"written", topics.size()}});
}

// ---- LLM stages ---------------------------------------------------------

struct DetectOpts {
  std::string topics, out, quarantine;
};

void cmd_detect(const DetectOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto topics = load_topics(o.topics, env.workers);
  m.input(o.topics);
  auto llm = make_llm(env, {});
  std::vector<std::optional<stages::DetectionVerdict>> verdicts(topics.size());
  StageQuarantine q(topics.size());
  parallel_for(topics.size(), env.workers, [&](std::size_t i) {
    const auto& t = topics[i];
    try {
      verdicts[i] = retry_once(stages::detect_tag(t.topic_id), [&](const std::string& tag) {
        return stages::detect(t, llm->ctx, tag);
      });
    } catch (const Error& e) {
      q.put(i, t.topic_id, "detect", e);
    }
  });
  std::vector<OrderedJson> docs;
  std::size_t math = 0;
  for (const auto& v : verdicts) {
    if (!v) continue;
    if (v->is_math_question) ++math;
    docs.push_back(stages::verdict_to_json(*v));
  }
  write_jsonl(o.out, docs);
  m.output(o.out);
  write_quarantine(o.quarantine, q, m);
  llm->flush_recording();
  emit_summary(out, {{"input_topics", topics.size()}, {"detected_math", math},
                     {"pruned", docs.size() - math}, {"quarantined", topics.size() - docs.size()}});
}

struct ExtractOpts {
  std::string topics, verdicts, out, quarantine;
};

void cmd_extract(const ExtractOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto topics = load_topics(o.topics, env.workers);
  m.input(o.topics);
  if (!o.verdicts.empty()) {
    m.input(o.verdicts);
    std::set<std::string> math;
    for (const auto& j : read_jsonl(o.verdicts)) {
      if (j.value("is_math_question", false)) math.insert(j.at("topic_id").get<std::string>());
    }
    std::erase_if(topics, [&](const ingest::Topic& t) { return !math.count(t.topic_id); });
  }
  auto llm = make_llm(env, {});
  std::vector<std::optional<stages::ExtractionResult>> results(topics.size());
  StageQuarantine q(topics.size());
  parallel_for(topics.size(), env.workers, [&](std::size_t i) {
    const auto& t = topics[i];
    try {
      results[i] = retry_once(stages::extract_tag(t.topic_id), [&](const std::string& tag) {
        return stages::extract(t, llm->ctx, tag);
      });
    } catch (const Error& e) {
      q.put(i, t.topic_id, "extract", e);
    }
  });
  std::vector<OrderedJson> docs;
  std::size_t with_answers = 0;
  for (const auto& r : results) {
    if (!r) continue;
    if (!r->answers.empty()) ++with_answers;
    docs.push_back(stages::extraction_to_json(*r));
  }
  write_jsonl(o.out, docs);
  m.output(o.out);
  write_quarantine(o.quarantine, q, m);
  llm->flush_recording();
  emit_summary(out, {{"input_topics", topics.size()}, {"with_answers", with_answers},
                     {"no_answers", docs.size() - with_answers},
                     {"quarantined", topics.size() - docs.size()}});
}

struct RewriteOpts {
  std::string topics, extractions, out, quarantine;
  std::vector<std::string> rewriters;
};

void cmd_rewrite(const RewriteOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto topics = load_topics(o.topics, env.workers);
  m.input(o.topics);
  m.input(o.extractions);
  std::map<std::string, const ingest::Topic*> by_id;
  for (const auto& t : topics) by_id[t.topic_id] = &t;
  std::vector<stages::ExtractionResult> extractions;
  for (const auto& j : read_jsonl(o.extractions)) {
    auto e = stages::extraction_from_json(j);
    if (!by_id.count(e.topic_id)) throw InputError("extraction for unknown topic " + e.topic_id);
    if (!e.answers.empty()) extractions.push_back(std::move(e));
  }
  auto llm = make_llm(env, o.rewriters);
  m.arg("rewriters", [&] {
    std::vector<std::string> ids;
    for (const auto& r : llm->ctx.rewriters) ids.push_back(r.model_id);
    return ids;
  }());
  std::vector<std::optional<stages::QaPair>> pairs(extractions.size());
  StageQuarantine q(extractions.size());
  parallel_for(extractions.size(), env.workers, [&](std::size_t i) {
    const auto& e = extractions[i];
    const auto& topic = *by_id.at(e.topic_id);
    try {
      stages::QaPair p;
      p.topic_id = e.topic_id;
      p.question_text = e.question_text;
      p.first_posted_at = topic.first_posted_at;
      p.category = topic.category_tag;
      p.difficulty = ingest::derive_difficulty(topic, *llm->table);
      for (const auto& ref : e.answers) {
        const auto* post = topic.find_post(ref.post_number);
        if (!post) throw InputError(fmt::format("topic {} has no post {}", e.topic_id, ref.post_number));
        stages::Solution sol{ref.post_number, post->author, post->body, {}};
        for (const auto& rw : llm->ctx.rewriters) {
          auto tag = stages::rewrite_tag(rw.model_id, e.topic_id, ref.post_number);
          sol.rewrites.push_back(retry_once(tag, [&](const std::string& t) {
            return stages::rewrite(p.question_text, post->body, e.topic_id, ref.post_number, rw,
                                   llm->ctx, t);
          }));
        }
        p.solutions.push_back(std::move(sol));
      }
      pairs[i] = std::move(p);
    } catch (const Error& err) {
      q.put(i, e.topic_id, "rewrite", err);
    }
  });
  std::vector<stages::QaPair> kept;
  for (auto& p : pairs) {
    if (p) kept.push_back(std::move(*p));
  }
  write_file(o.out, stages::serialize_qa_pairs(kept));
  m.output(o.out);
  write_quarantine(o.quarantine, q, m);
  llm->flush_recording();
  emit_summary(out, {{"input_topics", extractions.size()}, {"qa_pairs", kept.size()},
                     {"quarantined", extractions.size() - kept.size()}});
}

struct PipelineOpts {
  std::string topics, out, funnel, quarantine, mode = "train";
};

void cmd_pipeline(const PipelineOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto topics = load_topics(o.topics, env.workers);
  m.input(o.topics);
  m.arg("mode", o.mode);
  auto llm = make_llm(env, {});
  auto result = stages::run_pipeline(topics, llm->ctx, o.mode == "eval", env.workers);
  write_file(o.out, stages::serialize_qa_pairs(result.pairs));
  m.output(o.out);
  if (!o.funnel.empty()) {
    write_file(o.funnel, dump_pretty(result.counters.to_json()));
    m.output(o.funnel);
  }
  if (!o.quarantine.empty()) {
    std::vector<OrderedJson> docs;
    for (const auto& q : result.quarantined) docs.push_back(stages::quarantine_to_json(q));
    write_jsonl(o.quarantine, docs);
    m.output(o.quarantine);
  }
  llm->flush_recording();
  emit_summary(out, result.counters.to_json());
}

// ---- decontamination ----------------------------------------------------

struct BuildIndexOpts {
  int n = 0;
  std::string purpose = "train";
  std::string out, fields;
  std::vector<std::string> corpora;
};

void cmd_decontam_build(const BuildIndexOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  // Training data is screened with train_n windows, bench candidates with eval_n.
  int n = o.n;
  if (n <= 0) {
    n = static_cast<int>(o.purpose == "eval" ? env.cfg.get_int("eval_n", 8)
                                             : env.cfg.get_int("train_n", 10));
  }
  auto fields = fields_setting(env, o.fields, "decontam.fields");
  std::vector<decontam::TokenStream> docs;
  std::vector<std::string> ids;
  for (const auto& c : o.corpora) {
    m.input(c);
    auto corpus = decontam::load_corpus(c, fields);
    auto streams = decontam::tokenize_all(corpus, env.workers);
    docs.insert(docs.end(), std::make_move_iterator(streams.begin()),
                std::make_move_iterator(streams.end()));
    ids.push_back(fs::path(c).filename().string());
  }
  auto index = decontam::NgramIndex::build(docs, n, ids, env.workers);
  index.save(o.out);
  m.arg("n", n);
  m.output(o.out);
  emit_summary(out, {{"n", n}, {"documents", docs.size()}, {"fingerprints", index.size()}});
}

struct FlagOpts {
  std::string index, report, fields;
  unsigned bucket_months = 0;
  std::vector<std::string> queries;
};

void cmd_decontam_flag(const FlagOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto index = decontam::NgramIndex::load(o.index);
  m.input(o.index);
  auto fields = fields_setting(env, o.fields, "decontam.fields");
  unsigned months = o.bucket_months > 0
                        ? o.bucket_months
                        : static_cast<unsigned>(env.cfg.get_int("decontam.bucket_months", 4));
  std::vector<decontam::CorpusDoc> docs;
  for (const auto& q : o.queries) {
    m.input(q);
    auto corpus = decontam::load_corpus(q, fields);
    docs.insert(docs.end(), corpus.begin(), corpus.end());
  }
  auto streams = decontam::tokenize_all(docs, env.workers);
  std::vector<std::optional<Timestamp>> ts;
  for (const auto& d : docs) ts.push_back(d.ts);
  auto report = decontam::flag_contaminated(streams, index, env.workers, ts, months);
  write_file(o.report, dump_pretty(decontam::report_to_json(report)));
  m.output(o.report);
  emit_summary(out, {{"n", report.n}, {"total_docs", report.total_docs},
                     {"flagged", report.flagged.size()}, {"overlap_pct", round2(report.overlap_pct)}});
}

struct OverlapOpts {
  int n = 0;
  std::string out, fields;
  std::vector<std::string> corpora;
};

void cmd_decontam_overlap(const OverlapOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  int n = o.n > 0 ? o.n : static_cast<int>(env.cfg.get_int("train_n", 10));
  auto fields = fields_setting(env, o.fields, "decontam.fields");
  std::vector<decontam::NamedCorpus> corpora;
  for (const auto& c : o.corpora) {
    m.input(c);
    auto docs = decontam::load_corpus(c, fields);
    corpora.push_back({fs::path(c).filename().string(), decontam::tokenize_all(docs, env.workers)});
  }
  auto matrix = decontam::pairwise_overlap(corpora, n, env.workers);
  OrderedJson names = OrderedJson::array();
  for (const auto& c : corpora) names.push_back(c.name);
  OrderedJson rows = OrderedJson::array();
  for (const auto& r : matrix) {
    OrderedJson row = OrderedJson::array();
    for (double v : r) row.push_back(round2(v));
    rows.push_back(row);
  }
  OrderedJson doc{{"n", n}, {"corpora", names}, {"overlap_pct", rows}};
  write_file(o.out, dump_pretty(doc));
  m.output(o.out);
  emit_summary(out, doc);
}

// ---- bench / sft ----------------------------------------------------------

struct BenchOpts {
  std::string pairs, from, to, out, funnel, removed;
  std::vector<std::string> indices;
};

void cmd_build_bench(const BenchOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto pairs = stages::load_qa_pairs(o.pairs);
  m.input(o.pairs);
  std::vector<decontam::NgramIndex> indices;
  for (const auto& p : o.indices) {
    indices.push_back(decontam::NgramIndex::load(p));
    m.input(p);
  }
  bench::BenchOptions opt;
  opt.from = required_instant(env, o.from, "eval.from");
  opt.to = required_instant(env, o.to, "eval.to");
  auto rewriters = env.cfg.get_list("rewriters", {"qwen2.5-72b-instruct", "llama-3.1-70b-instruct"});
  if (rewriters.size() < 2) throw ConfigError("build-bench needs two rewriters in 'rewriters'");
  opt.reference_rewriter = rewriters[0];
  opt.check_rewriter = rewriters[1];
  opt.heuristics.proof_markers = env.cfg.get_list("proof_markers", opt.heuristics.proof_markers);
  opt.workers = env.workers;
  auto input_pairs = pairs.size();
  std::erase_if(pairs, [&](const stages::QaPair& p) {
    return p.first_posted_at < opt.from || p.first_posted_at >= opt.to;
  });
  auto result = bench::build_bench(pairs, indices, opt);
  write_file(o.out, bench::serialize_bench(result.header, result.items));
  m.arg("from", format_rfc3339(opt.from));
  m.arg("to", format_rfc3339(opt.to));
  m.output(o.out);
  OrderedJson funnel;
  funnel["input_pairs"] = input_pairs;
  funnel["outside_window"] = input_pairs - pairs.size();
  funnel["stages"] = result.funnel.to_json();
  funnel["bench_items"] = result.items.size();
  funnel["multi_answer"] = std::count_if(result.items.begin(), result.items.end(),
                                         [](const bench::BenchItem& b) { return b.multi_answer; });
  if (!o.funnel.empty()) {
    write_file(o.funnel, dump_pretty(funnel));
    m.output(o.funnel);
  }
  if (!o.removed.empty()) {
    std::vector<OrderedJson> docs;
    for (const auto& r : result.removed) {
      docs.push_back({{"topic_id", r.topic_id}, {"stage", r.stage}, {"reason", r.reason}});
    }
    write_jsonl(o.removed, docs);
    m.output(o.removed);
  }
  emit_summary(out, funnel);
}

struct SftOpts {
  std::string pairs, index, cutoff, template_name, template_pattern, fields, rewriter, out, report;
};

void cmd_export_sft(const SftOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto pairs = stages::load_qa_pairs(o.pairs);
  m.input(o.pairs);
  std::optional<decontam::NgramIndex> index;
  if (!o.index.empty()) {
    index = decontam::NgramIndex::load(o.index);
    m.input(o.index);
  }
  sft::ExportOptions opt;
  opt.cutoff = required_instant(env, o.cutoff, "train.cutoff");
  opt.fields = fields_setting(env, o.fields, "sft.fields");
  opt.workers = env.workers;
  if (!o.template_pattern.empty()) {
    opt.chat_template = sft::ChatTemplate("custom", o.template_pattern);
  } else if (auto name = o.template_name.empty() ? env.cfg.get("sft.template")
                                                 : std::optional<std::string>(o.template_name)) {
    opt.chat_template = sft::ChatTemplate::builtin(*name);
  }
  if (!o.rewriter.empty()) opt.rewriter = o.rewriter;
  auto result = sft::export_sft(pairs, index ? &*index : nullptr, opt);
  std::vector<OrderedJson> docs;
  for (const auto& r : result.records) docs.push_back(sft::record_to_json(r));
  write_jsonl(o.out, docs);
  m.arg("cutoff", format_rfc3339(opt.cutoff));
  m.output(o.out);
  if (!o.report.empty()) {
    write_file(o.report, dump_pretty(result.report.to_json()));
    m.output(o.report);
  }
  emit_summary(out, result.report.to_json());
}

// ---- evaluation -----------------------------------------------------------

std::vector<bench::BenchItem> load_bench_items(const std::string& path, Manifest& m) {
  m.input(path);
  return bench::load_bench(path).items;
}

std::string reports_doc(const std::vector<eval::MetricsReport>& reports) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return dump_pretty(OrderedJson{{"reports", arr}});
}

struct GradeOpts {
  std::string bench, predictions, graded, reports;
  std::vector<std::string> models;
};

void cmd_grade(const GradeOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto items = load_bench_items(o.bench, m);
  std::map<std::string, std::vector<eval::PredictionRecord>> preds;
  if (!o.predictions.empty()) {
    preds = eval::load_predictions(o.predictions);
    m.input(o.predictions);
  }
  for (const auto& model : o.models) preds[model];
  std::vector<OrderedJson> graded_docs;
  std::vector<eval::MetricsReport> reports;
  for (const auto& [model, records] : preds) {
    auto graded = eval::grade_model(model, records, items, env.workers);
    for (const auto& g : graded) graded_docs.push_back(eval::graded_to_json(g));
    reports.push_back(eval::aggregate(model, graded, items));
  }
  write_jsonl(o.graded, graded_docs);
  m.output(o.graded);
  if (!o.reports.empty()) {
    write_file(o.reports, reports_doc(reports));
    m.output(o.reports);
  }
  OrderedJson summary = OrderedJson::array();
  for (const auto& r : reports) {
    summary.push_back({{"model", r.model_id}, {"overall_acc", round2(r.overall_acc)},
                       {"correct", r.correct}, {"total", r.total}, {"missing", r.missing}});
  }
  emit_summary(out, {{"models", summary}});
}

struct ReportOpts {
  std::string bench, graded, out;
};

void cmd_report(const ReportOpts& o, const Env&, std::ostream& out, Manifest& m) {
  auto items = load_bench_items(o.bench, m);
  m.input(o.graded);
  std::map<std::string, std::vector<eval::GradedRecord>> by_model;
  for (const auto& j : read_jsonl(o.graded)) {
    auto g = eval::graded_from_json(j);
    by_model[g.prediction.model_id].push_back(std::move(g));
  }
  std::vector<eval::MetricsReport> reports;
  for (const auto& [model, graded] : by_model) reports.push_back(eval::aggregate(model, graded, items));
  write_file(o.out, reports_doc(reports));
  m.output(o.out);
  OrderedJson summary = OrderedJson::array();
  for (const auto& r : reports) {
    summary.push_back({{"model", r.model_id}, {"overall_acc", round2(r.overall_acc)},
                       {"drop_pct", r.drop_pct ? OrderedJson(*r.drop_pct) : OrderedJson(nullptr)}});
  }
  emit_summary(out, {{"models", summary}});
}

struct LeaderboardOpts {
  std::vector<std::string> reports;
  std::string out_dir;
};

void cmd_leaderboard(const LeaderboardOpts& o, const Env&, std::ostream& out, Manifest& m) {
  std::vector<eval::MetricsReport> reports;
  for (const auto& path : o.reports) {
    m.input(path);
    auto doc = read_json(path);
    const auto& arr = doc.contains("reports") ? doc.at("reports") : doc;
    if (!arr.is_array()) throw InputError(path + " holds no list of reports");
    for (const auto& r : arr) reports.push_back(eval::MetricsReport::from_json(r));
  }
  auto files = eval::emit_leaderboard(reports, o.out_dir);
  m.set_default_path(fs::path(o.out_dir) / "manifest.json");
  m.output(files.json);
  m.output(files.html);
  for (const auto& t : files.trends) m.output(t);
  OrderedJson order = OrderedJson::array();
  for (const auto& r : eval::sort_for_leaderboard(reports)) order.push_back(r.model_id);
  emit_summary(out, {{"leaderboard", order}});
}

// ---- annotation -------------------------------------------------------------

struct AnnotateOpts {
  std::string bench, topics, log, host, ui_dir, tasks_out, cors_origin;
  double fraction = 0.0;
  int port = -1;
  std::vector<std::string> annotators;
  bool dry_run = false;
};

void cmd_annotate_serve(const AnnotateOpts& o, const Env& env, std::ostream& out, Manifest& m) {
  auto items = load_bench_items(o.bench, m);
  std::vector<ingest::Topic> topics;
  if (!o.topics.empty()) {
    topics = load_topics(o.topics, env.workers);
    m.input(o.topics);
  }
  double fraction = o.fraction > 0 ? o.fraction : env.cfg.get_double("annotate.fraction", 0.1);
  auto annotators = o.annotators.empty() ? env.cfg.get_list("annotate.annotators") : o.annotators;
  std::vector<std::string> ids;
  for (const auto& item : items) ids.push_back(item.question_id);
  auto sample = annotate::sample_subset(ids, fraction, env.seed);
  auto tasks = annotate::assign(sample, annotators);
  annotate::populate(tasks, items, topics);
  m.arg("fraction", fraction);
  m.arg("sampler", annotate::kSamplerName);
  m.arg("annotators", annotators);
  if (!o.tasks_out.empty()) {
    std::vector<OrderedJson> docs;
    for (const auto& t : tasks) docs.push_back(annotate::task_to_json(t));
    write_jsonl(o.tasks_out, docs);
    m.output(o.tasks_out);
  }
  emit_summary(out, {{"sampled", sample.size()}, {"tasks", tasks.size()}});
  out.flush();
  if (o.dry_run) return;
  if (o.log.empty()) throw ArgumentError("annotate-serve needs --log for the verdict store");
  annotate::VerdictStore store(o.log,
                               static_cast<std::size_t>(env.cfg.get_int("annotate.compact_every", 1000)));
  annotate::AnnotateService service(std::move(tasks), store);
  annotate::HttpServer server(service,
                              o.cors_origin.empty() ? env.cfg.get_or("annotate.cors_origin", "*")
                                                    : o.cors_origin,
                              o.ui_dir);
  auto host = o.host.empty() ? env.cfg.get_or("annotate.host", "127.0.0.1") : o.host;
  int port = o.port >= 0 ? o.port : static_cast<int>(env.cfg.get_int("annotate.port", 8080));
  m.write({});
  server.listen(host, port);
}

// ---- stats ------------------------------------------------------------------

struct StatsOpts {
  std::string pairs, bench, out;
};

void cmd_stats(const StatsOpts& o, const Env&, std::ostream& out, Manifest& m) {
  if (o.pairs.empty() == o.bench.empty()) throw ArgumentError("stats needs exactly one of --pairs, --bench");
  bench::StatsReport report;
  if (!o.pairs.empty()) {
    m.input(o.pairs);
    auto pairs = stages::load_qa_pairs(o.pairs);
    report = bench::dataset_stats(pairs);
  } else {
    auto items = load_bench_items(o.bench, m);
    report = bench::dataset_stats(items);
  }
  auto doc = report.to_json();
  if (!o.out.empty()) {
    write_file(o.out, dump_pretty(doc));
    m.output(o.out);
  }
  emit_summary(out, doc);
}

// ---- wiring -----------------------------------------------------------------

void add_globals(CLI::App& app, Globals& g) {
  app.add_option("--config", g.config, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--workers", g.workers, "Worker threads (default: config or hardware)");
  app.add_option("--seed", g.seed, "Seed for sampling and backoff jitter");
  app.add_option("--set", g.sets, "Override a config key (key=value), repeatable")
      ->allow_extra_args(false);
  app.add_option("--manifest", g.manifest, "Manifest path (default: next to the main output)");
}

void add_build_index(CLI::App* sub, BuildIndexOpts& o) {
  sub->add_option("--n", o.n, "Window length in tokens (default: train_n or eval_n by --purpose)");
  sub->add_option("--purpose", o.purpose, "train: index for screening training data; eval: for bench candidates")
      ->check(CLI::IsMember({"train", "eval"}));
  sub->add_option("--out", o.out, "Index file")->required();
  sub->add_option("--fields", o.fields, "question | question+solution");
  sub->add_option("corpora", o.corpora, "Reference corpora (JSONL)")->required()->check(CLI::ExistingFile);
}

void add_flag(CLI::App* sub, FlagOpts& o) {
  sub->add_option("--index", o.index, "Index file")->required()->check(CLI::ExistingFile);
  sub->add_option("--report", o.report, "Report JSON")->required();
  sub->add_option("--fields", o.fields, "question | question+solution");
  sub->add_option("--bucket-months", o.bucket_months, "Months per time bucket");
  sub->add_option("queries", o.queries, "Query corpora (JSONL)")->required()->check(CLI::ExistingFile);
}

struct Dispatch {
  std::vector<std::pair<CLI::App*, std::function<void(const Env&, std::ostream&)>>> handlers;
  Globals globals;
  std::vector<std::string> argv;

  template <typename Opts, typename Fn>
  void on(CLI::App* sub, Opts& opts, Fn fn) {
    handlers.emplace_back(sub, [this, sub, &opts, fn](const Env& env, std::ostream& out) {
      Manifest m(sub->get_name(), env);
      m.arg("argv", argv);
      fn(opts, env, out, m);
      m.write(globals.manifest);
    });
  }
};

int finish(CLI::App& app, Dispatch& d, int argc, char** argv, std::ostream& out,
           std::ostream& err) {
  std::string command = "livemath";
  d.argv.assign(argv + 1, argv + argc);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << OrderedJson{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
  try {
    for (auto& [sub, handler] : d.handlers) {
      if (!sub->parsed()) continue;
      command = sub->get_name();
      Env env = resolve(d.globals);
      handler(env, out);
      return 0;
    }
    err << OrderedJson{{"error", "usage"}, {"message", "no subcommand given"}}.dump() << '\n';
    return 2;
  } catch (const Error& e) {
    err << OrderedJson{{"error", e.kind()}, {"command", command}, {"message", e.what()}}.dump()
        << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << OrderedJson{{"error", "internal"}, {"command", command}, {"message", e.what()}}.dump()
        << '\n';
    return 1;
  }
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forum-to-benchmark math data pipeline", "livemath"};
  app.set_version_flag("--version", LIVEMATH_VERSION);
  app.require_subcommand(1);
  Dispatch d;
  add_globals(app, d.globals);

  IngestOpts ingest_o;
  auto* ingest = app.add_subcommand("ingest", "Parse a topic dump into validated topics");
  ingest->add_option("--dump", ingest_o.dump, "Raw topic dump (JSONL)")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", ingest_o.out, "Validated topics (JSONL)")->required();
  ingest->add_option("--rejects", ingest_o.rejects, "Reject report (JSONL)");
  ingest->add_option("--from", ingest_o.from, "Keep topics first posted at or after this instant");
  ingest->add_option("--to", ingest_o.to, "Keep topics first posted before this instant");
  d.on(ingest, ingest_o, cmd_ingest);

  DetectOpts detect_o;
  auto* detect = app.add_subcommand("detect", "Classify topics as math problems");
  detect->add_option("--topics", detect_o.topics)->required()->check(CLI::ExistingFile);
  detect->add_option("--out", detect_o.out, "Verdicts (JSONL)")->required();
  detect->add_option("--quarantine", detect_o.quarantine, "Failed topics (JSONL)");
  d.on(detect, detect_o, cmd_detect);

  ExtractOpts extract_o;
  auto* extract = app.add_subcommand("extract", "Find the answer posts of each topic");
  extract->add_option("--topics", extract_o.topics)->required()->check(CLI::ExistingFile);
  extract->add_option("--verdicts", extract_o.verdicts, "Only topics detected as math")
      ->check(CLI::ExistingFile);
  extract->add_option("--out", extract_o.out, "Extractions (JSONL)")->required();
  extract->add_option("--quarantine", extract_o.quarantine, "Failed topics (JSONL)");
  d.on(extract, extract_o, cmd_extract);

  RewriteOpts rewrite_o;
  auto* rewrite = app.add_subcommand("rewrite", "Rewrite answer posts into step-by-step solutions");
  rewrite->add_option("--topics", rewrite_o.topics)->required()->check(CLI::ExistingFile);
  rewrite->add_option("--extractions", rewrite_o.extractions)->required()->check(CLI::ExistingFile);
  rewrite->add_option("--out", rewrite_o.out, "QA pairs (JSONL)")->required();
  rewrite->add_option("--rewriters", rewrite_o.rewriters, "Rewriter model ids (default: config)")
      ->delimiter(',');
  rewrite->add_option("--quarantine", rewrite_o.quarantine, "Failed topics (JSONL)");
  d.on(rewrite, rewrite_o, cmd_rewrite);

  PipelineOpts pipeline_o;
  auto* pipeline = app.add_subcommand("pipeline", "Detect, extract and rewrite in one pass");
  pipeline->add_option("--topics", pipeline_o.topics)->required()->check(CLI::ExistingFile);
  pipeline->add_option("--out", pipeline_o.out, "QA pairs (JSONL)")->required();
  pipeline->add_option("--funnel", pipeline_o.funnel, "Funnel counters (JSON)");
  pipeline->add_option("--quarantine", pipeline_o.quarantine, "Failed topics (JSONL)");
  pipeline->add_option("--mode", pipeline_o.mode, "train: first rewriter; eval: all rewriters")
      ->check(CLI::IsMember({"train", "eval"}));
  d.on(pipeline, pipeline_o, cmd_pipeline);

  BuildIndexOpts build_o;
  auto* build = app.add_subcommand("decontam-build", "Build an n-gram index over corpora");
  add_build_index(build, build_o);
  d.on(build, build_o, cmd_decontam_build);

  FlagOpts flag_o;
  auto* flag = app.add_subcommand("decontam-flag", "Flag query documents found in an index");
  add_flag(flag, flag_o);
  d.on(flag, flag_o, cmd_decontam_flag);

  OverlapOpts overlap_o;
  auto* overlap = app.add_subcommand("decontam-overlap", "Pairwise overlap matrix of corpora");
  overlap->add_option("--n", overlap_o.n, "Window length in tokens (default: train_n)");
  overlap->add_option("--out", overlap_o.out, "Matrix JSON")->required();
  overlap->add_option("--fields", overlap_o.fields, "question | question+solution");
  overlap->add_option("corpora", overlap_o.corpora)->required()->check(CLI::ExistingFile);
  d.on(overlap, overlap_o, cmd_decontam_overlap);

  BenchOpts bench_o;
  auto* bench = app.add_subcommand("build-bench", "Build the evaluation benchmark");
  bench->add_option("--pairs", bench_o.pairs, "QA pairs with two rewrites")->required()->check(CLI::ExistingFile);
  bench->add_option("--index", bench_o.indices, "Training-set n-gram index, repeatable")
      ->allow_extra_args(false)
      ->check(CLI::ExistingFile);
  bench->add_option("--from", bench_o.from, "Window start (default: eval.from)");
  bench->add_option("--to", bench_o.to, "Window end, exclusive (default: eval.to)");
  bench->add_option("--out", bench_o.out, "Bench (JSONL)")->required();
  bench->add_option("--funnel", bench_o.funnel, "Funnel report (JSON)");
  bench->add_option("--removed", bench_o.removed, "Removed pairs with reasons (JSONL)");
  d.on(bench, bench_o, cmd_build_bench);

  SftOpts sft_o;
  auto* sft = app.add_subcommand("export-sft", "Export instruction-tuning records");
  sft->add_option("--pairs", sft_o.pairs)->required()->check(CLI::ExistingFile);
  sft->add_option("--index", sft_o.index, "Test-set n-gram index")->check(CLI::ExistingFile);
  sft->add_option("--cutoff", sft_o.cutoff, "Training cutoff, exclusive (default: train.cutoff)");
  sft->add_option("--template", sft_o.template_name, "Built-in chat template name");
  sft->add_option("--template-pattern", sft_o.template_pattern,
                  "Chat template with {question} and {solution}");
  sft->add_option("--fields", sft_o.fields, "question | question+solution");
  sft->add_option("--rewriter", sft_o.rewriter, "Only export this rewriter's solutions");
  sft->add_option("--out", sft_o.out, "Records (JSONL)")->required();
  sft->add_option("--report", sft_o.report, "Export report (JSON)");
  d.on(sft, sft_o, cmd_export_sft);

  GradeOpts grade_o;
  auto* grade = app.add_subcommand("grade", "Grade model predictions against a bench");
  grade->add_option("--bench", grade_o.bench)->required()->check(CLI::ExistingFile);
  grade->add_option("--predictions", grade_o.predictions, "Predictions (JSONL)")
      ->check(CLI::ExistingFile);
  grade->add_option("--model", grade_o.models, "Model to report even without predictions")
      ->allow_extra_args(false);
  grade->add_option("--graded", grade_o.graded, "Graded records (JSONL)")->required();
  grade->add_option("--reports", grade_o.reports, "Metrics reports (JSON)");
  d.on(grade, grade_o, cmd_grade);

  ReportOpts report_o;
  auto* report = app.add_subcommand("report", "Aggregate graded records into metrics");
  report->add_option("--bench", report_o.bench)->required()->check(CLI::ExistingFile);
  report->add_option("--graded", report_o.graded)->required()->check(CLI::ExistingFile);
  report->add_option("--out", report_o.out, "Metrics reports (JSON)")->required();
  d.on(report, report_o, cmd_report);

  LeaderboardOpts lb_o;
  auto* lb = app.add_subcommand("leaderboard", "Write leaderboard JSON, HTML and trend CSVs");
  lb->add_option("--reports", lb_o.reports, "Metrics reports (JSON), repeatable")
      ->allow_extra_args(false)
      ->required()->check(CLI::ExistingFile);
  lb->add_option("--out-dir", lb_o.out_dir)->required();
  d.on(lb, lb_o, cmd_leaderboard);

  AnnotateOpts ann_o;
  auto* ann = app.add_subcommand("annotate-serve", "Serve the annotation API");
  ann->add_option("--bench", ann_o.bench)->required()->check(CLI::ExistingFile);
  ann->add_option("--topics", ann_o.topics, "Topic dump for raw posts")->check(CLI::ExistingFile);
  ann->add_option("--fraction", ann_o.fraction, "Share of the bench to sample");
  ann->add_option("--annotators", ann_o.annotators, "Annotator ids")->delimiter(',');
  ann->add_option("--log", ann_o.log, "Verdict log (JSONL)");
  ann->add_option("--host", ann_o.host);
  ann->add_option("--port", ann_o.port);
  ann->add_option("--cors-origin", ann_o.cors_origin);
  ann->add_option("--ui-dir", ann_o.ui_dir, "Static UI bundle served at /")->check(CLI::ExistingDirectory);
  ann->add_option("--tasks-out", ann_o.tasks_out, "Write the assigned tasks (JSONL)");
  ann->add_flag("--dry-run", ann_o.dry_run, "Sample and assign, then exit");
  d.on(ann, ann_o, cmd_annotate_serve);

  StatsOpts stats_o;
  auto* stats = app.add_subcommand("stats", "Dataset statistics of QA pairs or a bench");
  stats->add_option("--pairs", stats_o.pairs)->check(CLI::ExistingFile);
  stats->add_option("--bench", stats_o.bench)->check(CLI::ExistingFile);
  stats->add_option("--out", stats_o.out, "Statistics (JSON)");
  d.on(stats, stats_o, cmd_stats);

  return finish(app, d, argc, argv, out, err);
}

int run_decontam(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact n-gram decontamination", "decontam"};
  app.set_version_flag("--version", LIVEMATH_VERSION);
  app.require_subcommand(1);
  Dispatch d;
  add_globals(app, d.globals);

  BuildIndexOpts build_o;
  auto* build = app.add_subcommand("build", "Build an n-gram index over corpora");
  add_build_index(build, build_o);
  d.on(build, build_o, cmd_decontam_build);

  FlagOpts flag_o;
  auto* flag = app.add_subcommand("flag", "Flag query documents found in an index");
  add_flag(flag, flag_o);
  d.on(flag, flag_o, cmd_decontam_flag);

  return finish(app, d, argc, argv, out, err);
}

}  // namespace livemath::cli
