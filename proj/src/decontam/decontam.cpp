#include "livemath/decontam.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/parallel.hpp"

namespace livemath::decontam {

namespace {

constexpr std::string_view kMagic = "LMNGIDX1";
constexpr std::uint32_t kFormatVersion = 1;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xFF);
}

void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (bytes_.size() - pos_ < n) throw InputError("n-gram index is truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint64_t uint(int width) {
    auto s = take(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = width - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[i]);
    return v;
  }
  std::string str() { return std::string(take(uint(4))); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::optional<std::string> string_field(const Json& j, std::initializer_list<const char*> keys) {
  for (const char* k : keys) {
    auto it = j.find(k);
    if (it != j.end() && it->is_string()) return it->get<std::string>();
  }
  return std::nullopt;
}

// Raw and rewritten texts of a "solutions" array of strings or QA-pair objects.
void append_solutions(const Json& solutions, std::string& text) {
  for (const auto& s : solutions) {
    if (s.is_string()) {
      text += '\n' + s.get<std::string>();
      continue;
    }
    if (!s.is_object()) continue;
    if (auto raw = string_field(s, {"raw_text", "text", "solution"})) text += '\n' + *raw;
    if (auto it = s.find("rewrites"); it != s.end() && it->is_array()) {
      for (const auto& r : *it) {
        if (auto t = string_field(r, {"text"})) text += '\n' + *t;
      }
    }
  }
}

}  // namespace

TokenStream tokenize(std::string_view text, std::string doc_id) {
  TokenStream out{std::move(doc_id), {}};
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view word = text.substr(i, j - i);
    std::size_t b = word.find_first_not_of(kEdgePunctuation);
    if (b != std::string_view::npos) {
      std::size_t e = word.find_last_not_of(kEdgePunctuation);
      std::string tok(word.substr(b, e - b + 1));
      for (char& c : tok) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
      out.tokens.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

Fingerprint window_fingerprint(std::span<const std::string> tokens, std::size_t offset,
                               std::size_t n) {
  std::string joined;
  for (std::size_t k = 0; k < n; ++k) {
    if (k) joined += '\x1f';
    joined += tokens[offset + k];
  }
  return fingerprint128(joined);
}

NgramIndex NgramIndex::build(std::span<const TokenStream> docs, int n,
                             std::vector<std::string> corpus_ids, unsigned workers) {
  if (n < 1) throw ArgumentError(fmt::format("n-gram length must be >= 1, got {}", n));
  std::vector<std::vector<Fingerprint>> shards(docs.size());
  auto un = static_cast<std::size_t>(n);
  parallel_for(docs.size(), workers, [&](std::size_t d) {
    const auto& toks = docs[d].tokens;
    if (toks.size() < un) return;
    auto& shard = shards[d];
    shard.reserve(toks.size() - un + 1);
    for (std::size_t off = 0; off + un <= toks.size(); ++off) {
      shard.push_back(window_fingerprint(toks, off, un));
    }
  });
  NgramIndex index;
  index.n_ = n;
  index.corpus_ids_ = std::move(corpus_ids);
  std::size_t total = 0;
  for (const auto& s : shards) total += s.size();
  index.fingerprints_.reserve(total);
  for (auto& s : shards) index.fingerprints_.insert(index.fingerprints_.end(), s.begin(), s.end());
  std::sort(index.fingerprints_.begin(), index.fingerprints_.end());
  index.fingerprints_.erase(std::unique(index.fingerprints_.begin(), index.fingerprints_.end()),
                            index.fingerprints_.end());
  return index;
}

bool NgramIndex::contains(const Fingerprint& fp) const {
  return std::binary_search(fingerprints_.begin(), fingerprints_.end(), fp);
}

std::string NgramIndex::serialize() const {
  std::string out(kMagic);
  put_u32(out, kFormatVersion);
  put_str(out, tokenizer_version_);
  put_u32(out, static_cast<std::uint32_t>(n_));
  put_u32(out, static_cast<std::uint32_t>(corpus_ids_.size()));
  for (const auto& id : corpus_ids_) put_str(out, id);
  put_u64(out, fingerprints_.size());
  out.reserve(out.size() + fingerprints_.size() * 16);
  for (const auto& fp : fingerprints_) {
    put_u64(out, fp.hi);
    put_u64(out, fp.lo);
  }
  return out;
}

NgramIndex NgramIndex::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw InputError("not an n-gram index (bad magic)");
  auto version = r.uint(4);
  if (version != kFormatVersion) {
    throw InputError(fmt::format("unsupported n-gram index format version {}", version));
  }
  NgramIndex index;
  index.tokenizer_version_ = r.str();
  index.n_ = static_cast<int>(r.uint(4));
  auto ids = r.uint(4);
  for (std::uint64_t i = 0; i < ids; ++i) index.corpus_ids_.push_back(r.str());
  auto count = r.uint(8);
  index.fingerprints_.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Fingerprint fp;
    fp.hi = r.uint(8);
    fp.lo = r.uint(8);
    index.fingerprints_.push_back(fp);
  }
  if (!r.done()) throw InputError("trailing bytes after n-gram index");
  if (!std::is_sorted(index.fingerprints_.begin(), index.fingerprints_.end())) {
    throw InputError("n-gram index fingerprints are not sorted");
  }
  return index;
}

void NgramIndex::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

NgramIndex NgramIndex::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

std::optional<std::size_t> first_match(const TokenStream& doc, const NgramIndex& index) {
  auto n = static_cast<std::size_t>(index.n());
  for (std::size_t off = 0; off + n <= doc.tokens.size(); ++off) {
    if (index.contains(window_fingerprint(doc.tokens, off, n))) return off;
  }
  return std::nullopt;
}

std::string time_bucket(Timestamp ts, unsigned span_months) {
  if (span_months == 0 || 12 % span_months != 0) {
    throw ArgumentError(fmt::format("bucket span must divide 12, got {}", span_months));
  }
  unsigned m = month_of(ts);
  unsigned start = (m - 1) / span_months * span_months + 1;
  int yy = ((year_of(ts) % 100) + 100) % 100;
  if (span_months == 1) return fmt::format("{:02}/{:02}", yy, start);
  return fmt::format("{:02}/{:02}-{:02}", yy, start, start + span_months - 1);
}

OverlapReport flag_contaminated(std::span<const TokenStream> query, const NgramIndex& index,
                                unsigned workers,
                                std::span<const std::optional<Timestamp>> timestamps,
                                unsigned bucket_months) {
  if (index.tokenizer_version() != kTokenizerVersion) {
    throw ConfigError(fmt::format("index tokenizer '{}' does not match '{}'",
                                  index.tokenizer_version(), kTokenizerVersion));
  }
  if (!timestamps.empty() && timestamps.size() != query.size()) {
    throw ArgumentError("timestamps must be parallel to the query documents");
  }
  std::vector<std::optional<std::size_t>> hits(query.size());
  parallel_for(query.size(), workers, [&](std::size_t i) { hits[i] = first_match(query[i], index); });

  OverlapReport report;
  report.n = index.n();
  report.total_docs = query.size();
  std::map<std::string, BucketCount> buckets;
  for (std::size_t i = 0; i < query.size(); ++i) {
    if (hits[i]) report.flagged.push_back({query[i].doc_id, *hits[i]});
    if (timestamps.empty()) continue;
    std::string label = timestamps[i] ? time_bucket(*timestamps[i], bucket_months) : "unknown";
    auto& b = buckets[label];
    b.bucket = label;
    ++b.total;
    if (hits[i]) ++b.flagged;
  }
  report.overlap_pct =
      query.empty() ? 0.0 : 100.0 * static_cast<double>(report.flagged.size()) /
                                static_cast<double>(query.size());
  // Labels sort chronologically; "unknown" goes last.
  for (auto& [label, b] : buckets) {
    if (label != "unknown") report.buckets.push_back(b);
  }
  if (auto it = buckets.find("unknown"); it != buckets.end()) report.buckets.push_back(it->second);
  return report;
}

OrderedJson report_to_json(const OverlapReport& report) {
  OrderedJson j;
  j["n"] = report.n;
  j["tokenizer"] = kTokenizerVersion;
  j["total_docs"] = report.total_docs;
  j["flagged_count"] = report.flagged.size();
  j["overlap_pct"] = round2(report.overlap_pct);
  j["flagged"] = OrderedJson::array();
  for (const auto& f : report.flagged) {
    j["flagged"].push_back(OrderedJson{{"doc_id", f.doc_id}, {"offset", f.offset}});
  }
  j["buckets"] = OrderedJson::array();
  for (const auto& b : report.buckets) {
    double pct = b.total ? 100.0 * static_cast<double>(b.flagged) / static_cast<double>(b.total) : 0.0;
    j["buckets"].push_back(OrderedJson{{"bucket", b.bucket},
                                       {"flagged", b.flagged},
                                       {"total", b.total},
                                       {"overlap_pct", round2(pct)}});
  }
  return j;
}

std::vector<std::vector<double>> pairwise_overlap(std::span<const NamedCorpus> corpora, int n,
                                                  unsigned workers) {
  if (corpora.size() < 2) throw ArgumentError("pairwise overlap needs at least two corpora");
  std::vector<std::vector<double>> matrix(corpora.size(), std::vector<double>(corpora.size(), 0.0));
  for (std::size_t j = 0; j < corpora.size(); ++j) {
    auto index = NgramIndex::build(corpora[j].docs, n, {corpora[j].name}, workers);
    for (std::size_t i = 0; i < corpora.size(); ++i) {
      matrix[i][j] = flag_contaminated(corpora[i].docs, index, workers).overlap_pct;
    }
  }
  return matrix;
}

Fields fields_from_string(std::string_view s) {
  if (s == "question") return Fields::Question;
  if (s == "question+solution") return Fields::QuestionSolution;
  throw ArgumentError(fmt::format("unknown field selection '{}' (question|question+solution)", s));
}

std::vector<CorpusDoc> load_corpus(const std::filesystem::path& path, Fields fields) {
  auto records = read_jsonl(path);
  std::vector<CorpusDoc> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const Json& r = records[i];
    if (!r.is_object()) {
      throw InputError(fmt::format("{}: record {} is not an object", path.string(), i + 1));
    }
    // The bench header line carries no document.
    if (r.contains("bench_version")) continue;
    CorpusDoc doc;
    doc.id = string_field(r, {"id", "question_id", "topic_id"}).value_or(fmt::format("doc-{}", i + 1));
    auto question = string_field(r, {"text", "question", "question_text", "instruction", "problem"});
    const Json* posts = r.contains("posts") && r["posts"].is_array() ? &r["posts"] : nullptr;
    if (!question && posts && !posts->empty()) question = string_field((*posts)[0], {"text"});
    if (!question) {
      throw InputError(fmt::format("{}: record {} has no question text", path.string(), i + 1));
    }
    doc.text = *question;
    if (fields == Fields::QuestionSolution) {
      if (auto s = string_field(r, {"solution", "response", "answer"})) doc.text += '\n' + *s;
      if (auto it = r.find("solutions"); it != r.end() && it->is_array()) append_solutions(*it, doc.text);
      if (posts) {
        for (std::size_t p = 1; p < posts->size(); ++p) {
          if (auto t = string_field((*posts)[p], {"text"})) doc.text += '\n' + *t;
        }
      }
    }
    auto ts = string_field(r, {"ts", "first_posted_at"});
    if (!ts && posts && !posts->empty()) ts = string_field((*posts)[0], {"ts"});
    if (ts) doc.ts = parse_rfc3339(*ts);
    out.push_back(std::move(doc));
  }
  return out;
}

std::vector<TokenStream> tokenize_all(std::span<const CorpusDoc> docs, unsigned workers) {
  std::vector<TokenStream> out(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t i) { out[i] = tokenize(docs[i].text, docs[i].id); });
  return out;
}

}  // namespace livemath::decontam
