#include "livemath/stages.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "livemath/answer.hpp"
#include "livemath/error.hpp"
#include "livemath/parallel.hpp"
#include "livemath/resources.hpp"

namespace livemath::stages {

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::size_t skip_spaces(std::string_view s, std::size_t i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

llm::ChatRequest make_request(const StageModel& model, std::vector<llm::Message> messages,
                              std::string tag, const StageContext& ctx) {
  if (!model.gateway) throw ConfigError(fmt::format("no gateway configured for '{}'", tag));
  llm::ChatRequest req;
  req.model_id = model.model_id;
  req.messages = std::move(messages);
  req.max_tokens = ctx.max_tokens;
  req.temperature = ctx.temperature;
  req.request_tag = std::move(tag);
  return req;
}

std::vector<llm::Message> user_message(std::string text) {
  return {llm::Message{llm::Role::User, std::move(text)}};
}

// Removes ``` fence lines, keeping what they enclose.
std::string strip_fences(std::string_view text) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    auto first = skip_spaces(line, 0);
    if (line.substr(first).rfind("```", 0) != 0) {
      out.append(line);
      out += '\n';
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

// The model is asked for prose first, so the payload is the first '{' that
// opens a JSON object reaching to the last '}'.
std::optional<Json> locate_payload(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
  }
  std::string cleaned = strip_fences(text);
  auto last = cleaned.rfind('}');
  if (last == std::string::npos) return std::nullopt;
  for (auto open = cleaned.find('{'); open != std::string::npos && open < last;
       open = cleaned.find('{', open + 1)) {
    auto next = skip_spaces(cleaned, open + 1);
    if (next >= cleaned.size() || cleaned[next] != '"') continue;
    try {
      return Json::parse(std::string_view(cleaned).substr(open, last - open + 1));
    } catch (const Json::parse_error&) {
    }
  }
  return std::nullopt;
}

struct TopicOutcome {
  std::optional<QaPair> pair;
  PipelineCounters counters;
  std::optional<Quarantine> quarantine;
};

// Runs `call` and, on a stage parse failure only, once more under the retry tag.
template <typename Fn>
auto with_retry(const std::string& tag, PipelineCounters& c, Fn&& call) {
  try {
    return call(tag);
  } catch (const StageParseError&) {
    ++c.retries;
    return call(retry_tag(tag));
  }
}

TopicOutcome process_topic(const ingest::Topic& topic, const StageContext& ctx,
                           bool all_rewriters) {
  TopicOutcome out;
  auto& c = out.counters;
  c.input_topics = 1;
  auto quarantine = [&](std::string stage, const Error& e) {
    out.quarantine = Quarantine{topic.topic_id, std::move(stage), e.kind(), e.what()};
  };

  try {
    auto verdict = with_retry(detect_tag(topic.topic_id), c,
                              [&](const std::string& tag) { return detect(topic, ctx, tag); });
    if (!verdict.is_math_question) {
      c.pruned = 1;
      return out;
    }
  } catch (const Error& e) {
    c.quarantined_detect = 1;
    quarantine("detect", e);
    return out;
  }
  c.detected_math = 1;

  ExtractionResult extraction;
  try {
    extraction = with_retry(extract_tag(topic.topic_id), c,
                            [&](const std::string& tag) { return extract(topic, ctx, tag); });
  } catch (const Error& e) {
    c.quarantined_extract = 1;
    quarantine("extract", e);
    return out;
  }
  if (extraction.answers.empty()) {
    c.no_answers = 1;
    return out;
  }
  c.with_answers = 1;

  std::size_t rewriter_count = all_rewriters ? ctx.rewriters.size() : 1;
  if (ctx.rewriters.empty()) throw ConfigError("no rewriter configured");
  QaPair pair;
  pair.topic_id = topic.topic_id;
  pair.question_text = extraction.question_text;
  pair.first_posted_at = topic.first_posted_at;
  pair.category = topic.category_tag;
  pair.difficulty = ctx.difficulty ? ingest::derive_difficulty(topic, *ctx.difficulty)
                                   : ingest::derive_difficulty(topic);
  try {
    for (const auto& ref : extraction.answers) {
      const auto* post = topic.find_post(ref.post_number);
      Solution sol{ref.post_number, ref.author, post->body, {}};
      for (std::size_t r = 0; r < rewriter_count; ++r) {
        const auto& rw = ctx.rewriters[r];
        auto tag = rewrite_tag(rw.model_id, topic.topic_id, ref.post_number);
        sol.rewrites.push_back(with_retry(tag, c, [&](const std::string& t) {
          return rewrite(pair.question_text, post->body, topic.topic_id, ref.post_number, rw, ctx,
                         t);
        }));
      }
      pair.solutions.push_back(std::move(sol));
    }
  } catch (const Error& e) {
    c.quarantined_rewrite = 1;
    quarantine("rewrite", e);
    return out;
  }
  c.qa_pairs = 1;
  c.solutions = pair.solutions.size();
  out.pair = std::move(pair);
  return out;
}

}  // namespace

std::string fill_template(std::string_view pattern,
                          const std::map<std::string, std::string, std::less<>>& values) {
  std::string out;
  out.reserve(pattern.size());
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      auto close = pattern.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(pattern.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += pattern[i++];
  }
  return out;
}

PromptSet PromptSet::builtin() {
  return {std::string(resources::kClassifyPrompt), std::string(resources::kClassifyExamples),
          std::string(resources::kParsePrompt), std::string(resources::kParseExamples),
          std::string(resources::kRewritePrompt)};
}

std::string detect_tag(std::string_view topic_id) { return fmt::format("detect/{}", topic_id); }
std::string extract_tag(std::string_view topic_id) { return fmt::format("extract/{}", topic_id); }
std::string rewrite_tag(std::string_view rewriter, std::string_view topic_id, int post_number) {
  return fmt::format("rewrite/{}/{}/{}", rewriter, topic_id, post_number);
}
std::string retry_tag(std::string_view tag) { return fmt::format("{}#retry", tag); }

const RewrittenSolution* Solution::rewrite_by(std::string_view rewriter_id) const {
  for (const auto& r : rewrites) {
    if (r.rewriter_id == rewriter_id) return &r;
  }
  return nullptr;
}

bool parse_detection(std::string_view text) {
  static constexpr std::string_view kBoxed = "\\boxed";
  std::optional<bool> verdict;
  for (auto pos = text.find(kBoxed); pos != std::string_view::npos;
       pos = text.find(kBoxed, pos + 1)) {
    auto i = skip_spaces(text, pos + kBoxed.size());
    if (i >= text.size() || text[i] != '{') continue;
    i = skip_spaces(text, i + 1);
    if (i >= text.size() || (text[i] != '0' && text[i] != '1')) continue;
    bool value = text[i] == '1';
    i = skip_spaces(text, i + 1);
    if (i >= text.size() || text[i] != '}') continue;
    verdict = value;
  }
  if (!verdict) throw StageParseError("detection reply has no \\boxed{0} or \\boxed{1}");
  return *verdict;
}

std::vector<AnswerRef> parse_extraction(std::string_view text, const ingest::Topic& topic) {
  auto payload = locate_payload(text);
  if (!payload) throw StageParseError("extraction reply holds no JSON object");
  if (!payload->is_object()) throw StageParseError("extraction payload is not an object");
  auto answers = payload->find("answers");
  if (answers == payload->end()) throw StageParseError("extraction payload lacks \"answers\"");
  if (!answers->is_array()) throw StageParseError("\"answers\" is not a list");
  std::vector<AnswerRef> out;
  std::set<int> seen;
  for (const auto& entry : *answers) {
    if (!entry.is_object()) throw StageParseError("an \"answers\" entry is not an object");
    auto num = entry.find("post number");
    if (num == entry.end() || !num->is_number_integer()) {
      throw StageParseError("an \"answers\" entry lacks an integer \"post number\"");
    }
    if (auto user = entry.find("user"); user != entry.end() && !user->is_string()) {
      throw StageParseError("an \"answers\" entry has a non-string \"user\"");
    }
    auto n = num->get<long long>();
    if (n <= 1 || n > std::numeric_limits<int>::max()) continue;
    const auto* post = topic.find_post(static_cast<int>(n));
    if (!post || !seen.insert(post->post_number).second) continue;
    out.push_back({post->post_number, post->author});
  }
  return out;
}

std::string render_topic(const ingest::Topic& topic) {
  std::string out;
  for (const auto& p : topic.posts) {
    if (!out.empty()) out += "\n\n";
    out += fmt::format("post {} by user {}: {}", p.post_number, p.author, p.body);
  }
  return out;
}

std::vector<llm::Message> classify_messages(const ingest::Topic& topic,
                                            const PromptSet& prompts) {
  return user_message(fill_template(
      prompts.classify, {{"examples", prompts.classify_examples}, {"post", topic.posts[0].body}}));
}

std::vector<llm::Message> parse_messages(const ingest::Topic& topic, const PromptSet& prompts) {
  return user_message(fill_template(
      prompts.parse, {{"examples", prompts.parse_examples}, {"topic", render_topic(topic)}}));
}

std::vector<llm::Message> rewrite_messages(std::string_view question, std::string_view solution,
                                           const PromptSet& prompts) {
  return user_message(fill_template(
      prompts.rewrite, {{"question", std::string(question)}, {"solution", std::string(solution)}}));
}

DetectionVerdict detect(const ingest::Topic& topic, const StageContext& ctx,
                        std::optional<std::string> tag) {
  if (topic.posts.empty()) throw ArgumentError("topic " + topic.topic_id + " has no posts");
  auto req = make_request(ctx.detect, classify_messages(topic, ctx.prompts),
                          tag.value_or(detect_tag(topic.topic_id)), ctx);
  auto resp = ctx.detect.gateway->complete(req);
  return {topic.topic_id, parse_detection(resp.text), std::move(resp.text)};
}

ExtractionResult extract(const ingest::Topic& topic, const StageContext& ctx,
                         std::optional<std::string> tag) {
  if (topic.posts.empty()) throw ArgumentError("topic " + topic.topic_id + " has no posts");
  auto req = make_request(ctx.extract, parse_messages(topic, ctx.prompts),
                          tag.value_or(extract_tag(topic.topic_id)), ctx);
  auto resp = ctx.extract.gateway->complete(req);
  return {topic.topic_id, topic.posts[0].body, parse_extraction(resp.text, topic)};
}

RewrittenSolution rewrite(std::string_view question, std::string_view raw_solution,
                          std::string_view topic_id, int post_number, const StageModel& rewriter,
                          const StageContext& ctx, std::optional<std::string> tag) {
  if (is_blank(raw_solution)) throw ArgumentError("raw solution is blank");
  auto req = make_request(rewriter, rewrite_messages(question, raw_solution, ctx.prompts),
                          tag.value_or(rewrite_tag(rewriter.model_id, topic_id, post_number)), ctx);
  auto resp = rewriter.gateway->complete(req);
  if (resp.text.empty()) throw StageParseError("rewrite reply is empty");
  RewrittenSolution out{std::string(topic_id), post_number, rewriter.model_id,
                        std::move(resp.text), std::nullopt};
  try {
    if (auto box = answer::extract_boxed(out.text)) out.boxed_answer = box->raw;
  } catch (const ExtractError&) {
    // An unclosed box is treated like no box; bench filtering decides later.
  }
  return out;
}

PipelineCounters& PipelineCounters::operator+=(const PipelineCounters& o) {
  input_topics += o.input_topics;
  detected_math += o.detected_math;
  pruned += o.pruned;
  quarantined_detect += o.quarantined_detect;
  with_answers += o.with_answers;
  no_answers += o.no_answers;
  quarantined_extract += o.quarantined_extract;
  quarantined_rewrite += o.quarantined_rewrite;
  qa_pairs += o.qa_pairs;
  solutions += o.solutions;
  retries += o.retries;
  return *this;
}

FunnelReport PipelineCounters::funnel() const {
  FunnelReport f;
  f.add("detect", input_topics, detected_math);
  f.add("extract", detected_math, with_answers);
  f.add("rewrite", with_answers, qa_pairs);
  return f;
}

OrderedJson PipelineCounters::to_json() const {
  OrderedJson j;
  j["input_topics"] = input_topics;
  j["detected_math"] = detected_math;
  j["pruned"] = pruned;
  j["quarantined_detect"] = quarantined_detect;
  j["with_answers"] = with_answers;
  j["no_answers"] = no_answers;
  j["quarantined_extract"] = quarantined_extract;
  j["quarantined_rewrite"] = quarantined_rewrite;
  j["qa_pairs"] = qa_pairs;
  j["solutions"] = solutions;
  j["retries"] = retries;
  j["stages"] = funnel().to_json();
  return j;
}

PipelineResult run_pipeline(std::span<const ingest::Topic> topics, const StageContext& ctx,
                            bool all_rewriters, unsigned workers) {
  if (ctx.rewriters.empty()) throw ConfigError("no rewriter configured");
  std::vector<TopicOutcome> outcomes(topics.size());
  parallel_for(topics.size(), workers,
               [&](std::size_t i) { outcomes[i] = process_topic(topics[i], ctx, all_rewriters); });
  PipelineResult result;
  for (auto& o : outcomes) {
    result.counters += o.counters;
    if (o.pair) result.pairs.push_back(std::move(*o.pair));
    if (o.quarantine) result.quarantined.push_back(std::move(*o.quarantine));
  }
  return result;
}

OrderedJson verdict_to_json(const DetectionVerdict& v) {
  return {{"topic_id", v.topic_id}, {"is_math_question", v.is_math_question},
          {"raw_model_text", v.raw_model_text}};
}

OrderedJson extraction_to_json(const ExtractionResult& r) {
  OrderedJson answers = OrderedJson::array();
  for (const auto& a : r.answers) {
    answers.push_back({{"post_number", a.post_number}, {"author", a.author}});
  }
  return {{"topic_id", r.topic_id}, {"question_text", r.question_text}, {"answers", answers}};
}

ExtractionResult extraction_from_json(const Json& j) {
  try {
    ExtractionResult r;
    r.topic_id = j.at("topic_id").get<std::string>();
    r.question_text = j.at("question_text").get<std::string>();
    for (const auto& a : j.at("answers")) {
      r.answers.push_back({a.at("post_number").get<int>(), a.at("author").get<std::string>()});
    }
    return r;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed extraction record: ") + e.what());
  }
}

OrderedJson quarantine_to_json(const Quarantine& q) {
  return {{"topic_id", q.topic_id}, {"stage", q.stage}, {"error", q.error_kind},
          {"message", q.message}};
}

OrderedJson qa_pair_to_json(const QaPair& p) {
  OrderedJson sols = OrderedJson::array();
  for (const auto& s : p.solutions) {
    OrderedJson rewrites = OrderedJson::array();
    for (const auto& r : s.rewrites) {
      rewrites.push_back({{"rewriter", r.rewriter_id},
                          {"text", r.text},
                          {"boxed_answer", r.boxed_answer ? OrderedJson(*r.boxed_answer)
                                                          : OrderedJson(nullptr)}});
    }
    sols.push_back({{"post_number", s.post_number},
                    {"author", s.author},
                    {"raw_text", s.raw_text},
                    {"rewrites", rewrites}});
  }
  OrderedJson j;
  j["topic_id"] = p.topic_id;
  j["question"] = p.question_text;
  j["first_posted_at"] = format_rfc3339(p.first_posted_at);
  j["difficulty"] = ingest::to_string(p.difficulty);
  j["category"] = p.category ? OrderedJson(*p.category) : OrderedJson(nullptr);
  j["solutions"] = sols;
  return j;
}

QaPair qa_pair_from_json(const Json& j) {
  try {
    QaPair p;
    p.topic_id = j.at("topic_id").get<std::string>();
    p.question_text = j.at("question").get<std::string>();
    auto ts = parse_rfc3339(j.at("first_posted_at").get<std::string>());
    if (!ts) throw InputError("bad first_posted_at in QA pair " + p.topic_id);
    p.first_posted_at = *ts;
    auto diff = ingest::difficulty_from_string(j.value("difficulty", std::string("Others")));
    if (!diff) throw InputError("unknown difficulty in QA pair " + p.topic_id);
    p.difficulty = *diff;
    if (auto c = j.find("category"); c != j.end() && c->is_string()) p.category = c->get<std::string>();
    for (const auto& s : j.at("solutions")) {
      Solution sol;
      sol.post_number = s.at("post_number").get<int>();
      sol.author = s.value("author", std::string());
      sol.raw_text = s.at("raw_text").get<std::string>();
      for (const auto& r : s.value("rewrites", Json::array())) {
        RewrittenSolution rw;
        rw.topic_id = p.topic_id;
        rw.post_number = sol.post_number;
        rw.rewriter_id = r.at("rewriter").get<std::string>();
        rw.text = r.at("text").get<std::string>();
        if (auto b = r.find("boxed_answer"); b != r.end() && b->is_string()) {
          rw.boxed_answer = b->get<std::string>();
        }
        sol.rewrites.push_back(std::move(rw));
      }
      p.solutions.push_back(std::move(sol));
    }
    if (p.solutions.empty()) throw InputError("QA pair " + p.topic_id + " has no solutions");
    return p;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed QA pair: ") + e.what());
  }
}

std::vector<QaPair> load_qa_pairs(const std::filesystem::path& path) {
  std::vector<QaPair> out;
  for (const auto& j : read_jsonl(path)) out.push_back(qa_pair_from_json(j));
  return out;
}

std::string serialize_qa_pairs(std::span<const QaPair> pairs) {
  std::string out;
  for (const auto& p : pairs) out += qa_pair_to_json(p).dump() + '\n';
  return out;
}

}  // namespace livemath::stages
