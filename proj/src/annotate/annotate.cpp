#include "livemath/annotate.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <httplib.h>

#include "livemath/error.hpp"

namespace livemath::annotate {

namespace {

Timestamp system_now() {
  return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

void set_json(httplib::Response& res, int status, const OrderedJson& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void set_error(httplib::Response& res, int status, std::string_view kind, std::string_view msg) {
  set_json(res, status, {{"error", kind}, {"message", msg}});
}

}  // namespace

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw ArgumentError("bounded_draw needs a positive bound");
  // Values below 2^64 mod bound would bias the low residues; redraw them.
  std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t x = rng();
    if (x >= threshold) return x % bound;
  }
}

std::vector<std::string> sample_subset(std::span<const std::string> ids, double fraction,
                                       std::uint64_t seed) {
  if (ids.empty()) throw ArgumentError("cannot sample from an empty bench");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ArgumentError(fmt::format("sample fraction {} is outside (0, 1]", fraction));
  }
  std::set<std::string_view> unique(ids.begin(), ids.end());
  if (unique.size() != ids.size()) throw ArgumentError("sample ids are not unique");
  auto n = ids.size();
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  k = std::min(k, n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    auto j = i + static_cast<std::size_t>(bounded_draw(rng, n - i));
    std::swap(order[i], order[j]);
  }
  order.resize(k);
  std::sort(order.begin(), order.end());
  std::vector<std::string> out;
  out.reserve(k);
  for (auto i : order) out.push_back(ids[i]);
  return out;
}

std::string_view to_string(VerdictValue v) {
  switch (v) {
    case VerdictValue::Yes: return "yes";
    case VerdictValue::No: return "no";
    case VerdictValue::NoAnswer: return "no_answer";
    case VerdictValue::NotSure: return "not_sure";
  }
  return "not_sure";
}

std::optional<VerdictValue> verdict_from_string(std::string_view s) {
  for (auto v : kAllVerdicts) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::vector<AnnotationTask> assign(std::span<const std::string> ids,
                                   std::span<const std::string> annotators) {
  std::set<std::string_view> distinct(annotators.begin(), annotators.end());
  if (distinct.size() < 2 || distinct.size() != annotators.size()) {
    throw ArgumentError("assignment needs at least two distinct annotators");
  }
  std::vector<AnnotationTask> tasks;
  tasks.reserve(ids.size() * 2);
  auto a = annotators.size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      AnnotationTask t;
      t.task_id = fmt::format("t{:05}-{}", i + 1, k + 1);
      t.question_id = ids[i];
      t.assigned_to = annotators[(2 * i + k) % a];
      tasks.push_back(std::move(t));
    }
  }
  return tasks;
}

void populate(std::vector<AnnotationTask>& tasks, std::span<const bench::BenchItem> bench,
              std::span<const ingest::Topic> topics) {
  std::unordered_map<std::string_view, const bench::BenchItem*> items;
  for (const auto& b : bench) items.emplace(b.question_id, &b);
  std::unordered_map<std::string_view, const ingest::Topic*> by_topic;
  for (const auto& t : topics) by_topic.emplace(t.topic_id, &t);
  for (auto& task : tasks) {
    auto it = items.find(task.question_id);
    if (it == items.end()) throw InputError("question_id not in bench: " + task.question_id);
    task.question_text = it->second->question_text;
    task.final_answers = it->second->final_answers;
    task.raw_posts.clear();
    if (auto t = by_topic.find(task.question_id); t != by_topic.end()) {
      for (const auto& p : t->second->posts) {
        task.raw_posts.push_back({p.post_number, p.author, p.body});
      }
    }
  }
}

OrderedJson verdict_to_json(const Verdict& v) {
  return {{"task_id", v.task_id},
          {"annotator", v.annotator},
          {"value", to_string(v.value)},
          {"submitted_at", format_rfc3339(v.submitted_at)}};
}

Verdict verdict_from_json(const Json& j) {
  try {
    Verdict v;
    v.task_id = j.at("task_id").get<std::string>();
    v.annotator = j.at("annotator").get<std::string>();
    auto value = verdict_from_string(j.at("value").get<std::string>());
    if (!value) throw InputError("unknown verdict value in " + j.dump());
    v.value = *value;
    auto ts = parse_rfc3339(j.at("submitted_at").get<std::string>());
    if (!ts) throw InputError("bad submitted_at in " + j.dump());
    v.submitted_at = *ts;
    return v;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed verdict: ") + e.what());
  }
}

VerdictStore::VerdictStore(std::filesystem::path log, std::size_t compact_every)
    : log_(std::move(log)), compact_every_(std::max<std::size_t>(compact_every, 1)) {
  if (log_.empty()) return;
  if (std::filesystem::exists(log_)) {
    for (const auto& j : read_jsonl(log_)) {
      auto v = verdict_from_json(j);
      state_[{v.task_id, v.annotator}] = v;
      ++log_lines_;
    }
  } else if (log_.has_parent_path()) {
    std::filesystem::create_directories(log_.parent_path());
  }
  std::lock_guard lock(mu_);
  open_locked();
}

VerdictStore::~VerdictStore() {
  if (fd_ >= 0) ::close(fd_);
}

void VerdictStore::open_locked() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = ::open(log_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw IoError(fmt::format("cannot open {}: {}", log_.string(), std::strerror(errno)));
}

void VerdictStore::append_locked(const std::string& line) {
  std::size_t done = 0;
  while (done < line.size()) {
    auto n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(fmt::format("cannot append to {}: {}", log_.string(), std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) {
    throw IoError(fmt::format("cannot sync {}: {}", log_.string(), std::strerror(errno)));
  }
  ++log_lines_;
}

void VerdictStore::submit(const Verdict& v) {
  std::lock_guard lock(mu_);
  if (!log_.empty()) append_locked(verdict_to_json(v).dump() + '\n');
  state_[{v.task_id, v.annotator}] = v;
  if (!log_.empty() && log_lines_ >= compact_every_ && log_lines_ >= 2 * state_.size()) {
    compact_locked();
  }
}

std::vector<Verdict> VerdictStore::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<Verdict> out;
  out.reserve(state_.size());
  for (const auto& [k, v] : state_) out.push_back(v);
  return out;
}

std::optional<Verdict> VerdictStore::find(std::string_view task_id,
                                          std::string_view annotator) const {
  std::lock_guard lock(mu_);
  auto it = state_.find({std::string(task_id), std::string(annotator)});
  if (it == state_.end()) return std::nullopt;
  return it->second;
}

void VerdictStore::compact() {
  std::lock_guard lock(mu_);
  if (!log_.empty()) compact_locked();
}

void VerdictStore::compact_locked() {
  std::string contents;
  for (const auto& [k, v] : state_) contents += verdict_to_json(v).dump() + '\n';
  write_file(log_, contents);
  log_lines_ = state_.size();
  open_locked();
}

std::size_t VerdictStore::log_lines() const {
  std::lock_guard lock(mu_);
  return log_lines_;
}

OrderedJson AgreementReport::to_json() const {
  OrderedJson counts_j, pct_j;
  for (auto v : kAllVerdicts) {
    auto c = counts.find(v);
    auto p = pct.find(v);
    counts_j[std::string(to_string(v))] = c == counts.end() ? 0 : c->second;
    pct_j[std::string(to_string(v))] = p == pct.end() ? 0.0 : round2(p->second);
  }
  OrderedJson j;
  j["total_tasks"] = total_tasks;
  j["submitted"] = submitted;
  j["coverage_pct"] = round2(coverage_pct);
  j["counts"] = counts_j;
  j["pct_yes"] = pct_j["yes"];
  j["pct_no"] = pct_j["no"];
  j["pct_no_answer"] = pct_j["no_answer"];
  j["pct_not_sure"] = pct_j["not_sure"];
  j["doubly_annotated"] = doubly_annotated;
  j["agreeing"] = agreeing;
  j["inter_annotator_agreement"] = inter_annotator_agreement
                                       ? OrderedJson(round2(*inter_annotator_agreement))
                                       : OrderedJson(nullptr);
  return j;
}

AgreementReport agreement_report(std::span<const AnnotationTask> tasks,
                                 std::span<const Verdict> verdicts) {
  AgreementReport r;
  r.total_tasks = tasks.size();
  std::unordered_map<std::string_view, const AnnotationTask*> by_id;
  for (const auto& t : tasks) by_id.emplace(t.task_id, &t);
  std::map<std::string, std::vector<VerdictValue>> per_question;
  for (auto v : kAllVerdicts) r.counts[v] = 0;
  for (const auto& v : verdicts) {
    auto it = by_id.find(v.task_id);
    if (it == by_id.end() || it->second->assigned_to != v.annotator) continue;
    ++r.submitted;
    ++r.counts[v.value];
    per_question[it->second->question_id].push_back(v.value);
  }
  for (auto v : kAllVerdicts) {
    r.pct[v] = r.submitted == 0 ? 0.0
                                : 100.0 * static_cast<double>(r.counts[v]) /
                                      static_cast<double>(r.submitted);
  }
  for (const auto& [q, values] : per_question) {
    if (values.size() != 2) continue;
    if (values[0] == VerdictValue::NotSure || values[1] == VerdictValue::NotSure) continue;
    ++r.doubly_annotated;
    if (values[0] == values[1]) ++r.agreeing;
  }
  if (r.doubly_annotated > 0) {
    r.inter_annotator_agreement =
        100.0 * static_cast<double>(r.agreeing) / static_cast<double>(r.doubly_annotated);
  }
  r.coverage_pct = r.total_tasks == 0 ? 0.0
                                      : 100.0 * static_cast<double>(r.submitted) /
                                            static_cast<double>(r.total_tasks);
  return r;
}

AnnotateService::AnnotateService(std::vector<AnnotationTask> tasks, VerdictStore& store,
                                 Clock clock)
    : tasks_(std::move(tasks)), store_(store), clock_(clock ? std::move(clock) : Clock(system_now)) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!by_id_.emplace(tasks_[i].task_id, i).second) {
      throw ArgumentError("duplicate task id " + tasks_[i].task_id);
    }
  }
}

std::vector<const AnnotationTask*> AnnotateService::pending(std::string_view annotator) const {
  std::vector<const AnnotationTask*> out;
  for (const auto& t : tasks_) {
    if (t.assigned_to == annotator && !store_.find(t.task_id, annotator)) out.push_back(&t);
  }
  return out;
}

std::size_t AnnotateService::assigned_count(std::string_view annotator) const {
  return static_cast<std::size_t>(std::count_if(
      tasks_.begin(), tasks_.end(), [&](const AnnotationTask& t) { return t.assigned_to == annotator; }));
}

const AnnotationTask* AnnotateService::task(std::string_view task_id) const {
  auto it = by_id_.find(task_id);
  return it == by_id_.end() ? nullptr : &tasks_[it->second];
}

SubmitStatus AnnotateService::submit(std::string_view task_id, std::string_view annotator,
                                     VerdictValue value) {
  const auto* t = task(task_id);
  if (!t) return SubmitStatus::UnknownTask;
  if (t->assigned_to != annotator) return SubmitStatus::WrongAnnotator;
  store_.submit({t->task_id, t->assigned_to, value, clock_()});
  return SubmitStatus::Stored;
}

AgreementReport AnnotateService::report() const {
  auto snap = store_.snapshot();
  return agreement_report(tasks_, snap);
}

OrderedJson task_to_json(const AnnotationTask& t) {
  OrderedJson posts = OrderedJson::array();
  for (const auto& p : t.raw_posts) {
    posts.push_back({{"post_number", p.post_number}, {"author", p.author}, {"body", p.body}});
  }
  return {{"task_id", t.task_id},
          {"question_id", t.question_id},
          {"question_text", t.question_text},
          {"final_answers", t.final_answers},
          {"raw_posts", posts},
          {"assigned_to", t.assigned_to}};
}

void mount_routes(httplib::Server& server, AnnotateService& service, std::string cors_origin,
                  const std::filesystem::path& static_dir) {
  server.set_default_headers({{"Access-Control-Allow-Origin", cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
  server.Get("/api/tasks", [&service](const httplib::Request& req, httplib::Response& res) {
    auto annotator = req.get_param_value("annotator");
    if (annotator.empty()) {
      set_error(res, 400, "argument", "query parameter 'annotator' is required");
      return;
    }
    OrderedJson tasks = OrderedJson::array();
    for (const auto* t : service.pending(annotator)) tasks.push_back(task_to_json(*t));
    OrderedJson body;
    body["annotator"] = annotator;
    body["assigned"] = service.assigned_count(annotator);
    body["pending"] = tasks.size();
    body["tasks"] = std::move(tasks);
    set_json(res, 200, body);
  });
  server.Get(R"(/api/task/([^/]+))", [&service](const httplib::Request& req,
                                                httplib::Response& res) {
    const auto* t = service.task(req.matches[1].str());
    if (!t) {
      set_error(res, 404, "not_found", "unknown task " + req.matches[1].str());
      return;
    }
    auto body = task_to_json(*t);
    auto v = service.store().find(t->task_id, t->assigned_to);
    body["verdict"] = v ? OrderedJson(to_string(v->value)) : OrderedJson(nullptr);
    set_json(res, 200, body);
  });
  server.Post("/api/verdict", [&service](const httplib::Request& req, httplib::Response& res) {
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const Json::parse_error& e) {
      set_error(res, 400, "input", std::string("body is not JSON: ") + e.what());
      return;
    }
    auto field = [&](const char* key) -> std::optional<std::string> {
      auto it = body.find(key);
      if (it == body.end() || !it->is_string()) return std::nullopt;
      return it->get<std::string>();
    };
    auto task_id = field("task_id");
    auto annotator = field("annotator");
    auto value_s = field("value");
    if (!body.is_object() || !task_id || !annotator || !value_s) {
      set_error(res, 400, "input", "expected {\"task_id\", \"annotator\", \"value\"} strings");
      return;
    }
    auto value = verdict_from_string(*value_s);
    if (!value) {
      set_error(res, 400, "input", "value must be yes, no, no_answer or not_sure");
      return;
    }
    try {
      switch (service.submit(*task_id, *annotator, *value)) {
        case SubmitStatus::UnknownTask:
          set_error(res, 404, "not_found", "unknown task " + *task_id);
          return;
        case SubmitStatus::WrongAnnotator:
          set_error(res, 403, "forbidden", "task " + *task_id + " is not assigned to " + *annotator);
          return;
        case SubmitStatus::Stored:
          set_json(res, 200, {{"stored", true}, {"task_id", *task_id}, {"value", *value_s}});
          return;
      }
    } catch (const Error& e) {
      set_error(res, 500, e.kind(), e.what());
    }
  });
  server.Get("/api/report", [&service](const httplib::Request&, httplib::Response& res) {
    set_json(res, 200, service.report().to_json());
  });
  if (!static_dir.empty()) server.set_mount_point("/", static_dir.string());
}

HttpServer::HttpServer(AnnotateService& service, std::string cors_origin,
                       std::filesystem::path static_dir)
    : server_(std::make_unique<httplib::Server>()) {
  mount_routes(*server_, service, std::move(cors_origin), static_dir);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError(fmt::format("cannot bind {}:{}", host, port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) throw IoError(fmt::format("cannot listen on {}:{}", host, port));
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace livemath::annotate
