#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "livemath/bench.hpp"
#include "livemath/ingest.hpp"
#include "livemath/io.hpp"
#include "livemath/time.hpp"

namespace httplib {
class Server;
}

namespace livemath::annotate {

/// Named in reports so a sample can be reproduced elsewhere: mt19937_64, a
/// rejection-sampled bounded draw and a partial Fisher-Yates shuffle.
inline constexpr std::string_view kSamplerName = "mt19937_64/rejection/fisher-yates";

/// Uniform draw in [0, bound) without modulo bias; bound must be positive.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound);

/// round(fraction * ids.size()) ids without replacement, returned in input
/// order. Throws ArgumentError for fraction outside (0, 1] or empty ids.
std::vector<std::string> sample_subset(std::span<const std::string> ids, double fraction,
                                       std::uint64_t seed);

enum class VerdictValue { Yes, No, NoAnswer, NotSure };

inline constexpr VerdictValue kAllVerdicts[] = {VerdictValue::Yes, VerdictValue::No,
                                                VerdictValue::NoAnswer, VerdictValue::NotSure};

std::string_view to_string(VerdictValue v);  // "yes" | "no" | "no_answer" | "not_sure"
std::optional<VerdictValue> verdict_from_string(std::string_view s);

struct RawPost {
  int post_number = 0;
  std::string author;
  std::string body;
};

struct AnnotationTask {
  std::string task_id;
  std::string question_id;
  std::string question_text;
  std::vector<std::string> final_answers;
  std::vector<RawPost> raw_posts;
  std::string assigned_to;
};

/// Two tasks per id: the i-th id goes to annotators 2i and 2i+1 (mod count),
/// which keeps loads within one task of each other. Task ids are
/// "t<5-digit 1-based index>-<1|2>", e.g. "t00001-2". Throws ArgumentError for fewer than two distinct
/// annotators.
std::vector<AnnotationTask> assign(std::span<const std::string> ids,
                                   std::span<const std::string> annotators);

/// Fills question text, answers and posts from the bench and, when given,
/// the topic dump. Throws InputError for an id missing from the bench.
void populate(std::vector<AnnotationTask>& tasks, std::span<const bench::BenchItem> bench,
              std::span<const ingest::Topic> topics);

struct Verdict {
  std::string task_id;
  std::string annotator;
  VerdictValue value = VerdictValue::Yes;
  Timestamp submitted_at{};
};

OrderedJson verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const Json& j);  // throws InputError

/// Latest verdict per (task, annotator), persisted as an append-only JSONL log
/// that is fsynced before submit() returns and rewritten by compact().
class VerdictStore {
 public:
  /// Replays an existing log. An empty path keeps the store in memory.
  explicit VerdictStore(std::filesystem::path log = {}, std::size_t compact_every = 1000);
  ~VerdictStore();
  VerdictStore(const VerdictStore&) = delete;
  VerdictStore& operator=(const VerdictStore&) = delete;

  void submit(const Verdict& v);
  std::vector<Verdict> snapshot() const;  // sorted by (task_id, annotator)
  std::optional<Verdict> find(std::string_view task_id, std::string_view annotator) const;
  /// Rewrites the log to one line per stored verdict.
  void compact();
  std::size_t log_lines() const;

 private:
  void append_locked(const std::string& line);
  void compact_locked();
  void open_locked();

  std::filesystem::path log_;
  std::size_t compact_every_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, Verdict> state_;
  std::size_t log_lines_ = 0;
  int fd_ = -1;
};

struct AgreementReport {
  std::size_t total_tasks = 0;
  std::size_t submitted = 0;
  std::map<VerdictValue, std::size_t> counts;
  std::map<VerdictValue, double> pct;  // over submitted verdicts
  std::size_t doubly_annotated = 0;    // questions with both verdicts, neither not_sure
  std::size_t agreeing = 0;
  std::optional<double> inter_annotator_agreement;
  double coverage_pct = 0.0;

  OrderedJson to_json() const;
};

AgreementReport agreement_report(std::span<const AnnotationTask> tasks,
                                 std::span<const Verdict> verdicts);

enum class SubmitStatus { Stored, UnknownTask, WrongAnnotator };

using Clock = std::function<Timestamp()>;

class AnnotateService {
 public:
  AnnotateService(std::vector<AnnotationTask> tasks, VerdictStore& store, Clock clock = {});

  std::vector<const AnnotationTask*> pending(std::string_view annotator) const;
  std::size_t assigned_count(std::string_view annotator) const;
  const AnnotationTask* task(std::string_view task_id) const;
  SubmitStatus submit(std::string_view task_id, std::string_view annotator, VerdictValue value);
  AgreementReport report() const;
  const std::vector<AnnotationTask>& tasks() const { return tasks_; }
  const VerdictStore& store() const { return store_; }

 private:
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t, std::less<>> by_id_;
  VerdictStore& store_;
  Clock clock_;
};

OrderedJson task_to_json(const AnnotationTask& t);

/// GET /api/tasks?annotator=ID, GET /api/task/{id}, POST /api/verdict,
/// GET /api/report, plus CORS headers for `cors_origin` on every response
/// and OPTIONS preflight. A non-empty `static_dir` is served at "/".
void mount_routes(httplib::Server& server, AnnotateService& service, std::string cors_origin,
                  const std::filesystem::path& static_dir = {});

/// Runs the routes on a background thread.
class HttpServer {
 public:
  HttpServer(AnnotateService& service, std::string cors_origin = "*",
             std::filesystem::path static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port. Throws
  /// IoError if binding fails.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace livemath::annotate
