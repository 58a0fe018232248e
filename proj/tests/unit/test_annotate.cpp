#include <doctest.h>

#include <future>
#include <set>

#include <fmt/format.h>
#include <httplib.h>

#include "livemath/annotate.hpp"
#include "livemath/error.hpp"
#include "synth.hpp"

using namespace livemath;
using annotate::VerdictValue;

namespace {

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("q{:04}", i));
  return out;
}

std::vector<std::string> annotators(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fmt::format("ann{}", i));
  return out;
}

std::map<std::string, std::size_t> loads(const std::vector<annotate::AnnotationTask>& tasks) {
  std::map<std::string, std::size_t> out;
  for (const auto& t : tasks) ++out[t.assigned_to];
  return out;
}

// Tasks of question i are tasks[2i] and tasks[2i+1].
void vote(std::vector<annotate::Verdict>& out, const std::vector<annotate::AnnotationTask>& tasks,
          std::size_t question, VerdictValue a, VerdictValue b) {
  out.push_back({tasks[2 * question].task_id, tasks[2 * question].assigned_to, a, {}});
  out.push_back({tasks[2 * question + 1].task_id, tasks[2 * question + 1].assigned_to, b, {}});
}

annotate::Clock fixed_clock() {
  return [] { return synth::at(2024, 10, 1); };
}

}  // namespace

TEST_CASE("ten percent of 3863 ids is 386") {
  auto all = ids(3863);
  auto s = annotate::sample_subset(all, 0.1, 2024);
  CHECK(s.size() == 386);
  CHECK(std::set<std::string>(s.begin(), s.end()).size() == 386);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(annotate::sample_subset(all, 0.1, 2024) == s);
  CHECK(annotate::sample_subset(all, 0.1, 2025) != s);
  CHECK(annotate::sample_subset(all, 1.0, 1) == all);
  CHECK_THROWS_AS(annotate::sample_subset(all, 0.0, 1), ArgumentError);
  CHECK_THROWS_AS(annotate::sample_subset(all, 1.5, 1), ArgumentError);
  CHECK_THROWS_AS(annotate::sample_subset({}, 0.5, 1), ArgumentError);
}

TEST_CASE("sampling is close to uniform") {
  auto all = ids(20);
  std::map<std::string, int> hits;
  for (std::uint64_t seed = 0; seed < 4000; ++seed) {
    for (const auto& id : annotate::sample_subset(all, 0.25, seed)) ++hits[id];
  }
  // Expected 1000 per id; 5 sigma is about 137.
  for (const auto& [id, n] : hits) CHECK(std::abs(n - 1000) < 140);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) CHECK(annotate::bounded_draw(rng, 7) < 7);
}

TEST_CASE("assignment gives two distinct annotators and balanced loads") {
  auto tasks = annotate::assign(ids(10), annotators(4));
  CHECK(tasks.size() == 20);
  for (const auto& [a, n] : loads(tasks)) CHECK(n == 5);

  tasks = annotate::assign(ids(1), annotators(2));
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].assigned_to != tasks[1].assigned_to);
  CHECK(tasks[0].task_id == "t00001-1");
  CHECK(tasks[1].task_id == "t00001-2");

  tasks = annotate::assign(ids(386), annotators(10));
  CHECK(tasks.size() == 772);
  for (const auto& [a, n] : loads(tasks)) CHECK((n == 77 || n == 78));
  for (std::size_t i = 0; i < tasks.size(); i += 2) {
    CHECK(tasks[i].question_id == tasks[i + 1].question_id);
    CHECK(tasks[i].assigned_to != tasks[i + 1].assigned_to);
  }

  std::vector<std::string> same{"x", "x"};
  CHECK_THROWS_AS(annotate::assign(ids(3), same), ArgumentError);
  CHECK_THROWS_AS(annotate::assign(ids(3), annotators(1)), ArgumentError);
}

TEST_CASE("92/5/3 verdict split") {
  auto tasks = annotate::assign(ids(50), annotators(10));
  std::vector<annotate::Verdict> verdicts;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    auto v = i < 92 ? VerdictValue::Yes : i < 97 ? VerdictValue::No : VerdictValue::NoAnswer;
    verdicts.push_back({tasks[i].task_id, tasks[i].assigned_to, v, {}});
  }
  auto r = annotate::agreement_report(tasks, verdicts);
  CHECK(r.submitted == 100);
  CHECK(r.pct[VerdictValue::Yes] == 92.0);
  CHECK(r.pct[VerdictValue::No] == 5.0);
  CHECK(r.pct[VerdictValue::NoAnswer] == 3.0);
  CHECK(r.pct[VerdictValue::NotSure] == 0.0);
  CHECK(r.coverage_pct == 100.0);
  auto j = r.to_json();
  CHECK(j["pct_yes"] == 92.0);
  CHECK(j["pct_no"] == 5.0);
  CHECK(j["pct_no_answer"] == 3.0);
}

TEST_CASE("hand-built agreement fixture") {
  auto tasks = annotate::assign(ids(12), annotators(3));
  std::vector<annotate::Verdict> v;
  // Seven matching pairs.
  for (std::size_t q = 0; q < 5; ++q) vote(v, tasks, q, VerdictValue::Yes, VerdictValue::Yes);
  vote(v, tasks, 5, VerdictValue::No, VerdictValue::No);
  vote(v, tasks, 6, VerdictValue::NoAnswer, VerdictValue::NoAnswer);
  // Three disagreeing pairs.
  vote(v, tasks, 7, VerdictValue::Yes, VerdictValue::No);
  vote(v, tasks, 8, VerdictValue::No, VerdictValue::NoAnswer);
  vote(v, tasks, 9, VerdictValue::NoAnswer, VerdictValue::Yes);
  // Excluded: a not_sure pair member, and a question with one verdict.
  vote(v, tasks, 10, VerdictValue::Yes, VerdictValue::NotSure);
  v.push_back({tasks[22].task_id, tasks[22].assigned_to, VerdictValue::Yes, {}});

  auto r = annotate::agreement_report(tasks, v);
  CHECK(r.doubly_annotated == 10);
  CHECK(r.agreeing == 7);
  REQUIRE(r.inter_annotator_agreement);
  CHECK(*r.inter_annotator_agreement == 70.0);
  CHECK(r.submitted == 23);
  CHECK(r.coverage_pct == doctest::Approx(100.0 * 23 / 24));
  double sum = 0;
  for (const auto& [k, p] : r.pct) sum += p;
  CHECK(sum == doctest::Approx(100.0));

  std::vector<annotate::Verdict> all_yes;
  for (std::size_t q = 0; q < 12; ++q) vote(all_yes, tasks, q, VerdictValue::Yes, VerdictValue::Yes);
  CHECK(annotate::agreement_report(tasks, all_yes).inter_annotator_agreement == 100.0);
  CHECK_FALSE(annotate::agreement_report(tasks, {}).inter_annotator_agreement);
}

TEST_CASE("verdict store upserts, persists and replays") {
  synth::TempDir dir;
  auto log = dir.path() / "verdicts.jsonl";
  {
    annotate::VerdictStore store(log, 4);
    store.submit({"t0-1", "a", VerdictValue::Yes, synth::at(2024, 1, 1)});
    store.submit({"t0-1", "a", VerdictValue::No, synth::at(2024, 1, 2)});
    store.submit({"t0-2", "b", VerdictValue::NotSure, synth::at(2024, 1, 2)});
    CHECK(store.find("t0-1", "a")->value == VerdictValue::No);
    CHECK(store.snapshot().size() == 2);
    CHECK(store.log_lines() == 3);
    store.submit({"t1-1", "a", VerdictValue::NoAnswer, synth::at(2024, 1, 3)});
    CHECK(store.log_lines() == 4);
    store.compact();
    CHECK(store.log_lines() == 3);
  }
  {
    // Overwrites trigger compaction once the log is twice the live state.
    annotate::VerdictStore churn(dir.path() / "churn.jsonl", 4);
    for (int i = 0; i < 4; ++i) churn.submit({"t", "a", VerdictValue::No, synth::at(2024, 1, 1)});
    CHECK(churn.log_lines() == 1);
  }
  annotate::VerdictStore replayed(log);
  auto snap = replayed.snapshot();
  REQUIRE(snap.size() == 3);
  CHECK(snap[0].task_id == "t0-1");
  CHECK(snap[0].value == VerdictValue::No);
  CHECK(snap[0].submitted_at == synth::at(2024, 1, 2));
  for (auto v : annotate::kAllVerdicts) {
    CHECK(annotate::verdict_from_string(annotate::to_string(v)) == v);
  }
  CHECK_THROWS_AS(annotate::verdict_from_json(Json{{"task_id", "x"}, {"annotator", "a"}, {"value", "maybe"}}),
                  InputError);
}

TEST_CASE("service rules") {
  auto tasks = annotate::assign(ids(2), annotators(2));
  annotate::VerdictStore store;
  annotate::AnnotateService svc(tasks, store, fixed_clock());
  const auto& first = tasks[0].task_id;
  CHECK(svc.submit(first, tasks[0].assigned_to, VerdictValue::Yes) == annotate::SubmitStatus::Stored);
  CHECK(svc.submit(first, tasks[1].assigned_to, VerdictValue::Yes) ==
        annotate::SubmitStatus::WrongAnnotator);
  CHECK(svc.submit("nope", "ann0", VerdictValue::Yes) == annotate::SubmitStatus::UnknownTask);
  CHECK(svc.pending(tasks[0].assigned_to).size() == svc.assigned_count(tasks[0].assigned_to) - 1);
  CHECK(store.find(first, tasks[0].assigned_to)->submitted_at == synth::at(2024, 10, 1));
  CHECK(svc.submit(first, tasks[0].assigned_to, VerdictValue::No) == annotate::SubmitStatus::Stored);
  CHECK(store.find(first, tasks[0].assigned_to)->value == VerdictValue::No);
}

TEST_CASE("HTTP API: every verdict value, errors and 100 concurrent submissions") {
  synth::TempDir dir;
  auto tasks = annotate::assign(ids(60), annotators(5));
  for (auto& t : tasks) {
    t.question_text = "Question " + t.question_id;
    t.final_answers = {"12", "45"};
    t.raw_posts = {{1, "asker", "What is it?"}, {2, "solver", "It is 12."}};
  }
  annotate::VerdictStore store(dir.path() / "log.jsonl");
  annotate::AnnotateService svc(tasks, store, fixed_clock());
  annotate::HttpServer server(svc, "http://ui.local");
  int port = server.start("127.0.0.1", 0);
  httplib::Client client("127.0.0.1", port);

  auto post = [&](httplib::Client& c, const Json& body) {
    return c.Post("/api/verdict", body.dump(), "application/json");
  };

  auto res = client.Get("/api/tasks?annotator=ann0");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://ui.local");
  auto pending = Json::parse(res->body);
  CHECK(pending["assigned"] == 24);
  CHECK(pending["tasks"].size() == 24);
  CHECK(pending["tasks"][0]["final_answers"].size() == 2);

  const std::string first = "/api/task/" + tasks[0].task_id;
  res = client.Get(first);
  REQUIRE(res);
  auto task = Json::parse(res->body);
  CHECK(task["raw_posts"][1]["body"] == "It is 12.");
  CHECK(task["verdict"].is_null());

  CHECK(client.Get("/api/task/zzz")->status == 404);
  CHECK(client.Get("/api/tasks")->status == 400);
  CHECK(post(client, {{"task_id", tasks[0].task_id}, {"annotator", "intruder"}, {"value", "yes"}})->status == 403);
  CHECK(post(client, {{"task_id", "t999-1"}, {"annotator", "ann0"}, {"value", "yes"}})->status == 404);
  CHECK(post(client, {{"task_id", tasks[0].task_id}, {"annotator", tasks[0].assigned_to}, {"value", "maybe"}})
            ->status == 400);
  CHECK(client.Post("/api/verdict", "{not json", "application/json")->status == 400);
  CHECK(client.Options("/api/verdict")->status == 204);

  // The four verdict values on the first four tasks.
  for (std::size_t i = 0; i < 4; ++i) {
    auto value = annotate::to_string(annotate::kAllVerdicts[i]);
    res = post(client, {{"task_id", tasks[i].task_id}, {"annotator", tasks[i].assigned_to}, {"value", value}});
    REQUIRE(res);
    CHECK(res->status == 200);
  }
  CHECK(Json::parse(client.Get(first)->body)["verdict"] == "yes");

  // 100 concurrent submissions to the remaining tasks.
  std::vector<std::future<int>> futures;
  for (std::size_t i = 4; i < 104; ++i) {
    futures.push_back(std::async(std::launch::async, [&, i] {
      httplib::Client c("127.0.0.1", port);
      auto r = post(c, {{"task_id", tasks[i].task_id}, {"annotator", tasks[i].assigned_to}, {"value", "yes"}});
      return r ? r->status : -1;
    }));
  }
  int ok = 0;
  for (auto& f : futures) ok += f.get() == 200;
  CHECK(ok == 100);
  CHECK(store.snapshot().size() == 104);
  CHECK(store.log_lines() == 104);

  auto report = Json::parse(client.Get("/api/report")->body);
  CHECK(report["submitted"] == 104);
  CHECK(report["counts"]["yes"] == 101);
  CHECK(report["counts"]["not_sure"] == 1);
  server.stop();

  annotate::VerdictStore replayed(dir.path() / "log.jsonl");
  CHECK(replayed.snapshot().size() == 104);
}
