#include "livemath/eval.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/parallel.hpp"

namespace livemath::eval {

namespace {

struct Tally {
  std::size_t count = 0;
  std::size_t correct = 0;
};

double pct(std::size_t correct, std::size_t count) {
  return count == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(count);
}

SliceRow row(std::string key, const Tally& t) {
  return {std::move(key), t.count, t.correct, pct(t.correct, t.count)};
}

OrderedJson slice_json(const std::vector<SliceRow>& rows) {
  OrderedJson arr = OrderedJson::array();
  for (const auto& r : rows) {
    arr.push_back({{"key", r.key}, {"count", r.count}, {"correct", r.correct},
                   {"acc", round2(r.acc)}});
  }
  return arr;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed2(double v) { return fmt::format("{:.2f}", round2(v)); }

}  // namespace

GradedRecord grade(const PredictionRecord& pred, const bench::BenchItem& item) {
  GradedRecord g;
  g.prediction = pred;
  std::optional<answer::BoxedAnswer> box;
  try {
    box = answer::extract_boxed(pred.response_text);
  } catch (const ExtractError&) {
  }
  if (!box) {
    g.match_method = "no_box";
    return g;
  }
  g.extracted_answer = box->raw;
  std::string last_method;
  for (const auto& target : item.final_answers) {
    auto v = answer::equivalent(box->raw, target);
    last_method = answer::to_string(v.method);
    if (v.equivalent) {
      g.correct = true;
      g.match_method = last_method;
      g.matched_answer = target;
      return g;
    }
  }
  g.match_method = last_method;
  return g;
}

std::map<std::string, std::vector<PredictionRecord>> load_predictions(
    const std::filesystem::path& path) {
  std::map<std::string, std::vector<PredictionRecord>> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    ++line;
    try {
      PredictionRecord p{j.at("model").get<std::string>(), j.at("id").get<std::string>(),
                         j.at("response").get<std::string>()};
      out[p.model_id].push_back(std::move(p));
    } catch (const Json::exception& e) {
      throw InputError(fmt::format("prediction record {}: {}", line, e.what()));
    }
  }
  return out;
}

std::vector<GradedRecord> grade_model(const std::string& model_id,
                                      std::span<const PredictionRecord> predictions,
                                      std::span<const bench::BenchItem> bench, unsigned workers) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < bench.size(); ++i) index.emplace(bench[i].question_id, i);
  std::vector<const PredictionRecord*> by_item(bench.size(), nullptr);
  for (const auto& p : predictions) {
    auto it = index.find(p.question_id);
    if (it == index.end()) {
      throw InputError(fmt::format("model {} predicts unknown question_id '{}'", model_id,
                                   p.question_id));
    }
    if (by_item[it->second]) {
      throw InputError(fmt::format("model {} has duplicate predictions for question_id '{}'",
                                   model_id, p.question_id));
    }
    by_item[it->second] = &p;
  }
  std::vector<GradedRecord> out(bench.size());
  parallel_for(bench.size(), workers, [&](std::size_t i) {
    if (by_item[i]) {
      out[i] = grade(*by_item[i], bench[i]);
    } else {
      out[i].prediction = {model_id, bench[i].question_id, {}};
      out[i].match_method = "missing";
    }
  });
  return out;
}

MetricsReport aggregate(const std::string& model_id, std::span<const GradedRecord> graded,
                        std::span<const bench::BenchItem> bench) {
  std::set<std::string_view> bench_ids;
  for (const auto& item : bench) bench_ids.insert(item.question_id);
  std::unordered_map<std::string, const GradedRecord*> by_id;
  for (const auto& g : graded) {
    const auto& id = g.prediction.question_id;
    if (!bench_ids.count(id)) throw InputError("graded record for unknown question_id '" + id + "'");
    if (!by_id.emplace(id, &g).second) {
      throw InputError("duplicate graded record for question_id '" + id + "'");
    }
  }
  MetricsReport r;
  r.model_id = model_id;
  r.total = bench.size();
  std::map<std::string, Tally> months, years;
  std::map<ingest::Difficulty, Tally> difficulty;
  std::map<answer::AnswerType, Tally> types;
  for (const auto& item : bench) {
    auto it = by_id.find(item.question_id);
    bool correct = false;
    if (it == by_id.end() || it->second->match_method == "missing") {
      ++r.missing;
    } else {
      correct = it->second->correct;
    }
    for (Tally* t : {&months[item.month_bucket], &years[item.month_bucket.substr(0, 4)],
                     &difficulty[item.difficulty], &types[item.answer_type]}) {
      ++t->count;
      if (correct) ++t->correct;
    }
    if (correct) ++r.correct;
  }
  r.overall_acc = pct(r.correct, r.total);
  for (const auto& [k, t] : months) r.by_month.push_back(row(k, t));
  for (const auto& [k, t] : years) r.by_year.push_back(row(k, t));
  for (auto d : ingest::kAllDifficulties) {
    if (auto it = difficulty.find(d); it != difficulty.end()) {
      r.by_difficulty.push_back(row(std::string(ingest::to_string(d)), it->second));
    }
  }
  for (auto t : answer::kAllAnswerTypes) {
    if (auto it = types.find(t); it != types.end()) {
      r.by_answer_type.push_back(row(std::string(answer::to_string(t)), it->second));
    }
  }
  if (r.by_year.size() >= 2) r.drop_pct = drop_metric(r.by_year.front().acc, r.by_year.back().acc);
  return r;
}

std::optional<double> drop_metric(double acc_old, double acc_new) {
  if (!(acc_old > 0.0)) return std::nullopt;
  return round2(100.0 * (acc_old - acc_new) / acc_old);
}

OrderedJson MetricsReport::to_json() const {
  OrderedJson j;
  j["model_id"] = model_id;
  j["total"] = total;
  j["correct"] = correct;
  j["missing"] = missing;
  j["overall_acc"] = round2(overall_acc);
  j["drop_pct"] = drop_pct ? OrderedJson(*drop_pct) : OrderedJson(nullptr);
  j["by_year"] = slice_json(by_year);
  j["by_month"] = slice_json(by_month);
  j["by_difficulty"] = slice_json(by_difficulty);
  j["by_answer_type"] = slice_json(by_answer_type);
  return j;
}

namespace {

std::vector<SliceRow> slice_from_json(const Json& arr) {
  std::vector<SliceRow> out;
  for (const auto& r : arr) {
    SliceRow row;
    row.key = r.at("key").get<std::string>();
    row.count = r.at("count").get<std::size_t>();
    row.correct = r.at("correct").get<std::size_t>();
    if (row.correct > row.count) throw InputError("slice " + row.key + " has correct > count");
    row.acc = pct(row.correct, row.count);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

MetricsReport MetricsReport::from_json(const Json& j) {
  try {
    MetricsReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.total = j.at("total").get<std::size_t>();
    r.correct = j.at("correct").get<std::size_t>();
    r.missing = j.value("missing", std::size_t{0});
    if (r.correct > r.total) throw InputError("report " + r.model_id + " has correct > total");
    r.overall_acc = pct(r.correct, r.total);
    r.by_year = slice_from_json(j.value("by_year", Json::array()));
    r.by_month = slice_from_json(j.value("by_month", Json::array()));
    r.by_difficulty = slice_from_json(j.value("by_difficulty", Json::array()));
    r.by_answer_type = slice_from_json(j.value("by_answer_type", Json::array()));
    if (r.by_year.size() >= 2) {
      r.drop_pct = drop_metric(r.by_year.front().acc, r.by_year.back().acc);
    }
    return r;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed metrics report: ") + e.what());
  }
}

GradedRecord graded_from_json(const Json& j) {
  try {
    GradedRecord g;
    g.prediction.model_id = j.at("model").get<std::string>();
    g.prediction.question_id = j.at("id").get<std::string>();
    if (auto e = j.find("extracted_answer"); e != j.end() && e->is_string()) {
      g.extracted_answer = e->get<std::string>();
    }
    g.correct = j.at("correct").get<bool>();
    g.match_method = j.at("match_method").get<std::string>();
    if (auto m = j.find("matched_answer"); m != j.end() && m->is_string()) {
      g.matched_answer = m->get<std::string>();
    }
    if (g.correct && !g.extracted_answer) {
      throw InputError("graded record " + g.prediction.question_id + " is correct without an answer");
    }
    return g;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed graded record: ") + e.what());
  }
}

OrderedJson graded_to_json(const GradedRecord& g) {
  OrderedJson j;
  j["model"] = g.prediction.model_id;
  j["id"] = g.prediction.question_id;
  j["extracted_answer"] =
      g.extracted_answer ? OrderedJson(*g.extracted_answer) : OrderedJson(nullptr);
  j["correct"] = g.correct;
  j["match_method"] = g.match_method;
  j["matched_answer"] = g.matched_answer ? OrderedJson(*g.matched_answer) : OrderedJson(nullptr);
  return j;
}

std::string file_safe(std::string_view model_id) {
  std::string out;
  for (char c : model_id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '_' || c == '-';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::vector<MetricsReport> sort_for_leaderboard(std::span<const MetricsReport> reports) {
  std::vector<MetricsReport> out(reports.begin(), reports.end());
  std::sort(out.begin(), out.end(), [](const MetricsReport& a, const MetricsReport& b) {
    if (a.overall_acc != b.overall_acc) return a.overall_acc > b.overall_acc;
    return a.model_id < b.model_id;
  });
  return out;
}

std::string render_leaderboard_html(std::span<const MetricsReport> sorted) {
  std::set<std::string> months;
  for (const auto& r : sorted) {
    for (const auto& m : r.by_month) months.insert(m.key);
  }
  std::string html =
      "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
      "<title>Leaderboard</title>\n<style>\n"
      "body{font-family:sans-serif;margin:2em}\n"
      "table{border-collapse:collapse}\n"
      "th,td{border:1px solid #999;padding:4px 8px;text-align:right}\n"
      "td.model,th.model{text-align:left}\n"
      "</style>\n</head>\n<body>\n<h1>Leaderboard</h1>\n<table>\n<thead>\n<tr>"
      "<th>Rank</th><th class=\"model\">Model</th><th>Accuracy (%)</th><th>Items</th>";
  for (const auto& m : months) html += "<th>" + html_escape(m) + "</th>";
  html += "<th>Drop (%)</th></tr>\n</thead>\n<tbody>\n";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& r = sorted[i];
    html += fmt::format("<tr><td>{}</td><td class=\"model\">{}</td><td>{}</td><td>{}</td>", i + 1,
                        html_escape(r.model_id), fixed2(r.overall_acc), r.total);
    for (const auto& m : months) {
      auto it = std::find_if(r.by_month.begin(), r.by_month.end(),
                             [&](const SliceRow& s) { return s.key == m; });
      html += "<td>" + (it == r.by_month.end() ? std::string("-") : fixed2(it->acc)) + "</td>";
    }
    html += "<td>" + (r.drop_pct ? fixed2(*r.drop_pct) : std::string("-")) + "</td></tr>\n";
  }
  html += "</tbody>\n</table>\n</body>\n</html>\n";
  return html;
}

std::string render_trend_csv(const MetricsReport& report) {
  std::string csv = "month,accuracy\n";
  for (const auto& m : report.by_month) csv += fmt::format("{},{}\n", m.key, fixed2(m.acc));
  return csv;
}

LeaderboardFiles emit_leaderboard(std::span<const MetricsReport> reports,
                                  const std::filesystem::path& out_dir) {
  if (reports.empty()) throw ArgumentError("leaderboard needs at least one report");
  std::set<std::string> names;
  for (const auto& r : reports) {
    if (!names.insert(file_safe(r.model_id)).second) {
      throw ArgumentError("model ids collide after file-name sanitizing: " + r.model_id);
    }
  }
  auto sorted = sort_for_leaderboard(reports);
  OrderedJson models = OrderedJson::array();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    OrderedJson m;
    m["rank"] = i + 1;
    auto report = sorted[i].to_json();
    for (auto& [k, v] : report.items()) m[k] = v;
    models.push_back(std::move(m));
  }
  LeaderboardFiles files;
  files.json = out_dir / "leaderboard.json";
  files.html = out_dir / "leaderboard.html";
  write_file(files.json, dump_pretty(OrderedJson{{"models", models}}));
  write_file(files.html, render_leaderboard_html(sorted));
  for (const auto& r : sorted) {
    auto path = out_dir / ("trend_" + file_safe(r.model_id) + ".csv");
    write_file(path, render_trend_csv(r));
    files.trends.push_back(path);
  }
  return files;
}

}  // namespace livemath::eval
