#include "tables.hpp"

#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "livemath/error.hpp"
#include "livemath/io.hpp"

namespace livemath::synth {

namespace {

std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Cells of one tabular line, with the trailing "\\" removed.
std::vector<std::string> cells(std::string line) {
  if (auto p = line.find("\\\\"); p != std::string::npos) line.resize(p);
  std::vector<std::string> out;
  std::stringstream in(line);
  for (std::string c; std::getline(in, c, '&');) out.push_back(trim(c));
  return out;
}

std::vector<std::string> lines_of(const std::filesystem::path& doc) {
  std::vector<std::string> out;
  std::stringstream in(read_file(doc));
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

bool is_rule(const std::string& line) {
  auto t = trim(line);
  return t.empty() || t[0] == '%' || t.rfind("\\midrule", 0) == 0 || t.rfind("\\toprule", 0) == 0;
}

}  // namespace

std::vector<DropRow> read_drop_rows(const std::filesystem::path& doc) {
  auto lines = lines_of(doc);
  std::vector<DropRow> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find("{Drop}") == std::string::npos) continue;
    for (std::size_t j = i + 1; j < lines.size() && lines[j].find("\\bottomrule") == std::string::npos;
         ++j) {
      if (is_rule(lines[j])) continue;
      auto c = cells(lines[j]);
      if (c.size() < 5 || c[2].empty() || !std::isdigit(static_cast<unsigned char>(c[2][0]))) continue;
      out.push_back({c[1], std::stod(c[2]), std::stod(c[3]), std::stod(c[4])});
    }
    break;
  }
  return out;
}

std::vector<CountTable> read_count_tables(const std::filesystem::path& doc) {
  auto lines = lines_of(doc);
  std::vector<CountTable> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto c = cells(lines[i]);
    if (c.size() < 3 || c[0] != "Count") continue;
    CountTable t;
    std::size_t h = i;
    while (h > 0 && lines[h].find("\\toprule") == std::string::npos) --h;
    auto header = cells(lines[h + 1]);
    if (header.empty() || header[0] != "Model") continue;  // not a per-model accuracy table
    if (header.size() > 1 && header[1] == "2023") {
      t.kind = TableKind::Months2023;
    } else if (header.size() > 1 && header[1] == "2024") {
      t.kind = TableKind::Months2024;
    } else if (lines[h + 1].find("Middle School") != std::string::npos) {
      t.kind = TableKind::Difficulty;
    } else if (lines[h + 1].find("equation") != std::string::npos) {
      t.kind = TableKind::AnswerType;
    } else {
      throw InputError(fmt::format("unrecognized count table at line {}", i + 1));
    }
    t.total = std::stoul(c[1]);
    for (std::size_t k = 2; k < c.size(); ++k) t.counts.push_back(std::stoul(c[k]));
    for (std::size_t j = i + 1; j < lines.size() && lines[j].find("\\bottomrule") == std::string::npos;
         ++j) {
      if (is_rule(lines[j])) continue;
      auto r = cells(lines[j]);
      if (r.size() != c.size()) continue;
      CountTable::Row row{r[0], std::stod(r[1]), {}};
      for (std::size_t k = 2; k < r.size(); ++k) row.acc.push_back(std::stod(r[k]));
      t.rows.push_back(std::move(row));
    }
    out.push_back(std::move(t));
  }
  return out;
}

const CountTable& table_of(const std::vector<CountTable>& tables, TableKind kind) {
  for (const auto& t : tables) {
    if (t.kind == kind) return t;
  }
  throw InputError("count table not found");
}

std::vector<std::string> slice_keys(TableKind kind) {
  std::vector<std::string> out;
  switch (kind) {
    case TableKind::Months2023:
      for (int m = 1; m <= 12; ++m) out.push_back(fmt::format("2023-{:02}", m));
      break;
    case TableKind::Months2024:
      for (int m = 1; m <= 8; ++m) out.push_back(fmt::format("2024-{:02}", m));
      break;
    case TableKind::Difficulty:
      for (auto d : ingest::kAllDifficulties) out.emplace_back(ingest::to_string(d));
      break;
    case TableKind::AnswerType:
      for (auto t : answer::kAllAnswerTypes) out.emplace_back(answer::to_string(t));
      break;
  }
  return out;
}

TableRun table_run(const CountTable& table, std::size_t row) {
  TableRun run;
  const auto& r = table.rows.at(row);
  bool months = table.kind == TableKind::Months2023 || table.kind == TableKind::Months2024;
  for (std::size_t s = 0; s < table.counts.size(); ++s) {
    auto correct = static_cast<std::size_t>(std::llround(r.acc[s] * table.counts[s] / 100.0));
    for (std::size_t k = 0; k < table.counts[s]; ++k) {
      bench::BenchItem item;
      item.question_id = fmt::format("s{}-{:04}", s, k);
      item.question_text = "q";
      item.final_answers = {"1"};
      int year = table.kind == TableKind::Months2023 ? 2023 : 2024;
      int month = months ? static_cast<int>(s) + 1 : 1 + static_cast<int>(k % 8);
      item.first_posted_at = make_timestamp(year, month, 1 + k % 28);
      item.month_bucket = month_bucket(item.first_posted_at);
      if (table.kind == TableKind::Difficulty) item.difficulty = ingest::kAllDifficulties[s];
      if (table.kind == TableKind::AnswerType) item.answer_type = answer::kAllAnswerTypes[s];
      run.bench.push_back(item);

      eval::GradedRecord g;
      g.prediction = {r.model, item.question_id, k < correct ? "\\boxed{1}" : "\\boxed{2}"};
      g.correct = k < correct;
      g.extracted_answer = k < correct ? "1" : "2";
      g.match_method = k < correct ? "string" : "numeric_value";
      run.graded.push_back(std::move(g));
    }
  }
  return run;
}

}  // namespace livemath::synth
