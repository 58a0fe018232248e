#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "livemath/bench.hpp"
#include "livemath/io.hpp"

namespace livemath::eval {

struct PredictionRecord {
  std::string model_id;
  std::string question_id;
  std::string response_text;
};

struct GradedRecord {
  PredictionRecord prediction;
  std::optional<std::string> extracted_answer;
  bool correct = false;
  /// An equivalence method, "no_box" when the response has no usable box,
  /// "missing" when the model gave no prediction for the item.
  std::string match_method;
  std::optional<std::string> matched_answer;
};

/// Grades on the last box; correct iff it is equivalent to any final answer.
GradedRecord grade(const PredictionRecord& pred, const bench::BenchItem& item);

/// Predictions grouped by model, file order kept within each model.
std::map<std::string, std::vector<PredictionRecord>> load_predictions(
    const std::filesystem::path& path);

/// One record per bench item in bench order; items without a prediction are
/// graded incorrect with method "missing". Throws InputError on a duplicate
/// or unknown question_id, naming it.
std::vector<GradedRecord> grade_model(const std::string& model_id,
                                      std::span<const PredictionRecord> predictions,
                                      std::span<const bench::BenchItem> bench, unsigned workers = 1);

struct SliceRow {
  std::string key;
  std::size_t count = 0;
  std::size_t correct = 0;
  double acc = 0.0;  // percent, full precision
};

struct MetricsReport {
  std::string model_id;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t missing = 0;
  double overall_acc = 0.0;
  std::vector<SliceRow> by_month;
  std::vector<SliceRow> by_difficulty;
  std::vector<SliceRow> by_answer_type;
  std::vector<SliceRow> by_year;
  /// Drop from the earliest to the latest year bucket when there are two.
  std::optional<double> drop_pct;

  /// Accuracies rounded to 2 decimals.
  OrderedJson to_json() const;
  /// Recomputes accuracies from the counts. Throws InputError.
  static MetricsReport from_json(const Json& j);
};

/// `graded` must hold exactly one record per bench item (grade_model output).
/// Empty slices are omitted. Throws InputError on duplicate or unknown ids.
MetricsReport aggregate(const std::string& model_id, std::span<const GradedRecord> graded,
                        std::span<const bench::BenchItem> bench);

/// 100 * (old - new) / old rounded to 2 decimals; nullopt unless old > 0.
std::optional<double> drop_metric(double acc_old, double acc_new);

OrderedJson graded_to_json(const GradedRecord& g);
GradedRecord graded_from_json(const Json& j);  // throws InputError

/// Model ids reduced to [A-Za-z0-9._-] for file names.
std::string file_safe(std::string_view model_id);

struct LeaderboardFiles {
  std::filesystem::path json;
  std::filesystem::path html;
  std::vector<std::filesystem::path> trends;
};

/// leaderboard.json and leaderboard.html ordered by overall accuracy
/// descending then model id, plus trend_<model>.csv ("month,accuracy") per
/// model. Throws ArgumentError for no reports or clashing file names,
/// IoError when out_dir is unwritable.
LeaderboardFiles emit_leaderboard(std::span<const MetricsReport> reports,
                                  const std::filesystem::path& out_dir);

std::vector<MetricsReport> sort_for_leaderboard(std::span<const MetricsReport> reports);
std::string render_leaderboard_html(std::span<const MetricsReport> sorted);
std::string render_trend_csv(const MetricsReport& report);

}  // namespace livemath::eval
