#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "budgetseg/annotator.hpp"
#include "budgetseg/mask.hpp"
#include "budgetseg/reward.hpp"

namespace budgetseg {

struct ModelProfile {
  /// Parameter count in billions.
  double params_billions = 7.0;
  /// Weight of SAT against RST in URSS.
  double gamma = 0.7;

  void validate() const;
};

/// Segmentation accuracy per token: 100 * gIoU / (P * sqrt(T + 1)).
double sat(double giou_fraction, double params_billions, double mean_tokens);

/// Reasoning score per token: 10 * RScore / (P * sqrt(T + 1)).
double rst(double rscore, double params_billions, double mean_tokens);

/// (1 - gamma) * RST + gamma * SAT.
double urss(double rst_value, double sat_value, double gamma);

/// Count of whitespace-separated tokens; fallback when producers omit token_count.
std::size_t whitespace_token_count(std::string_view text);

struct PredictionRecord {
  std::string sample_id;
  std::string reasoning;
  std::optional<double> token_count;
  std::optional<SegReference> answer;
  std::optional<Mask> pred_mask;
  std::optional<std::string> trace;
};

PredictionRecord parse_prediction(const std::string& line,
                                  const std::filesystem::path& base_dir = {});

/// Per-sample reasoning scores from an offline file:
/// {"sample_id", "completeness", "grounding", "fluency"} per line.
struct OfflineScore {
  double completeness = 0.0;
  double grounding = 0.0;
  double fluency = 0.0;
};
std::map<std::string, OfflineScore> parse_offline_scores(const std::string& jsonl);

/// Produces the RScore of one prediction against its annotation.
using RScoreSource =
    std::function<RScoreBreakdown(const PredictionRecord&, const SampleAnnotation&, DifficultyLevel)>;

/// Looks scores up by sample id; the reference mode follows the level.
RScoreSource offline_rscore_source(std::map<std::string, OfflineScore> scores);

/// Asks `judge` through the annotator's reasoning-scoring prompt.
RScoreSource judge_rscore_source(JudgeClient& judge, AnnotatorOptions options);

struct StratumReport {
  std::size_t n = 0;
  double t_num = 0.0;
  double rscore = 0.0;
  double rst = 0.0;
  double giou = 0.0;
  double ciou = 0.0;
  double sat = 0.0;
  double urss = 0.0;
  IoUStats totals;
};

struct EvalReport {
  ModelProfile profile;
  std::array<std::optional<StratumReport>, 3> levels;
  std::optional<StratumReport> all;
  /// Records whose token count came from the whitespace fallback.
  std::size_t whitespace_token_fallbacks = 0;
  /// Unparseable input lines that were skipped.
  std::size_t skipped_records = 0;
};

struct EvalOutcome {
  EvalReport report;
  std::vector<std::string> warnings;
};

/// Aggregates per level and over all samples. Missing annotations, missing
/// ground-truth masks and RScore failures are collected into one ItemizedError.
/// The result does not depend on the order of `predictions`. `rscore` is
/// called from up to `max_in_flight` threads at once.
EvalOutcome evaluate(std::span<const PredictionRecord> predictions,
                     std::span<const SampleAnnotation> annotations, const ModelProfile& profile,
                     const RScoreSource& rscore, const BudgetPolicy& policy = {},
                     std::size_t max_in_flight = 1);

/// Reads both JSONL files; unparseable lines are skipped and counted.
EvalOutcome evaluate_files(const std::filesystem::path& predictions,
                           const std::filesystem::path& annotations, const ModelProfile& profile,
                           const RScoreSource& rscore, const BudgetPolicy& policy = {},
                           std::size_t max_in_flight = 1);

std::string render_text(const EvalReport& report);
std::string render_json(const EvalReport& report);
std::string render_csv(const EvalReport& report);
EvalReport parse_report_json(const std::string& text);

}  // namespace budgetseg
