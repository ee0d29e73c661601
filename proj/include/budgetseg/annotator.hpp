#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "budgetseg/judge.hpp"
#include "budgetseg/mask.hpp"
#include "budgetseg/reward.hpp"

namespace budgetseg {

/// One benchmark sample with its difficulty label and reference chains.
struct SampleAnnotation {
  std::string sample_id;
  std::string image;
  std::string expression;
  std::optional<Mask> gt_mask;
  std::optional<SegReference> gt_answer;
  std::optional<DifficultyScore> difficulty;
  std::optional<DifficultyLevel> level;
  std::string short_chain;
  std::string long_chain;
};

/// Parses one annotation line. "gt_mask_path" is resolved against `base_dir`.
/// When both difficulty and level are present they must agree under `policy`.
SampleAnnotation parse_annotation(const std::string& line, const BudgetPolicy& policy,
                                  const std::filesystem::path& base_dir = {});
std::string to_annotation_json(const SampleAnnotation& sample);

/// Fixed spatial vocabulary used by textual_description; mirrors data/spatial_terms.txt.
const std::vector<std::string>& default_spatial_terms();
/// One term per line; blank lines and '#' comments ignored.
std::vector<std::string> load_spatial_terms(const std::filesystem::path& path);

/// Mask area fraction and centroid region, e.g.
/// "The target covers 12.50% of the image (medium), centered in the top-left region."
std::string visual_description(const Mask& mask);

/// Word count and spatial terms, e.g.
/// "The expression has 7 words and contains 2 spatial terms (left, behind)."
std::string textual_description(const std::string& expression,
                                std::span<const std::string> spatial_terms);

struct PromptDescriptors {
  std::string visual;
  std::string textual;
};

std::string build_difficulty_prompt(const std::string& expression,
                                    const PromptDescriptors& descriptors);
/// Derives both descriptors from the ground-truth mask and expression.
std::string build_difficulty_prompt(const SampleAnnotation& sample,
                                    std::span<const std::string> spatial_terms);

struct ChainPrompts {
  std::string short_prompt;
  std::string long_prompt;
};

ChainPrompts build_chain_prompts(const SampleAnnotation& sample);

std::string build_reasoning_prompt(const std::string& question, const std::string& reference,
                                   const std::string& predicted);

/// First brace-delimited object in `raw` holding every expected key. Accepts
/// JSON or single-quoted Python dict syntax and ignores surrounding prose and
/// code fences. Values must be numbers in [1, 10]; otherwise ParseError.
std::map<std::string, double> parse_score_dict(const std::string& raw,
                                               std::span<const std::string> expected_keys);

enum class ReferenceMode { kShort, kLong };
std::string_view to_string(ReferenceMode mode) noexcept;

/// Short chain for Easy and Medium, long chain for Hard.
ReferenceMode reference_mode_for(DifficultyLevel level) noexcept;

struct RScoreBreakdown {
  double completeness = 0.0;
  double grounding = 0.0;
  double fluency = 0.0;
  double rscore = 0.0;
  ReferenceMode reference_mode = ReferenceMode::kShort;

  static RScoreBreakdown from_scores(double completeness, double grounding, double fluency,
                                     ReferenceMode mode);
};

struct AnnotatorOptions {
  BudgetPolicy budget;
  RetryPolicy retry;
  /// Empty defers to the judge client's configured model.
  std::string model;
  double temperature = 0.0;
  std::vector<std::string> spatial_terms = default_spatial_terms();
  std::size_t max_in_flight = 4;
};

struct DifficultyResult {
  DifficultyScore score;
  DifficultyLevel level = DifficultyLevel::kEasy;
};

DifficultyResult score_difficulty(const SampleAnnotation& sample, JudgeClient& judge,
                                  const AnnotatorOptions& options);

/// Asks the judge for both reference chains.
std::pair<std::string, std::string> generate_chains(const SampleAnnotation& sample,
                                                    JudgeClient& judge,
                                                    const AnnotatorOptions& options);

/// Level of an annotated sample: the stored level, else derived from the difficulty.
DifficultyLevel level_of(const SampleAnnotation& sample, const BudgetPolicy& policy);

/// Scores `predicted` against the reference chain selected by the sample's level.
RScoreBreakdown score_reasoning(const std::string& predicted, const SampleAnnotation& sample,
                                JudgeClient& judge, const AnnotatorOptions& options);

struct AnnotateResult {
  std::vector<SampleAnnotation> samples;
  /// One entry per sample that failed; those samples are left unchanged.
  std::vector<std::string> errors;
};

/// Scores difficulty and (unless `with_chains` is false) generates chains for
/// every sample, with at most options.max_in_flight judge calls at once.
/// Output order matches input order.
AnnotateResult annotate_batch(std::span<const SampleAnnotation> samples, JudgeClient& judge,
                              const AnnotatorOptions& options, bool with_chains = true);

}  // namespace budgetseg
