#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "budgetseg/mask.hpp"

namespace budgetseg {

enum class DifficultyLevel { kEasy, kMedium, kHard };

std::string_view to_string(DifficultyLevel level) noexcept;
/// Accepts "easy" / "medium" / "hard" (any case).
DifficultyLevel parse_level(std::string_view text);

/// Judge-assigned aspect scores on the 1..10 scale.
struct DifficultyScore {
  double scene = 1.0;
  double segmentation = 1.0;
  double language = 1.0;

  /// Throws ValidationError when an aspect is outside [1, 10].
  static DifficultyScore from_aspects(double scene, double segmentation, double language);
  double composite() const noexcept { return (scene + segmentation + language) / 3.0; }
};

/// Token-budget and soft-penalty configuration. Defaults are the published
/// training constants.
struct BudgetPolicy {
  double tau1 = 5.0;
  double tau2 = 3.5;
  double l_base = 256.0;
  double alpha = 25.0;
  double l_low = 96.0;
  double beta = 0.002;
  std::optional<double> clamp_floor;

  void validate() const;
};

/// Pass/fail thresholds for the three accuracy sub-rewards.
struct RewardWeights {
  double iou_threshold = 0.5;
  double bbox_l1_threshold = 10.0;
  double point_l1_threshold = 100.0;

  void validate() const;
};

/// Box plus two interior points, the model's answer payload.
struct SegReference {
  BBox bbox;
  Point point1;
  Point point2;

  friend bool operator==(const SegReference&, const SegReference&) = default;
};

/// Canonical answer JSON, e.g. {"Bbox": [10,100,200,210], "Point 1": [30,110], "Point 2": [35,180]}.
std::string to_answer_json(const SegReference& ref);

/// Strict parse of an answer object. Returns nullopt unless all three keys are
/// present with integer arrays of the right arity and the box is well ordered.
std::optional<SegReference> parse_answer_json(std::string_view text);

struct ParsedOutput {
  std::string think;
  std::optional<SegReference> answer;
  int format_reason = 0;
  int format_seg = 0;
};

/// Never throws. Structural problems show up as zero format rewards.
ParsedOutput parse_output(std::string_view text);

struct AccuracyReward {
  int acc_iou = 0;
  int acc_bbox = 0;
  int acc_point = 0;

  int total() const noexcept { return acc_iou + acc_bbox + acc_point; }
};

struct RewardBreakdown {
  int format_reason = 0;
  int format_seg = 0;
  int acc_iou = 0;
  int acc_bbox = 0;
  int acc_point = 0;
  double r_original = 0.0;
  std::optional<double> budget;
  double s = 1.0;
  double r_final = 0.0;
};

/// Hard iff D >= tau1, Easy iff D < tau2, Medium otherwise.
DifficultyLevel level_of(double difficulty, const BudgetPolicy& policy);

/// Hard: l_base + alpha * U. Easy: l_low. Medium: unconstrained (nullopt).
std::optional<double> token_budget(double difficulty, double uncertainty,
                                   const BudgetPolicy& policy);

/// Multiplier applied to the original reward; linear decay of slope -beta past
/// the budget, optionally floored.
double soft_penalty(double tokens_used, std::optional<double> budget,
                    const BudgetPolicy& policy);

AccuracyReward accuracy_reward(const SegReference& pred, const Mask& pred_mask,
                               const SegReference& gt, const Mask& gt_mask,
                               const RewardWeights& weights);

/// Everything final_reward needs about one rollout besides the policy knobs.
struct RewardInputs {
  ParsedOutput output;
  Mask pred_mask;
  SegReference gt;
  Mask gt_mask;
  double tokens_used = 0.0;
  double difficulty = 1.0;
  double uncertainty = 0.0;
};

/// Original reward (format + accuracy), scaled by the soft length penalty.
RewardBreakdown final_reward(const RewardInputs& in, const BudgetPolicy& policy,
                             const RewardWeights& weights);

/// Composes the reward from already-decided sub-rewards; used by the toy
/// trainer, which has no masks.
RewardBreakdown compose_reward(int format_reason, int format_seg, const AccuracyReward& acc,
                               double tokens_used, double difficulty, double uncertainty,
                               const BudgetPolicy& policy);

}  // namespace budgetseg
