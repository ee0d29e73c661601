#include "budgetseg/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

std::string_view to_string(DifficultyLevel level) noexcept {
  switch (level) {
    case DifficultyLevel::kEasy:
      return "easy";
    case DifficultyLevel::kMedium:
      return "medium";
    case DifficultyLevel::kHard:
      return "hard";
  }
  return "unknown";
}

DifficultyLevel parse_level(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "easy") return DifficultyLevel::kEasy;
  if (lower == "medium") return DifficultyLevel::kMedium;
  if (lower == "hard") return DifficultyLevel::kHard;
  throw ValidationError("unknown difficulty level '" + std::string(text) + "'");
}

namespace {

void require_unit_scale(double value, const char* what) {
  if (!(value >= 1.0 && value <= 10.0)) {
    throw ValidationError(std::string(what) + " must lie in [1, 10], got " +
                          std::to_string(value));
  }
}

}  // namespace

DifficultyScore DifficultyScore::from_aspects(double scene, double segmentation,
                                              double language) {
  require_unit_scale(scene, "scene score");
  require_unit_scale(segmentation, "segmentation score");
  require_unit_scale(language, "language score");
  return {scene, segmentation, language};
}

void BudgetPolicy::validate() const {
  if (!(tau2 <= tau1)) throw ValidationError("budget policy needs tau2 <= tau1");
  if (!(l_low <= l_base)) throw ValidationError("budget policy needs l_low <= l_base");
  if (!(alpha >= 0.0)) throw ValidationError("budget policy needs alpha >= 0");
  if (!(beta > 0.0)) throw ValidationError("budget policy needs beta > 0");
  if (clamp_floor && !std::isfinite(*clamp_floor)) {
    throw ValidationError("clamp_floor must be finite");
  }
}

void RewardWeights::validate() const {
  if (!(iou_threshold > 0.0) || !(bbox_l1_threshold > 0.0) || !(point_l1_threshold > 0.0)) {
    throw ValidationError("reward thresholds must be positive");
  }
}

std::string to_answer_json(const SegReference& ref) {
  const auto& b = ref.bbox;
  return "{\"Bbox\": [" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," +
         std::to_string(b.x2) + "," + std::to_string(b.y2) + "], \"Point 1\": [" +
         std::to_string(ref.point1.x) + "," + std::to_string(ref.point1.y) +
         "], \"Point 2\": [" + std::to_string(ref.point2.x) + "," +
         std::to_string(ref.point2.y) + "]}";
}

namespace {

bool read_ints(const nlohmann::json& obj, const char* key, std::size_t arity, int* out) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_array() || it->size() != arity) return false;
  for (std::size_t i = 0; i < arity; ++i) {
    const auto& v = (*it)[i];
    if (!v.is_number_integer()) return false;
    const auto wide = v.get<long long>();
    if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
      return false;
    }
    out[i] = static_cast<int>(wide);
  }
  return true;
}

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

}  // namespace

std::optional<SegReference> parse_answer_json(std::string_view text) {
  const auto payload = trim(text);
  const auto j = nlohmann::json::parse(payload.begin(), payload.end(), nullptr,
                                       /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  int box[4];
  int p1[2];
  int p2[2];
  if (!read_ints(j, "Bbox", 4, box) || !read_ints(j, "Point 1", 2, p1) ||
      !read_ints(j, "Point 2", 2, p2)) {
    return std::nullopt;
  }
  SegReference ref{{box[0], box[1], box[2], box[3]}, {p1[0], p1[1]}, {p2[0], p2[1]}};
  if (!ref.bbox.valid()) return std::nullopt;
  return ref;
}

ParsedOutput parse_output(std::string_view text) {
  ParsedOutput out;
  const auto think_open = text.find(kThinkOpen);
  const auto think_close = text.find(kThinkClose);
  const auto answer_open = text.find(kAnswerOpen);
  const auto answer_close = text.find(kAnswerClose);

  const bool think_ordered = think_open != std::string_view::npos &&
                             think_close != std::string_view::npos && think_open < think_close;
  if (think_ordered) {
    const auto begin = think_open + kThinkOpen.size();
    out.think = std::string(text.substr(begin, think_close - begin));
  }
  const bool single_think =
      count_of(text, kThinkOpen) == 1 && count_of(text, kThinkClose) == 1;
  const bool think_first = answer_open == std::string_view::npos || think_close < answer_open;
  out.format_reason = (think_ordered && single_think && think_first) ? 1 : 0;

  const bool single_answer =
      count_of(text, kAnswerOpen) == 1 && count_of(text, kAnswerClose) == 1;
  if (single_answer && answer_open < answer_close) {
    const auto begin = answer_open + kAnswerOpen.size();
    if (auto ref = parse_answer_json(text.substr(begin, answer_close - begin))) {
      out.answer = *ref;
      out.format_seg = 1;
    }
  }
  return out;
}

DifficultyLevel level_of(double difficulty, const BudgetPolicy& policy) {
  require_unit_scale(difficulty, "difficulty");
  if (difficulty >= policy.tau1) return DifficultyLevel::kHard;
  if (difficulty < policy.tau2) return DifficultyLevel::kEasy;
  return DifficultyLevel::kMedium;
}

std::optional<double> token_budget(double difficulty, double uncertainty,
                                   const BudgetPolicy& policy) {
  if (!(uncertainty >= 0.0 && uncertainty <= 1.0)) {
    throw ValidationError("uncertainty must lie in [0, 1], got " + std::to_string(uncertainty));
  }
  switch (level_of(difficulty, policy)) {
    case DifficultyLevel::kHard:
      return policy.l_base + policy.alpha * uncertainty;
    case DifficultyLevel::kEasy:
      return policy.l_low;
    case DifficultyLevel::kMedium:
      break;
  }
  return std::nullopt;
}

double soft_penalty(double tokens_used, std::optional<double> budget,
                    const BudgetPolicy& policy) {
  if (!budget || tokens_used <= *budget) return 1.0;
  double s = 1.0 - policy.beta * (tokens_used - *budget);
  if (policy.clamp_floor) s = std::max(s, *policy.clamp_floor);
  return s;
}

AccuracyReward accuracy_reward(const SegReference& pred, const Mask& pred_mask,
                               const SegReference& gt, const Mask& gt_mask,
                               const RewardWeights& weights) {
  const double mask_iou = iou(pred_mask, gt_mask).value;
  const double box_dist = bbox_l1(pred.bbox, gt.bbox);
  const double point_dist =
      (point_l1(pred.point1, gt.point1) + point_l1(pred.point2, gt.point2)) / 2.0;
  AccuracyReward acc;
  acc.acc_iou = mask_iou >= weights.iou_threshold ? 1 : 0;
  acc.acc_bbox = box_dist <= weights.bbox_l1_threshold ? 1 : 0;
  acc.acc_point = point_dist <= weights.point_l1_threshold ? 1 : 0;
  return acc;
}

RewardBreakdown compose_reward(int format_reason, int format_seg, const AccuracyReward& acc,
                               double tokens_used, double difficulty, double uncertainty,
                               const BudgetPolicy& policy) {
  if (tokens_used < 0.0) throw ValidationError("token count must be non-negative");
  RewardBreakdown r;
  r.format_reason = format_reason;
  r.format_seg = format_seg;
  r.acc_iou = acc.acc_iou;
  r.acc_bbox = acc.acc_bbox;
  r.acc_point = acc.acc_point;
  r.r_original = static_cast<double>(format_reason + format_seg + acc.total());
  r.budget = token_budget(difficulty, uncertainty, policy);
  r.s = soft_penalty(tokens_used, r.budget, policy);
  r.r_final = r.r_original * r.s;
  return r;
}

RewardBreakdown final_reward(const RewardInputs& in, const BudgetPolicy& policy,
                             const RewardWeights& weights) {
  if (!in.pred_mask.same_shape(in.gt_mask)) {
    throw ShapeError("predicted and ground-truth masks differ in shape");
  }
  AccuracyReward acc;
  if (in.output.format_seg == 1 && in.output.answer) {
    acc = accuracy_reward(*in.output.answer, in.pred_mask, in.gt, in.gt_mask, weights);
  }
  return compose_reward(in.output.format_reason, in.output.format_seg, acc, in.tokens_used,
                        in.difficulty, in.uncertainty, policy);
}

}  // namespace budgetseg
