#include <fstream>
#include <sstream>

#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "budgetseg/annotator.hpp"
#include "budgetseg/confidence.hpp"
#include "budgetseg/config.hpp"
#include "budgetseg/error.hpp"
#include "budgetseg/eval.hpp"
#include "budgetseg/grpo.hpp"
#include "budgetseg/judge.hpp"
#include "budgetseg/mask.hpp"
#include "budgetseg/reward.hpp"

namespace py = pybind11;
using namespace budgetseg;

namespace {

std::vector<TokenStep> to_steps(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<TokenStep> steps;
  steps.reserve(pairs.size());
  for (const auto& [p1, p2] : pairs) steps.push_back({p1, p2});
  return steps;
}

py::dict summary_dict(const TrainingSummary& s) {
  py::dict levels;
  for (auto level : {DifficultyLevel::kEasy, DifficultyLevel::kMedium, DifficultyLevel::kHard}) {
    const auto& l = s.levels[level_index(level)];
    if (!l) continue;
    py::dict d;
    d["tasks"] = l->tasks;
    d["expected_length"] = l->expected_length;
    d["expected_accuracy"] = l->expected_accuracy;
    levels[py::str(std::string(to_string(level)))] = d;
  }
  py::dict out;
  out["steps"] = s.steps;
  out["seed"] = s.seed;
  out["expected_accuracy"] = s.expected_accuracy;
  out["levels"] = levels;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Length-regulated reasoning segmentation toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<JudgeError>(m, "JudgeError", base.ptr());
  py::register_exception<ItemizedError>(m, "ItemizedError", base.ptr());

  // masks
  py::class_<IoUStats>(m, "IoUStats")
      .def(py::init<>())
      .def_readwrite("intersection", &IoUStats::intersection)
      .def_readwrite("union", &IoUStats::union_)
      .def("__repr__", [](const IoUStats& s) {
        return "IoUStats(intersection=" + std::to_string(s.intersection) +
               ", union=" + std::to_string(s.union_) + ")";
      });

  py::class_<Mask>(m, "Mask")
      .def(py::init<int, int>(), py::arg("width"), py::arg("height"))
      .def(py::init([](int w, int h, const std::vector<std::uint8_t>& bits) {
             return Mask(w, h, bits);
           }),
           py::arg("width"), py::arg("height"), py::arg("bits"))
      .def_property_readonly("width", &Mask::width)
      .def_property_readonly("height", &Mask::height)
      .def("at", &Mask::at)
      .def("set", &Mask::set, py::arg("x"), py::arg("y"), py::arg("on") = true)
      .def("count", &Mask::count)
      .def("bits", [](const Mask& mk) {
        return std::vector<std::uint8_t>(mk.bits().begin(), mk.bits().end());
      })
      .def_static("from_rle", &Mask::from_rle)
      .def("to_rle", &Mask::to_rle)
      .def(py::self == py::self);

  m.def("iou", [](const Mask& pred, const Mask& gt) { return iou(pred, gt).value; });
  m.def("iou_stats", &iou_stats);
  m.def("giou", [](const std::vector<std::pair<Mask, Mask>>& pairs) {
    return giou(std::span<const MaskPair>(pairs));
  });
  m.def("ciou", [](const std::vector<std::pair<Mask, Mask>>& pairs) {
    return ciou(std::span<const MaskPair>(pairs));
  });

  // confidence
  m.def("uncertainty",
        [](const std::vector<std::pair<double, double>>& steps) {
          const auto s = to_steps(steps);
          return uncertainty(std::span<const TokenStep>(s));
        },
        py::arg("steps"), "steps: list of (p1, p2) top-2 probabilities");
  m.def("mean_margin", [](const std::vector<std::pair<double, double>>& steps) {
    const auto s = to_steps(steps);
    return mean_margin(std::span<const TokenStep>(s));
  });

  // rewards
  py::enum_<DifficultyLevel>(m, "DifficultyLevel")
      .value("EASY", DifficultyLevel::kEasy)
      .value("MEDIUM", DifficultyLevel::kMedium)
      .value("HARD", DifficultyLevel::kHard);

  py::class_<BudgetPolicy>(m, "BudgetPolicy")
      .def(py::init<>())
      .def_readwrite("tau1", &BudgetPolicy::tau1)
      .def_readwrite("tau2", &BudgetPolicy::tau2)
      .def_readwrite("l_base", &BudgetPolicy::l_base)
      .def_readwrite("alpha", &BudgetPolicy::alpha)
      .def_readwrite("l_low", &BudgetPolicy::l_low)
      .def_readwrite("beta", &BudgetPolicy::beta)
      .def_readwrite("clamp_floor", &BudgetPolicy::clamp_floor)
      .def("validate", &BudgetPolicy::validate);

  py::class_<RewardWeights>(m, "RewardWeights")
      .def(py::init<>())
      .def_readwrite("iou_threshold", &RewardWeights::iou_threshold)
      .def_readwrite("bbox_l1_threshold", &RewardWeights::bbox_l1_threshold)
      .def_readwrite("point_l1_threshold", &RewardWeights::point_l1_threshold);

  py::class_<RewardBreakdown>(m, "RewardBreakdown")
      .def_readonly("format_reason", &RewardBreakdown::format_reason)
      .def_readonly("format_seg", &RewardBreakdown::format_seg)
      .def_readonly("acc_iou", &RewardBreakdown::acc_iou)
      .def_readonly("acc_bbox", &RewardBreakdown::acc_bbox)
      .def_readonly("acc_point", &RewardBreakdown::acc_point)
      .def_readonly("r_original", &RewardBreakdown::r_original)
      .def_readonly("budget", &RewardBreakdown::budget)
      .def_readonly("s", &RewardBreakdown::s)
      .def_readonly("r_final", &RewardBreakdown::r_final);

  m.def("level_of", py::overload_cast<double, const BudgetPolicy&>(&level_of),
        py::arg("difficulty"), py::arg("policy") = BudgetPolicy{});
  m.def("token_budget", &token_budget, py::arg("difficulty"), py::arg("uncertainty"),
        py::arg("policy") = BudgetPolicy{});
  m.def("soft_penalty", &soft_penalty, py::arg("tokens_used"), py::arg("budget"),
        py::arg("policy") = BudgetPolicy{});
  m.def("difficulty_composite", [](double scene, double seg, double lang) {
    return DifficultyScore::from_aspects(scene, seg, lang).composite();
  });
  m.def(
      "score_output",
      [](const std::string& text, const std::string& gt_answer, const std::string& gt_mask_rle,
         const std::optional<std::string>& pred_mask_rle, double tokens_used, double difficulty,
         double uncertainty, const BudgetPolicy& policy, const RewardWeights& weights) {
        const auto gt = parse_answer_json(gt_answer);
        if (!gt) throw ValidationError("gt_answer is not a valid answer dictionary");
        const Mask gt_mask = Mask::from_rle(gt_mask_rle);
        const Mask pred = pred_mask_rle ? Mask::from_rle(*pred_mask_rle) : gt_mask;
        RewardInputs in{parse_output(text), pred, *gt, gt_mask, tokens_used, difficulty,
                        uncertainty};
        return final_reward(in, policy, weights);
      },
      py::arg("text"), py::arg("gt_answer"), py::arg("gt_mask_rle"), py::kw_only(),
      py::arg("pred_mask_rle") = py::none(), py::arg("tokens_used"), py::arg("difficulty"),
      py::arg("uncertainty") = 0.0, py::arg("policy") = BudgetPolicy{},
      py::arg("weights") = RewardWeights{});

  // grpo
  m.def("group_advantages",
        [](const std::vector<double>& r, double eps) {
          return group_advantages(std::span<const double>(r), eps);
        },
        py::arg("rewards"), py::arg("epsilon") = 1e-8);
  m.def(
      "simulate",
      [](int steps, std::uint64_t seed, bool length_penalty, std::size_t tasks_per_level,
         const std::vector<double>& bins, double format_logit, const BudgetPolicy& policy) {
        SimulationConfig config;
        config.budget = policy;
        config.length_penalty = length_penalty;
        const auto env = make_toy_environment(tasks_per_level, seed, policy);
        const auto log = simulate_training(env, ToyPolicy(bins, format_logit), config, steps, seed);
        return summary_dict(log.summary);
      },
      py::arg("steps") = 2000, py::arg("seed") = 0, py::arg("length_penalty") = true,
      py::arg("tasks_per_level") = 20,
      py::arg("bins") = std::vector<double>{16, 32, 64, 96, 128, 192, 256, 384, 512},
      py::arg("format_logit") = 2.0, py::arg("policy") = BudgetPolicy{},
      "Toy GRPO run; returns the final policy's per-level summary.");

  // annotator
  m.def("parse_score_dict", [](const std::string& raw, const std::vector<std::string>& keys) {
    return parse_score_dict(raw, keys);
  });
  m.def("build_difficulty_prompt",
        [](const std::string& expression, const std::string& visual, const std::string& textual) {
          return build_difficulty_prompt(expression, PromptDescriptors{visual, textual});
        });
  m.def("build_reasoning_prompt", &build_reasoning_prompt);
  m.def("rscore", [](double c, double g, double f) {
    return RScoreBreakdown::from_scores(c, g, f, ReferenceMode::kShort).rscore;
  });

  // eval
  m.def("sat", &sat, py::arg("giou"), py::arg("params_billions"), py::arg("mean_tokens"));
  m.def("rst", &rst, py::arg("rscore"), py::arg("params_billions"), py::arg("mean_tokens"));
  m.def("urss", &urss, py::arg("rst"), py::arg("sat"), py::arg("gamma") = 0.7);
  m.def(
      "evaluate_offline",
      [](const std::filesystem::path& predictions, const std::filesystem::path& annotations,
         const std::filesystem::path& offline_scores, double params_billions, double gamma,
         const std::string& format) {
        std::ifstream in(offline_scores);
        if (!in) throw ValidationError("cannot open " + offline_scores.string());
        std::stringstream buf;
        buf << in.rdbuf();
        ModelProfile profile{params_billions, gamma};
        const auto outcome =
            evaluate_files(predictions, annotations, profile,
                           offline_rscore_source(parse_offline_scores(buf.str())));
        if (format == "json") return render_json(outcome.report);
        if (format == "csv") return render_csv(outcome.report);
        return render_text(outcome.report);
      },
      py::arg("predictions"), py::arg("annotations"), py::arg("offline_scores"),
      py::arg("params_billions") = 7.0, py::arg("gamma") = 0.7, py::arg("format") = "json");

  m.def("default_config_json", [] { return to_config_json(ToolkitConfig{}); });
}
