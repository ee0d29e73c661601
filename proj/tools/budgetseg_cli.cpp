// budgetseg: batch evaluation, annotation, reward scoring and toy training.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "budgetseg/annotator.hpp"
#include "budgetseg/confidence.hpp"
#include "budgetseg/config.hpp"
#include "budgetseg/error.hpp"
#include "budgetseg/eval.hpp"
#include "budgetseg/grpo.hpp"
#include "budgetseg/judge.hpp"
#include "budgetseg/mask.hpp"
#include "budgetseg/reward.hpp"

namespace fs = std::filesystem;
using namespace budgetseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPartial = 3;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

ToolkitConfig config_from(const std::string& path) {
  return path.empty() ? ToolkitConfig{} : load_config(path);
}

std::unique_ptr<JudgeClient> make_judge(const std::string& offline_path) {
  if (!offline_path.empty()) {
    return std::make_unique<OfflineJudgeClient>(OfflineJudgeClient::from_file(offline_path));
  }
  return std::make_unique<HttpJudgeClient>(HttpJudgeConfig::from_env());
}

std::string fmt_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::vector<double> parse_bins(const std::string& text) {
  std::vector<double> bins;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v > 0.0)) {
      throw ValidationError("bad length bin '" + item + "'");
    }
    bins.push_back(v);
  }
  if (bins.size() < 2) throw ValidationError("need at least two length bins");
  return bins;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::string predictions;
  std::string annotations;
  std::string offline_scores;
  std::string config;
  std::optional<double> model_params;
  std::optional<double> gamma;
  std::string format = "text";
  std::string out;
  std::size_t max_in_flight = 4;
  bool reprompt = false;
};

int run_evaluate(const EvaluateArgs& a) {
  auto cfg = config_from(a.config);
  ModelProfile profile = cfg.model;
  if (a.model_params) profile.params_billions = *a.model_params;
  if (a.gamma) profile.gamma = *a.gamma;
  profile.validate();

  std::unique_ptr<JudgeClient> judge;
  RScoreSource source;
  std::size_t in_flight = 1;
  if (!a.offline_scores.empty()) {
    source = offline_rscore_source(parse_offline_scores(read_file(a.offline_scores)));
  } else {
    judge = make_judge("");
    AnnotatorOptions opts;
    opts.budget = cfg.budget;
    opts.max_in_flight = a.max_in_flight;
    opts.retry.reprompt_on_parse_error = a.reprompt;
    source = judge_rscore_source(*judge, opts);
    in_flight = a.max_in_flight;
  }

  const auto outcome =
      evaluate_files(a.predictions, a.annotations, profile, source, cfg.budget, in_flight);
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";

  std::string text;
  if (a.format == "json") {
    text = render_json(outcome.report);
  } else if (a.format == "csv") {
    text = render_csv(outcome.report);
  } else {
    text = render_text(outcome.report);
  }
  write_output(text, a.out);
  if (outcome.report.skipped_records > 0) {
    std::cerr << "skipped " << outcome.report.skipped_records << " unparseable record(s)\n";
    return kExitPartial;
  }
  return kExitOk;
}

// ---- annotate ------------------------------------------------------------

struct AnnotateArgs {
  std::string annotations;
  std::string out;
  std::string offline_responses;
  std::string config;
  std::string spatial_terms;
  std::size_t max_in_flight = 4;
  bool reprompt = false;
  bool skip_chains = false;
};

int run_annotate(const AnnotateArgs& a) {
  const auto cfg = config_from(a.config);
  AnnotatorOptions opts;
  opts.budget = cfg.budget;
  opts.max_in_flight = a.max_in_flight;
  opts.retry.reprompt_on_parse_error = a.reprompt;
  if (!a.spatial_terms.empty()) opts.spatial_terms = load_spatial_terms(a.spatial_terms);

  const fs::path base = fs::path(a.annotations).parent_path();
  std::vector<SampleAnnotation> samples;
  std::size_t skipped = 0;
  std::istringstream lines(read_file(a.annotations));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      samples.push_back(parse_annotation(line, cfg.budget, base));
    } catch (const Error& e) {
      std::cerr << "warning: line " << lineno << ": " << e.what() << "\n";
      ++skipped;
    }
  }

  auto judge = make_judge(a.offline_responses);
  const auto result = annotate_batch(samples, *judge, opts, !a.skip_chains);
  for (const auto& e : result.errors) std::cerr << "error: " << e << "\n";

  std::string text;
  for (const auto& s : result.samples) text += to_annotation_json(s) + "\n";
  write_output(text, a.out);
  return (skipped > 0 || !result.errors.empty()) ? kExitPartial : kExitOk;
}

// ---- reward --------------------------------------------------------------

struct RewardArgs {
  std::string output_text;
  std::string output_file;
  std::string gt_answer;
  std::string gt_mask_rle;
  std::string pred_mask_rle;
  std::optional<double> tokens;
  double difficulty = 1.0;
  std::optional<double> uncertainty;
  std::string trace;
  std::string scope = "think";
  std::string config;
  bool json = false;
};

int run_reward(const RewardArgs& a) {
  const auto cfg = config_from(a.config);
  const std::string text = a.output_file.empty() ? a.output_text : read_file(a.output_file);

  const auto gt = parse_answer_json(a.gt_answer);
  if (!gt) throw ValidationError("--gt-answer is not a valid answer dictionary");
  const Mask gt_mask = Mask::from_rle(a.gt_mask_rle);
  const Mask pred_mask = a.pred_mask_rle.empty() ? gt_mask : Mask::from_rle(a.pred_mask_rle);

  double u = a.uncertainty.value_or(0.0);
  if (!a.trace.empty()) {
    const auto scope =
        a.scope == "full" ? UncertaintyScope::kFullTrace : UncertaintyScope::kThinkBlock;
    u = uncertainty(parse_trace_record(read_file(a.trace)), scope);
  }

  RewardInputs in{parse_output(text), pred_mask, *gt, gt_mask, 0.0, a.difficulty, u};
  if (a.tokens) {
    in.tokens_used = *a.tokens;
  } else {
    in.tokens_used = static_cast<double>(whitespace_token_count(in.output.think));
  }
  const auto r = final_reward(in, cfg.budget, cfg.weights);
  const auto level = level_of(a.difficulty, cfg.budget);

  if (a.json) {
    nlohmann::ordered_json j;
    j["format_reason"] = r.format_reason;
    j["format_seg"] = r.format_seg;
    j["acc_iou"] = r.acc_iou;
    j["acc_bbox"] = r.acc_bbox;
    j["acc_point"] = r.acc_point;
    j["r_original"] = r.r_original;
    j["level"] = std::string(to_string(level));
    j["uncertainty"] = u;
    j["tokens_used"] = in.tokens_used;
    j["budget"] = r.budget ? nlohmann::ordered_json(*r.budget) : nlohmann::ordered_json(nullptr);
    j["s"] = r.s;
    j["r_final"] = r.r_final;
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  std::cout << "format_reason = " << r.format_reason << "\n"
            << "format_seg = " << r.format_seg << "\n"
            << "acc_iou = " << r.acc_iou << "\n"
            << "acc_bbox = " << r.acc_bbox << "\n"
            << "acc_point = " << r.acc_point << "\n"
            << "r_original = " << fmt_number(r.r_original) << "\n"
            << "level = " << to_string(level) << "\n"
            << "uncertainty = " << fmt_number(u) << "\n"
            << "tokens_used = " << fmt_number(in.tokens_used) << "\n"
            << "budget = " << (r.budget ? fmt_number(*r.budget) : std::string("none")) << "\n"
            << "s = " << fmt_number(r.s) << "\n"
            << "r_final = " << fmt_number(r.r_final) << "\n";
  return kExitOk;
}

// ---- simulate ------------------------------------------------------------

struct SimulateArgs {
  int steps = 2000;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> env_seed;
  std::size_t tasks_per_level = 20;
  std::optional<double> beta;
  std::string bins = "16,32,64,96,128,192,256,384,512";
  double format_logit = 2.0;
  std::string config;
  std::string out;
  bool quiet = false;
};

int run_simulate(const SimulateArgs& a) {
  auto cfg = config_from(a.config);
  auto sim = cfg.simulation;
  if (a.beta) {
    if (*a.beta < 0.0) throw ValidationError("--beta must be non-negative");
    if (*a.beta == 0.0) {
      sim.length_penalty = false;
    } else {
      sim.budget.beta = *a.beta;
      sim.length_penalty = true;
    }
  }
  const auto env = make_toy_environment(a.tasks_per_level, a.env_seed.value_or(a.seed), sim.budget);
  const ToyPolicy policy(parse_bins(a.bins), a.format_logit);
  const auto log = simulate_training(env, policy, sim, a.steps, a.seed);
  write_output(to_jsonl(log), a.out);
  if (!a.quiet && !a.out.empty() && a.out != "-") std::cerr << render_log_text(log, 0);
  return kExitOk;
}

// ---- report --------------------------------------------------------------

struct ReportArgs {
  std::string input;
  std::string format = "text";
  std::string out;
  int stride = 100;
};

int run_report(const ReportArgs& a) {
  const std::string text = read_file(a.input);
  // An EvalReport is one JSON document with a "strata" key; anything else is a training log.
  bool is_eval = false;
  {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    is_eval = !j.is_discarded() && j.is_object() && j.contains("strata");
  }
  std::string rendered;
  if (is_eval) {
    const auto report = parse_report_json(text);
    rendered = a.format == "json"  ? render_json(report)
               : a.format == "csv" ? render_csv(report)
                                   : render_text(report);
  } else {
    const auto log = parse_training_log(text);
    rendered = a.format == "json"  ? render_log_json(log)
               : a.format == "csv" ? render_log_csv(log)
                                   : render_log_text(log, a.stride);
  }
  write_output(rendered, a.out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Length-regulated reasoning segmentation: rewards, evaluation and toy training"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "budgetseg 0.1.0");

  const std::vector<std::string> formats = {"text", "json", "csv"};

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against annotations");
  evaluate->add_option("--predictions", ev.predictions, "Predictions JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--annotations", ev.annotations, "Annotations JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--offline-scores", ev.offline_scores,
                       "Precomputed reasoning scores JSONL (otherwise the HTTP judge is used)")
      ->check(CLI::ExistingFile);
  evaluate->add_option("--model-params", ev.model_params, "Model size P in billions");
  evaluate->add_option("--gamma", ev.gamma, "URSS weight of SAT");
  evaluate->add_option("--config", ev.config, "JSON config file")->check(CLI::ExistingFile);
  evaluate->add_option("--format", ev.format, "Report format")->check(CLI::IsMember(formats));
  evaluate->add_option("--out", ev.out, "Output file (default stdout)");
  evaluate->add_option("--max-in-flight", ev.max_in_flight, "Concurrent judge calls")->check(CLI::Range(1, 256));
  evaluate->add_flag("--reprompt-on-parse-error", ev.reprompt, "Re-ask the judge once on unparseable replies");

  AnnotateArgs an;
  auto* annotate = app.add_subcommand("annotate", "Score difficulty and generate reference chains");
  annotate->add_option("--annotations", an.annotations, "Input annotations JSONL")->required()->check(CLI::ExistingFile);
  annotate->add_option("--out", an.out, "Output JSONL (default stdout)");
  annotate->add_option("--offline-responses", an.offline_responses,
                       "Canned judge responses JSONL (otherwise the HTTP judge is used)")
      ->check(CLI::ExistingFile);
  annotate->add_option("--config", an.config, "JSON config file")->check(CLI::ExistingFile);
  annotate->add_option("--spatial-terms", an.spatial_terms, "Spatial vocabulary file")->check(CLI::ExistingFile);
  annotate->add_option("--max-in-flight", an.max_in_flight, "Concurrent judge calls")->check(CLI::Range(1, 256));
  annotate->add_flag("--reprompt-on-parse-error", an.reprompt, "Re-ask the judge once on unparseable replies");
  annotate->add_flag("--skip-chains", an.skip_chains, "Only score difficulty");

  RewardArgs rw;
  auto* reward = app.add_subcommand("reward", "Score one model output against ground truth");
  auto* text_opt = reward->add_option("--output-text", rw.output_text, "Model output text");
  auto* file_opt = reward->add_option("--output-file", rw.output_file, "File holding the model output")
                       ->check(CLI::ExistingFile);
  text_opt->excludes(file_opt);
  reward->add_option("--gt-answer", rw.gt_answer, "Ground-truth answer dictionary (JSON)")->required();
  reward->add_option("--gt-mask-rle", rw.gt_mask_rle, "Ground-truth mask as 'h w counts...'")->required();
  reward->add_option("--pred-mask-rle", rw.pred_mask_rle, "Predicted mask (default: the ground truth)");
  reward->add_option("--tokens", rw.tokens, "Reasoning tokens used (default: whitespace count of the think block)")
      ->check(CLI::NonNegativeNumber);
  reward->add_option("--difficulty", rw.difficulty, "Task difficulty D in [1, 10]")->required();
  auto* u_opt = reward->add_option("--uncertainty", rw.uncertainty, "Model uncertainty U in [0, 1]");
  auto* trace_opt = reward->add_option("--trace", rw.trace, "Confidence trace record (JSON)")
                        ->check(CLI::ExistingFile);
  u_opt->excludes(trace_opt);
  reward->add_option("--uncertainty-scope", rw.scope, "Trace steps used for U")
      ->check(CLI::IsMember({"think", "full"}));
  reward->add_option("--config", rw.config, "JSON config file")->check(CLI::ExistingFile);
  reward->add_flag("--json", rw.json, "Print the breakdown as JSON");

  SimulateArgs sm;
  auto* simulate = app.add_subcommand("simulate", "Run the toy GRPO length-regulation simulation");
  simulate->add_option("--steps", sm.steps, "Update steps")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sm.seed, "Training seed");
  simulate->add_option("--env-seed", sm.env_seed, "Environment seed (default: --seed)");
  simulate->add_option("--tasks-per-level", sm.tasks_per_level, "Toy tasks per difficulty level")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--beta", sm.beta, "Penalty slope override; 0 disables the length penalty");
  simulate->add_option("--bins", sm.bins, "Comma-separated reasoning-length bins");
  simulate->add_option("--format-logit", sm.format_logit, "Initial format logit");
  simulate->add_option("--config", sm.config, "JSON config file")->check(CLI::ExistingFile);
  simulate->add_option("--out", sm.out, "Training log JSONL (default stdout)");
  simulate->add_flag("--quiet", sm.quiet, "Do not print the summary to stderr");

  ReportArgs rp;
  auto* report = app.add_subcommand("report", "Render a training log or evaluation report");
  report->add_option("--input", rp.input, "Training log JSONL or report JSON")->required()->check(CLI::ExistingFile);
  report->add_option("--format", rp.format, "Output format")->check(CLI::IsMember(formats));
  report->add_option("--out", rp.out, "Output file (default stdout)");
  report->add_option("--stride", rp.stride, "Trajectory stride in the text rendering (0 hides it)")
      ->check(CLI::NonNegativeNumber);

  std::string config_path;
  auto* config = app.add_subcommand("config", "Print the effective configuration");
  config->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*evaluate) return run_evaluate(ev);
    if (*annotate) return run_annotate(an);
    if (*reward) {
      if (rw.output_text.empty() && rw.output_file.empty()) {
        std::cerr << "reward: one of --output-text or --output-file is required\n\n"
                  << reward->help();
        return kExitUsage;
      }
      return run_reward(rw);
    }
    if (*simulate) return run_simulate(sm);
    if (*report) return run_report(rp);
    if (*config) {
      std::cout << to_config_json(config_from(config_path));
      return kExitOk;
    }
  } catch (const ItemizedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
