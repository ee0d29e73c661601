#include "budgetseg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

void ModelProfile::validate() const {
  if (!(params_billions > 0.0)) throw ValidationError("model parameter count must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
}

namespace {

double efficiency_denominator(double params_billions, double mean_tokens) {
  if (!(params_billions > 0.0)) throw ValidationError("model parameter count must be positive");
  if (!(mean_tokens >= 0.0)) throw ValidationError("mean token count must be non-negative");
  return params_billions * std::sqrt(mean_tokens + 1.0);
}

}  // namespace

double sat(double giou_fraction, double params_billions, double mean_tokens) {
  return 100.0 * giou_fraction / efficiency_denominator(params_billions, mean_tokens);
}

double rst(double rscore, double params_billions, double mean_tokens) {
  return 10.0 * rscore / efficiency_denominator(params_billions, mean_tokens);
}

double urss(double rst_value, double sat_value, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
  return (1.0 - gamma) * rst_value + gamma * sat_value;
}

std::size_t whitespace_token_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

}  // namespace

PredictionRecord parse_prediction(const std::string& line, const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prediction is not JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("prediction must be a JSON object", line);
  PredictionRecord p;
  try {
    p.sample_id = j.at("sample_id").get<std::string>();
    p.reasoning = j.value("reasoning", std::string());
    if (j.contains("token_count") && !j["token_count"].is_null()) {
      const double n = j["token_count"].get<double>();
      if (!(n >= 0.0)) throw ParseError("token_count must be non-negative", line);
      p.token_count = n;
    }
    if (j.contains("answer") && !j["answer"].is_null()) {
      p.answer = parse_answer_json(j["answer"].dump());
    }
    if (j.contains("mask_rle") && !j["mask_rle"].is_null()) {
      p.pred_mask = Mask::from_rle(j["mask_rle"].get<std::string>());
    } else if (j.contains("mask_path") && !j["mask_path"].is_null()) {
      p.pred_mask = Mask::from_rle(read_file(base_dir / j["mask_path"].get<std::string>()));
    }
    if (j.contains("trace") && !j["trace"].is_null()) {
      p.trace = j["trace"].is_string() ? j["trace"].get<std::string>() : j["trace"].dump();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("prediction field error: ") + e.what(), line);
  }
  return p;
}

std::map<std::string, OfflineScore> parse_offline_scores(const std::string& jsonl) {
  std::map<std::string, OfflineScore> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out[j.at("sample_id").get<std::string>()] =
          OfflineScore{j.at("completeness").get<double>(), j.at("grounding").get<double>(),
                       j.at("fluency").get<double>()};
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("offline scores line " + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return out;
}

RScoreSource offline_rscore_source(std::map<std::string, OfflineScore> scores) {
  return [scores = std::move(scores)](const PredictionRecord& p, const SampleAnnotation&,
                                      DifficultyLevel level) {
    const auto it = scores.find(p.sample_id);
    if (it == scores.end()) throw ValidationError("no offline reasoning score");
    const auto& s = it->second;
    return RScoreBreakdown::from_scores(s.completeness, s.grounding, s.fluency,
                                        reference_mode_for(level));
  };
}

RScoreSource judge_rscore_source(JudgeClient& judge, AnnotatorOptions options) {
  return [&judge, options = std::move(options)](const PredictionRecord& p,
                                                const SampleAnnotation& a, DifficultyLevel level) {
    SampleAnnotation leveled = a;
    leveled.level = level;
    return score_reasoning(p.reasoning, leveled, judge, options);
  };
}

namespace {

struct ScoredSample {
  DifficultyLevel level;
  double tokens;
  double rscore;
  IoUStats stats;
};

StratumReport aggregate(const std::vector<const ScoredSample*>& samples,
                        const ModelProfile& profile) {
  StratumReport r;
  r.n = samples.size();
  double tokens = 0.0;
  double rscore = 0.0;
  std::vector<IoUStats> stats;
  stats.reserve(samples.size());
  for (const auto* s : samples) {
    tokens += s->tokens;
    rscore += s->rscore;
    stats.push_back(s->stats);
    r.totals += s->stats;
  }
  const double n = static_cast<double>(r.n);
  r.t_num = tokens / n;
  r.rscore = rscore / n;
  r.giou = giou(std::span<const IoUStats>(stats));
  r.ciou = ciou(std::span<const IoUStats>(stats));
  r.sat = sat(r.giou, profile.params_billions, r.t_num);
  r.rst = rst(r.rscore, profile.params_billions, r.t_num);
  r.urss = urss(r.rst, r.sat, profile.gamma);
  return r;
}

}  // namespace

EvalOutcome evaluate(std::span<const PredictionRecord> predictions,
                     std::span<const SampleAnnotation> annotations, const ModelProfile& profile,
                     const RScoreSource& rscore, const BudgetPolicy& policy,
                     std::size_t max_in_flight) {
  profile.validate();
  std::vector<std::string> problems;

  std::map<std::string, const SampleAnnotation*> by_id;
  for (const auto& a : annotations) {
    if (!by_id.emplace(a.sample_id, &a).second) {
      problems.push_back(a.sample_id + ": duplicate annotation");
    }
  }

  std::vector<const PredictionRecord*> ordered;
  for (const auto& p : predictions) ordered.push_back(&p);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });

  EvalOutcome outcome;
  outcome.report.profile = profile;
  struct Pending {
    const PredictionRecord* prediction;
    const SampleAnnotation* annotation;
    ScoredSample scored;
  };
  std::vector<Pending> pending;
  std::set<std::string> seen;
  for (const auto* p : ordered) {
    if (!seen.insert(p->sample_id).second) {
      problems.push_back(p->sample_id + ": duplicate prediction");
      continue;
    }
    const auto it = by_id.find(p->sample_id);
    if (it == by_id.end()) {
      problems.push_back(p->sample_id + ": no annotation");
      continue;
    }
    const auto& a = *it->second;
    try {
      if (!a.gt_mask) throw ValidationError("annotation has no ground-truth mask");
      const auto level = level_of(a, policy);
      const Mask pred = p->pred_mask ? *p->pred_mask : Mask(a.gt_mask->width(), a.gt_mask->height());
      ScoredSample s{level, 0.0, 0.0, iou_stats(pred, *a.gt_mask)};
      if (p->token_count) {
        s.tokens = *p->token_count;
      } else {
        s.tokens = static_cast<double>(whitespace_token_count(p->reasoning));
        ++outcome.report.whitespace_token_fallbacks;
      }
      pending.push_back({p, &a, s});
    } catch (const Error& e) {
      problems.push_back(p->sample_id + ": " + e.what());
    }
  }

  // Reasoning scores may come from a remote judge; fetch them with bounded concurrency.
  std::vector<std::string> score_errors(pending.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < pending.size(); i = next++) {
      auto& item = pending[i];
      try {
        item.scored.rscore = rscore(*item.prediction, *item.annotation, item.scored.level).rscore;
      } catch (const Error& e) {
        score_errors[i] = dynamic_cast<const JudgeError*>(&e)
                              ? std::string(e.what())
                              : item.prediction->sample_id + ": " + e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(pending.size(), 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  std::vector<ScoredSample> scored;
  for (std::size_t i = 0; i < pending.size(); ++i) {
    if (score_errors[i].empty()) {
      scored.push_back(pending[i].scored);
    } else {
      problems.push_back(std::move(score_errors[i]));
    }
  }
  std::sort(problems.begin(), problems.end());
  if (!problems.empty()) throw ItemizedError("evaluation inputs are inconsistent", problems);
  if (scored.empty()) throw ValidationError("no predictions to evaluate");

  std::array<std::vector<const ScoredSample*>, 3> strata;
  std::vector<const ScoredSample*> everything;
  for (const auto& s : scored) {
    strata[static_cast<std::size_t>(s.level)].push_back(&s);
    everything.push_back(&s);
  }
  for (std::size_t li = 0; li < strata.size(); ++li) {
    if (!strata[li].empty()) outcome.report.levels[li] = aggregate(strata[li], profile);
  }
  outcome.report.all = aggregate(everything, profile);
  if (outcome.report.whitespace_token_fallbacks > 0) {
    outcome.warnings.push_back(std::to_string(outcome.report.whitespace_token_fallbacks) +
                               " prediction(s) had no token_count; used whitespace token counts");
  }
  return outcome;
}

EvalOutcome evaluate_files(const std::filesystem::path& predictions,
                           const std::filesystem::path& annotations, const ModelProfile& profile,
                           const RScoreSource& rscore, const BudgetPolicy& policy,
                           std::size_t max_in_flight) {
  std::vector<std::string> warnings;
  std::size_t skipped = 0;

  std::vector<SampleAnnotation> anns;
  {
    std::istringstream in(read_file(annotations));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (blank(line)) continue;
      try {
        anns.push_back(parse_annotation(line, policy, annotations.parent_path()));
      } catch (const Error& e) {
        ++skipped;
        warnings.push_back(annotations.filename().string() + ":" + std::to_string(lineno) +
                           ": skipped: " + e.what());
      }
    }
  }
  std::vector<PredictionRecord> preds;
  {
    std::istringstream in(read_file(predictions));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (blank(line)) continue;
      try {
        preds.push_back(parse_prediction(line, predictions.parent_path()));
      } catch (const Error& e) {
        ++skipped;
        warnings.push_back(predictions.filename().string() + ":" + std::to_string(lineno) +
                           ": skipped: " + e.what());
      }
    }
  }

  auto outcome = evaluate(preds, anns, profile, rscore, policy, max_in_flight);
  outcome.report.skipped_records = skipped;
  warnings.insert(warnings.end(), outcome.warnings.begin(), outcome.warnings.end());
  outcome.warnings = std::move(warnings);
  return outcome;
}

// -- rendering ------------------------------------------------------------------

namespace {

constexpr std::array<const char*, 3> kLevelNames = {"easy", "medium", "hard"};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

nlohmann::ordered_json stratum_json(const StratumReport& s) {
  nlohmann::ordered_json j;
  j["n"] = s.n;
  j["t_num"] = s.t_num;
  j["rscore"] = s.rscore;
  j["rst"] = s.rst;
  j["giou"] = s.giou;
  j["ciou"] = s.ciou;
  j["sat"] = s.sat;
  j["urss"] = s.urss;
  j["intersection"] = s.totals.intersection;
  j["union"] = s.totals.union_;
  return j;
}

StratumReport stratum_from_json(const nlohmann::json& j) {
  StratumReport s;
  s.n = j.at("n").get<std::size_t>();
  s.t_num = j.at("t_num").get<double>();
  s.rscore = j.at("rscore").get<double>();
  s.rst = j.at("rst").get<double>();
  s.giou = j.at("giou").get<double>();
  s.ciou = j.at("ciou").get<double>();
  s.sat = j.at("sat").get<double>();
  s.urss = j.at("urss").get<double>();
  s.totals.intersection = j.value("intersection", std::uint64_t{0});
  s.totals.union_ = j.value("union", std::uint64_t{0});
  return s;
}

template <typename F>
void for_each_stratum(const EvalReport& report, F&& f) {
  for (std::size_t li = 0; li < report.levels.size(); ++li) f(kLevelNames[li], report.levels[li]);
  f("all", report.all);
}

}  // namespace

std::string render_text(const EvalReport& report) {
  std::ostringstream out;
  out << "model: P=" << fmt("%g", report.profile.params_billions)
      << "B  gamma=" << fmt("%.2f", report.profile.gamma) << "  token counts: "
      << (report.whitespace_token_fallbacks ? "mixed (" + std::to_string(report.whitespace_token_fallbacks) +
                                                  " whitespace fallbacks)"
                                            : std::string("producer"))
      << "  skipped: " << report.skipped_records << "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %5s %8s %7s %6s %8s %8s %6s %6s\n", "stratum", "n",
                "#Token", "RScore", "RST", "gIoU(%)", "cIoU(%)", "SAT", "URSS");
  out << line;
  for_each_stratum(report, [&](const char* name, const std::optional<StratumReport>& s) {
    if (!s) {
      std::snprintf(line, sizeof line, "%-8s %5s\n", name, "-");
    } else {
      std::snprintf(line, sizeof line, "%-8s %5zu %8.2f %7.2f %6.2f %8.2f %8.2f %6.2f %6.2f\n",
                    name, s->n, s->t_num, s->rscore, s->rst, 100.0 * s->giou, 100.0 * s->ciou,
                    s->sat, s->urss);
    }
    out << line;
  });
  return out.str();
}

std::string render_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["model"] = {{"params_billions", report.profile.params_billions},
                {"gamma", report.profile.gamma}};
  j["whitespace_token_fallbacks"] = report.whitespace_token_fallbacks;
  j["skipped_records"] = report.skipped_records;
  auto strata = nlohmann::ordered_json::object();
  for_each_stratum(report, [&](const char* name, const std::optional<StratumReport>& s) {
    strata[name] = s ? stratum_json(*s) : nlohmann::ordered_json(nullptr);
  });
  j["strata"] = strata;
  return j.dump(2) + "\n";
}

std::string render_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "stratum,n,t_num,rscore,rst,giou,ciou,sat,urss,intersection,union\n";
  for_each_stratum(report, [&](const char* name, const std::optional<StratumReport>& s) {
    if (!s) return;
    out << name << ',' << s->n;
    for (double v : {s->t_num, s->rscore, s->rst, s->giou, s->ciou, s->sat, s->urss}) {
      out << ',' << fmt("%.17g", v);
    }
    out << ',' << s->totals.intersection << ',' << s->totals.union_ << '\n';
  });
  return out.str();
}

EvalReport parse_report_json(const std::string& text) {
  EvalReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.profile.params_billions = j.at("model").at("params_billions").get<double>();
    r.profile.gamma = j.at("model").at("gamma").get<double>();
    r.whitespace_token_fallbacks = j.value("whitespace_token_fallbacks", std::size_t{0});
    r.skipped_records = j.value("skipped_records", std::size_t{0});
    const auto& strata = j.at("strata");
    for (std::size_t li = 0; li < kLevelNames.size(); ++li) {
      if (strata.contains(kLevelNames[li]) && !strata[kLevelNames[li]].is_null()) {
        r.levels[li] = stratum_from_json(strata[kLevelNames[li]]);
      }
    }
    if (strata.contains("all") && !strata["all"].is_null()) r.all = stratum_from_json(strata["all"]);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("not an evaluation report: ") + e.what(), text);
  }
  return r;
}

}  // namespace budgetseg
