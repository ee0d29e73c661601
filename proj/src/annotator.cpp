#include "budgetseg/annotator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string normalize_word(const std::string& w) {
  std::string out;
  for (unsigned char c : w) {
    if (std::isalnum(c) || c == '-') out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

// -- annotation records -------------------------------------------------------

SampleAnnotation parse_annotation(const std::string& line, const BudgetPolicy& policy,
                                  const std::filesystem::path& base_dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("annotation is not JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ParseError("annotation must be a JSON object", line);

  SampleAnnotation s;
  try {
    s.sample_id = j.at("sample_id").get<std::string>();
    s.image = j.value("image", std::string());
    s.expression = j.value("expression", std::string());
    s.short_chain = j.value("short_chain", std::string());
    s.long_chain = j.value("long_chain", std::string());
    if (j.contains("gt_mask_rle") && !j["gt_mask_rle"].is_null()) {
      s.gt_mask = Mask::from_rle(j["gt_mask_rle"].get<std::string>());
    } else if (j.contains("gt_mask_path") && !j["gt_mask_path"].is_null()) {
      s.gt_mask = Mask::from_rle(read_file(base_dir / j["gt_mask_path"].get<std::string>()));
    }
    if (j.contains("gt_answer") && !j["gt_answer"].is_null()) {
      s.gt_answer = parse_answer_json(j["gt_answer"].dump());
      if (!s.gt_answer) throw ParseError("gt_answer is not a valid answer object", line);
    }
    if (j.contains("difficulty") && !j["difficulty"].is_null()) {
      const auto& d = j["difficulty"];
      s.difficulty = DifficultyScore::from_aspects(d.at("scene").get<double>(),
                                                   d.at("segmentation").get<double>(),
                                                   d.at("language").get<double>());
    }
    if (j.contains("level") && !j["level"].is_null()) {
      s.level = parse_level(j["level"].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("annotation field error: ") + e.what(), line);
  }

  if (s.difficulty) {
    const auto derived = level_of(s.difficulty->composite(), policy);
    if (s.level && *s.level != derived) {
      throw ValidationError(s.sample_id + ": level '" + std::string(to_string(*s.level)) +
                            "' disagrees with difficulty " +
                            format_fixed(s.difficulty->composite(), 2) + " ('" +
                            std::string(to_string(derived)) + "')");
    }
    s.level = derived;
  }
  return s;
}

std::string to_annotation_json(const SampleAnnotation& s) {
  nlohmann::ordered_json j;
  j["sample_id"] = s.sample_id;
  j["image"] = s.image;
  j["expression"] = s.expression;
  if (s.gt_mask) j["gt_mask_rle"] = s.gt_mask->to_rle();
  if (s.gt_answer) j["gt_answer"] = nlohmann::ordered_json::parse(to_answer_json(*s.gt_answer));
  if (s.difficulty) {
    j["difficulty"] = {{"scene", s.difficulty->scene},
                       {"segmentation", s.difficulty->segmentation},
                       {"language", s.difficulty->language}};
  }
  if (s.level) j["level"] = std::string(to_string(*s.level));
  j["short_chain"] = s.short_chain;
  j["long_chain"] = s.long_chain;
  return j.dump();
}

// -- descriptors ---------------------------------------------------------------

const std::vector<std::string>& default_spatial_terms() {
  static const std::vector<std::string> terms = {
      "left",       "right",     "top",      "bottom",    "above",     "below",
      "behind",     "front",     "in front of", "next to", "beside",   "near",
      "between",    "under",     "underneath", "over",    "middle",    "center",
      "centre",     "corner",    "far",      "closest",   "nearest",   "farthest",
      "leftmost",   "rightmost", "upper",    "lower",     "inside",    "outside",
      "background", "foreground", "on top of", "edge",    "side",      "across"};
  return terms;
}

std::vector<std::string> load_spatial_terms(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> terms;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    terms.push_back(line.substr(first, last - first + 1));
  }
  return terms;
}

std::string visual_description(const Mask& mask) {
  const auto area = mask.count();
  if (area == 0) return "The target mask is empty.";
  double sx = 0.0;
  double sy = 0.0;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y)) {
        sx += x + 0.5;
        sy += y + 0.5;
      }
    }
  }
  const double fraction = static_cast<double>(area) / static_cast<double>(mask.size());
  const double cx = sx / static_cast<double>(area) / mask.width();
  const double cy = sy / static_cast<double>(area) / mask.height();

  const char* size = fraction < 0.01   ? "tiny"
                     : fraction < 0.10 ? "small"
                     : fraction < 0.30 ? "medium"
                                       : "large";
  const auto third = [](double v) { return v < 1.0 / 3.0 ? 0 : (v < 2.0 / 3.0 ? 1 : 2); };
  static const char* rows[] = {"top", "middle", "bottom"};
  static const char* cols[] = {"left", "center", "right"};
  const int r = third(cy);
  const int c = third(cx);
  const std::string region =
      (r == 1 && c == 1) ? "center" : std::string(rows[r]) + "-" + cols[c];

  return "The target covers " + format_fixed(100.0 * fraction, 2) + "% of the image (" + size +
         "), centered in the " + region + " region.";
}

std::string textual_description(const std::string& expression,
                                std::span<const std::string> spatial_terms) {
  const auto raw_words = words_of(expression);
  std::vector<std::string> words;
  for (const auto& w : raw_words) words.push_back(normalize_word(w));

  std::vector<std::vector<std::string>> phrases;
  for (const auto& term : spatial_terms) {
    std::vector<std::string> p;
    for (const auto& w : words_of(term)) p.push_back(normalize_word(w));
    if (!p.empty()) phrases.push_back(std::move(p));
  }
  std::stable_sort(phrases.begin(), phrases.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  std::vector<std::string> found;
  for (std::size_t i = 0; i < words.size();) {
    std::size_t consumed = 0;
    for (const auto& p : phrases) {
      if (i + p.size() <= words.size() && std::equal(p.begin(), p.end(), words.begin() + i)) {
        std::string joined;
        for (const auto& w : p) joined += (joined.empty() ? "" : " ") + w;
        found.push_back(joined);
        consumed = p.size();
        break;
      }
    }
    i += consumed ? consumed : 1;
  }

  std::string out = "The expression has " + std::to_string(raw_words.size()) +
                    (raw_words.size() == 1 ? " word" : " words");
  if (found.empty()) return out + " and contains no spatial terms.";
  out += " and contains " + std::to_string(found.size()) +
         (found.size() == 1 ? " spatial term (" : " spatial terms (");
  for (std::size_t i = 0; i < found.size(); ++i) out += (i ? ", " : "") + found[i];
  return out + ").";
}

// -- prompts ---------------------------------------------------------------------

namespace {

void require_text(const std::string& value, const char* what) {
  if (value.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError(std::string(what) + " is empty");
  }
}

}  // namespace

std::string build_difficulty_prompt(const std::string& expression,
                                    const PromptDescriptors& d) {
  require_text(expression, "expression");
  require_text(d.visual, "visual description");
  require_text(d.textual, "textual description");
  return "You are an expert in reasoning segmentation evaluation.\n\n"
         "Given the image and the referring expression: \"" + expression +
         "\", please assess the task difficulty based on the following three aspects:\n\n"
         "1. Scene Complexity:\n\n"
         "- How many objects are visible in the scene?\n\n"
         "- How many of them are potentially related or visually similar to the target?\n\n"
         "2. Segmentation Challenge:\n\n"
         "- What is the size and position of the target object?\n\n"
         "- Are there occlusions, overlaps, or visually similar objects nearby?\n\n"
         "- Is the mask describing the whole object or just a part?\n"
         "\"" + d.visual + "\"\n\n"
         "3. Language Complexity:\n\n"
         "- Does the referring expression explicitly point to the target object?\n\n"
         "- Or does it require additional reasoning to infer which object is referred to?\n"
         "\"" + d.textual + "\"\n\n"
         "For each aspect, please provide a difficulty rating from 1 (very easy) to 10 (very hard), "
         "and summarize in the following Python dictionary format.\n\n"
         "i.e., {\"scene\": 4, \"segmentation\": 6, \"language\": 3}";
}

std::string build_difficulty_prompt(const SampleAnnotation& sample,
                                    std::span<const std::string> spatial_terms) {
  if (!sample.gt_mask) {
    throw ValidationError(sample.sample_id + ": ground-truth mask needed for the visual description");
  }
  require_text(sample.expression, "expression");
  return build_difficulty_prompt(
      sample.expression,
      {visual_description(*sample.gt_mask), textual_description(sample.expression, spatial_terms)});
}

ChainPrompts build_chain_prompts(const SampleAnnotation& sample) {
  require_text(sample.expression, "expression");
  const std::string lead =
      "You are an expert annotator for reasoning segmentation.\n\n"
      "Given the image and the referring expression: \"" + sample.expression + "\", ";
  const std::string target =
      sample.gt_mask ? "\n\nTarget hint: \"" + visual_description(*sample.gt_mask) + "\"" : "";
  ChainPrompts p;
  p.short_prompt = lead +
                   "write a short reasoning chain that states the essential visual cues and "
                   "identifies the target object with confidence." + target +
                   "\n\nAnswer in 1-2 sentences. Output only the reasoning.";
  p.long_prompt = lead +
                  "write a detailed reasoning chain that examines the scene, the candidate "
                  "objects and the cues that single out the target object." + target +
                  "\n\nUse a structured multi-step format, i.e., \"Step 1: ... Step 2: ... "
                  "Step 3: ...\", ending with the identified object. Output only the reasoning.";
  return p;
}

std::string build_reasoning_prompt(const std::string& question, const std::string& reference,
                                   const std::string& predicted) {
  require_text(question, "question");
  require_text(reference, "reference reasoning");
  return "You are an expert in evaluating reasoning quality for reasoning segmentation tasks.\n\n"
         "Given the following predicted reasoning and reference reasoning, please score the "
         "prediction in three aspects from 1 to 10:\n\n"
         "1. Completeness: Does it include all necessary steps and important information?\n\n"
         "2. Object Grounding: Is it aligned with the referred object in the question?\n\n"
         "3. Fluency & Clarity: Is the reasoning coherent, fluent, and grammatically correct?\n\n"
         "The question is: \"" + question + "\"\n\n"
         "Reference Reasoning: \"" + reference + "\"\n\n"
         "Predicted Reasoning: \"" + predicted + "\"\n\n"
         "Return a Python dictionary with keys \"completeness\", \"grounding\", and \"fluency\".\n\n"
         "i.e., {\"completeness\": 8, \"grounding\": 7, \"fluency\": 9}";
}

// -- score parsing -------------------------------------------------------------

namespace {

// Rewrites a single-quoted Python dict into JSON. Only quotes are touched.
std::string python_quotes_to_json(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  char quote = 0;
  for (char c : text) {
    if (quote == 0 && (c == '\'' || c == '"')) {
      quote = c;
      out.push_back('"');
    } else if (quote != 0 && c == quote) {
      quote = 0;
      out.push_back('"');
    } else if (quote == '\'' && c == '"') {
      out += "\\\"";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::optional<nlohmann::json> parse_object(const std::string& candidate) {
  auto j = nlohmann::json::parse(candidate, nullptr, false);
  if (j.is_discarded()) j = nlohmann::json::parse(python_quotes_to_json(candidate), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  return j;
}

}  // namespace

std::map<std::string, double> parse_score_dict(const std::string& raw,
                                               std::span<const std::string> expected_keys) {
  for (std::size_t open = raw.find('{'); open != std::string::npos;
       open = raw.find('{', open + 1)) {
    int depth = 0;
    std::size_t close = std::string::npos;
    for (std::size_t i = open; i < raw.size(); ++i) {
      if (raw[i] == '{') ++depth;
      if (raw[i] == '}' && --depth == 0) {
        close = i;
        break;
      }
    }
    if (close == std::string::npos) break;
    const auto obj = parse_object(raw.substr(open, close - open + 1));
    if (!obj) continue;
    const bool complete = std::all_of(expected_keys.begin(), expected_keys.end(),
                                      [&](const std::string& k) { return obj->contains(k); });
    if (!complete) continue;

    std::map<std::string, double> scores;
    for (const auto& key : expected_keys) {
      const auto& v = (*obj)[key];
      if (!v.is_number()) throw ParseError("score '" + key + "' is not a number", raw);
      const double score = v.get<double>();
      if (!(score >= 1.0 && score <= 10.0)) {
        throw ParseError("score '" + key + "' = " + v.dump() + " is outside [1, 10]", raw);
      }
      scores[key] = score;
    }
    return scores;
  }
  std::string keys;
  for (const auto& k : expected_keys) keys += (keys.empty() ? "" : ", ") + k;
  throw ParseError("no dictionary with keys {" + keys + "} in judge response", raw);
}

// -- scoring ---------------------------------------------------------------------

std::string_view to_string(ReferenceMode mode) noexcept {
  return mode == ReferenceMode::kLong ? "long" : "short";
}

ReferenceMode reference_mode_for(DifficultyLevel level) noexcept {
  return level == DifficultyLevel::kHard ? ReferenceMode::kLong : ReferenceMode::kShort;
}

RScoreBreakdown RScoreBreakdown::from_scores(double completeness, double grounding,
                                             double fluency, ReferenceMode mode) {
  for (double v : {completeness, grounding, fluency}) {
    if (!(v >= 1.0 && v <= 10.0)) {
      throw ValidationError("reasoning scores must lie in [1, 10], got " + std::to_string(v));
    }
  }
  return {completeness, grounding, fluency, (completeness + grounding + fluency) / 3.0, mode};
}

DifficultyResult score_difficulty(const SampleAnnotation& sample, JudgeClient& judge,
                                  const AnnotatorOptions& options) {
  static const std::vector<std::string> keys = {"scene", "segmentation", "language"};
  JudgeRequest request{sample.sample_id, "difficulty",
                       build_difficulty_prompt(sample, options.spatial_terms), options.model,
                       options.temperature};
  const auto scores = complete_and_parse(
      judge, request, options.retry, [](const std::string& raw) { return parse_score_dict(raw, keys); });
  DifficultyResult result;
  result.score = DifficultyScore::from_aspects(scores.at("scene"), scores.at("segmentation"),
                                               scores.at("language"));
  result.level = level_of(result.score.composite(), options.budget);
  return result;
}

std::pair<std::string, std::string> generate_chains(const SampleAnnotation& sample,
                                                    JudgeClient& judge,
                                                    const AnnotatorOptions& options) {
  const auto prompts = build_chain_prompts(sample);
  const auto ask = [&](const char* kind, const std::string& prompt) {
    auto text = complete_with_retry(
        judge, JudgeRequest{sample.sample_id, kind, prompt, options.model, options.temperature},
        options.retry);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw JudgeError(sample.sample_id, std::string(kind) + " is empty");
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
  };
  return {ask("short_chain", prompts.short_prompt), ask("long_chain", prompts.long_prompt)};
}

DifficultyLevel level_of(const SampleAnnotation& sample, const BudgetPolicy& policy) {
  if (sample.level) return *sample.level;
  if (sample.difficulty) return level_of(sample.difficulty->composite(), policy);
  throw ValidationError(sample.sample_id + ": sample has neither a level nor a difficulty score");
}

RScoreBreakdown score_reasoning(const std::string& predicted, const SampleAnnotation& sample,
                                JudgeClient& judge, const AnnotatorOptions& options) {
  static const std::vector<std::string> keys = {"completeness", "grounding", "fluency"};
  const auto mode = reference_mode_for(level_of(sample, options.budget));
  const auto& reference = mode == ReferenceMode::kLong ? sample.long_chain : sample.short_chain;
  if (reference.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ValidationError(sample.sample_id + ": missing " + std::string(to_string(mode)) +
                          " reference chain");
  }
  JudgeRequest request{sample.sample_id, "reasoning",
                       build_reasoning_prompt(sample.expression, reference, predicted),
                       options.model, options.temperature};
  const auto scores = complete_and_parse(
      judge, request, options.retry, [](const std::string& raw) { return parse_score_dict(raw, keys); });
  return RScoreBreakdown::from_scores(scores.at("completeness"), scores.at("grounding"),
                                      scores.at("fluency"), mode);
}

AnnotateResult annotate_batch(std::span<const SampleAnnotation> samples, JudgeClient& judge,
                              const AnnotatorOptions& options, bool with_chains) {
  AnnotateResult result;
  result.samples.assign(samples.begin(), samples.end());
  std::vector<std::string> failures(samples.size());

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      auto& s = result.samples[i];
      try {
        const auto d = score_difficulty(s, judge, options);
        if (with_chains) {
          auto [short_chain, long_chain] = generate_chains(s, judge, options);
          s.short_chain = std::move(short_chain);
          s.long_chain = std::move(long_chain);
        }
        s.difficulty = d.score;
        s.level = d.level;
      } catch (const Error& e) {
        result.samples[i] = samples[i];
        failures[i] = dynamic_cast<const JudgeError*>(&e)
                          ? std::string(e.what())
                          : samples[i].sample_id + ": " + e.what();
      }
    }
  };

  if (samples.empty()) return result;
  const std::size_t threads = std::clamp<std::size_t>(options.max_in_flight, 1, samples.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& f : failures) {
    if (!f.empty()) result.errors.push_back(std::move(f));
  }
  return result;
}

}  // namespace budgetseg
