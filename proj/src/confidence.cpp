#include "budgetseg/confidence.hpp"

#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

namespace {

// Absorbs rounding in producers that emit p1 + p2 == 1 through float math.
constexpr double kSumSlack = 1e-9;

}  // namespace

std::span<const TokenStep> ReasoningTrace::scoped(UncertaintyScope scope) const {
  std::span<const TokenStep> all(steps);
  if (scope == UncertaintyScope::kFullTrace || !think_span) return all;
  const auto [begin, end] = *think_span;
  if (begin >= end || end > steps.size()) {
    throw ValidationError("think_span [" + std::to_string(begin) + "," +
                          std::to_string(end) + ") does not fit a trace of " +
                          std::to_string(steps.size()) + " steps");
  }
  return all.subspan(begin, end - begin);
}

void validate_steps(std::span<const TokenStep> steps) {
  if (steps.empty()) throw ValidationError("reasoning trace is empty");
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const auto& s = steps[t];
    const bool ordered = s.p2 >= 0.0 && s.p2 <= s.p1 && s.p1 <= 1.0;
    if (!ordered || s.p1 + s.p2 > 1.0 + kSumSlack) {
      throw ValidationError("timestep " + std::to_string(t) +
                            ": expected 0 <= p2 <= p1 <= 1 and p1 + p2 <= 1, got p1=" +
                            std::to_string(s.p1) + " p2=" + std::to_string(s.p2));
    }
  }
}

double mean_margin(std::span<const TokenStep> steps) {
  validate_steps(steps);
  double sum = 0.0;
  for (const auto& s : steps) sum += s.p1 - s.p2;
  return sum / static_cast<double>(steps.size());
}

double uncertainty(std::span<const TokenStep> steps) { return 1.0 - mean_margin(steps); }

double uncertainty(const ReasoningTrace& trace, UncertaintyScope scope) {
  return uncertainty(trace.scoped(scope));
}

ReasoningTrace parse_trace_record(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trace record is not JSON: ") + e.what(), line);
  }
  if (!j.is_object() || !j.contains("steps") || !j["steps"].is_array()) {
    throw ParseError("trace record needs a 'steps' array", line);
  }
  ReasoningTrace trace;
  if (j.contains("id")) {
    trace.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  }
  for (const auto& step : j["steps"]) {
    if (!step.is_array() || step.size() != 2 || !step[0].is_number() || !step[1].is_number()) {
      throw ParseError("each step must be [p1, p2]", line);
    }
    trace.steps.push_back({step[0].get<double>(), step[1].get<double>()});
  }
  if (j.contains("think_span") && !j["think_span"].is_null()) {
    const auto& span = j["think_span"];
    if (!span.is_array() || span.size() != 2 || !span[0].is_number_unsigned() ||
        !span[1].is_number_unsigned()) {
      throw ParseError("think_span must be [begin, end] with non-negative integers", line);
    }
    trace.think_span = TokenSpan{span[0].get<std::size_t>(), span[1].get<std::size_t>()};
    trace.scoped(UncertaintyScope::kThinkBlock);  // range check
  }
  return trace;
}

std::string to_trace_record(const ReasoningTrace& trace) {
  nlohmann::json j;
  j["id"] = trace.id;
  j["steps"] = nlohmann::json::array();
  for (const auto& s : trace.steps) j["steps"].push_back({s.p1, s.p2});
  if (trace.think_span) j["think_span"] = {trace.think_span->begin, trace.think_span->end};
  return j.dump();
}

}  // namespace budgetseg
