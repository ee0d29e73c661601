#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace budgetseg {

/// Top-1 and top-2 token probabilities at one decoding step.
struct TokenStep {
  double p1 = 0.0;
  double p2 = 0.0;
};

/// Half-open token range [begin, end) covering the think block.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

enum class UncertaintyScope { kThinkBlock, kFullTrace };

/// Per-token confidence record for one generated output.
struct ReasoningTrace {
  std::string id;
  std::vector<TokenStep> steps;
  std::optional<TokenSpan> think_span;

  /// Steps the uncertainty is computed over. kThinkBlock falls back to the
  /// whole trace when no span was recorded.
  std::span<const TokenStep> scoped(UncertaintyScope scope) const;
};

/// Throws ValidationError naming the first offending timestep.
void validate_steps(std::span<const TokenStep> steps);

/// Average top-1/top-2 margin over the steps.
double mean_margin(std::span<const TokenStep> steps);

/// One minus the average top-1/top-2 margin; 0 is fully confident.
double uncertainty(std::span<const TokenStep> steps);

double uncertainty(const ReasoningTrace& trace,
                   UncertaintyScope scope = UncertaintyScope::kThinkBlock);

/// Parses one JSONL record: {"id": ..., "steps": [[p1,p2], ...], "think_span": [b,e]?}.
ReasoningTrace parse_trace_record(const std::string& line);
std::string to_trace_record(const ReasoningTrace& trace);

}  // namespace budgetseg
