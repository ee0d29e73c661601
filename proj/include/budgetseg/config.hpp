#pragma once

#include <filesystem>
#include <string>

#include "budgetseg/eval.hpp"
#include "budgetseg/grpo.hpp"
#include "budgetseg/reward.hpp"

namespace budgetseg {

/// Everything a run can be configured with. Defaults are the published
/// training and evaluation constants.
struct ToolkitConfig {
  BudgetPolicy budget;
  RewardWeights weights;
  ModelProfile model;
  SimulationConfig simulation;
};

/// JSON with optional sections "budget", "weights", "model", "simulation".
/// Missing keys keep their defaults; unknown keys are rejected.
ToolkitConfig parse_config(const std::string& text);
ToolkitConfig load_config(const std::filesystem::path& path);
std::string to_config_json(const ToolkitConfig& config);

}  // namespace budgetseg
