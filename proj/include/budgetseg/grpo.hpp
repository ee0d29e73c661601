#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "budgetseg/reward.hpp"

namespace budgetseg {

/// (r_i - mean) / (std + epsilon) with the population standard deviation.
/// Throws ValidationError for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon = 1e-8);

inline constexpr std::size_t kNumLevels = 3;

inline std::size_t level_index(DifficultyLevel level) noexcept {
  return static_cast<std::size_t>(level);
}

/// Categorical choice of a reasoning length per difficulty level plus a
/// Bernoulli logit for producing a well-formatted answer.
class ToyPolicy {
 public:
  /// Uniform over the bins at every level.
  explicit ToyPolicy(std::vector<double> bin_lengths, double format_logit = 2.0);

  const std::vector<double>& bin_lengths() const noexcept { return bin_lengths_; }
  std::size_t num_bins() const noexcept { return bin_lengths_.size(); }

  std::span<const double> logits(DifficultyLevel level) const noexcept {
    return logits_[level_index(level)];
  }
  std::span<double> logits(DifficultyLevel level) noexcept { return logits_[level_index(level)]; }
  double format_logit() const noexcept { return format_logit_; }
  void set_format_logit(double v) noexcept { format_logit_ = v; }

  std::vector<double> probabilities(DifficultyLevel level) const;
  double format_probability() const noexcept;

  /// Flat parameter vector: level-major bin logits, then the format logit.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);
  std::size_t num_parameters() const noexcept { return kNumLevels * num_bins() + 1; }

 private:
  std::vector<double> bin_lengths_;
  std::array<std::vector<double>, kNumLevels> logits_;
  double format_logit_;
};

struct ToyTask {
  std::string id;
  double difficulty = 1.0;
  double uncertainty = 0.0;
  int answer_label = 0;
  int num_labels = 4;
};

/// Probability of a correct answer as a function of reasoning length:
/// 1 - (1 - floor) * exp(-length / (scale_per_difficulty * D)).
struct AccuracyCurve {
  double floor = 0.2;
  double scale_per_difficulty = 4.0;

  double probability(double length, double difficulty) const;
};

struct Rollout {
  std::string sample_id;
  DifficultyLevel level = DifficultyLevel::kEasy;
  std::size_t bin = 0;
  bool formatted = false;
  bool correct = false;
  double tokens_used = 0.0;
  double reward = 0.0;
};

/// Rollouts sampled for one prompt.
struct Group {
  std::vector<Rollout> rollouts;
};

/// Advantage-weighted log-likelihood of the sampled actions, averaged over all
/// rollouts, minus kl_coeff times the KL divergence from the reference summed
/// over levels and the format head.
double surrogate_objective(const ToyPolicy& policy, const ToyPolicy& reference,
                           std::span<const Group> groups, double kl_coeff,
                           double advantage_epsilon = 1e-8);

/// Analytic gradient of surrogate_objective w.r.t. ToyPolicy::parameters().
std::vector<double> surrogate_gradient(const ToyPolicy& policy, const ToyPolicy& reference,
                                       std::span<const Group> groups, double kl_coeff,
                                       double advantage_epsilon = 1e-8);

/// One gradient-ascent step on the surrogate.
ToyPolicy policy_update(const ToyPolicy& policy, const ToyPolicy& reference,
                        std::span<const Group> groups, double kl_coeff, double lr,
                        double advantage_epsilon = 1e-8);

struct SimulationConfig {
  BudgetPolicy budget;
  AccuracyCurve curve;
  std::size_t group_size = 8;
  std::size_t tasks_per_step = 4;
  double lr = 0.05;
  double kl_coeff = 1e-3;
  double advantage_epsilon = 1e-8;
  /// false trains on the unpenalized reward (the beta = 0 baseline); budget.beta is then ignored.
  bool length_penalty = true;

  void validate() const;
};

struct StepRecord {
  int step = 0;
  DifficultyLevel level = DifficultyLevel::kEasy;
  double mean_length = 0.0;
  double mean_reward = 0.0;
  double mean_accuracy = 0.0;
};

/// Expected behaviour of the final policy over the tasks of one level.
struct LevelSummary {
  std::size_t tasks = 0;
  double expected_length = 0.0;
  double expected_accuracy = 0.0;
};

struct TrainingSummary {
  std::array<std::optional<LevelSummary>, kNumLevels> levels;
  double expected_accuracy = 0.0;
  int steps = 0;
  std::uint64_t seed = 0;
};

struct TrainingLog {
  std::vector<StepRecord> records;
  TrainingSummary summary;
};

/// Tasks spread evenly over the three levels with difficulty-correlated
/// uncertainty. Deterministic in seed.
std::vector<ToyTask> make_toy_environment(std::size_t tasks_per_level, std::uint64_t seed,
                                          const BudgetPolicy& budget = {});

/// Expected length/accuracy of `policy` on each level of `env`.
TrainingSummary summarize_policy(const ToyPolicy& policy, std::span<const ToyTask> env,
                                 const SimulationConfig& config);

/// Runs `steps` on-policy updates. Identical inputs give identical logs.
TrainingLog simulate_training(std::span<const ToyTask> env, const ToyPolicy& policy,
                              const SimulationConfig& config, int steps, std::uint64_t seed);

/// One JSON object per line: step records, then a record with "summary": true.
std::string to_jsonl(const TrainingLog& log);
TrainingLog parse_training_log(const std::string& jsonl);

/// Final per-level summary plus a coarse trajectory (every `stride` steps).
std::string render_log_text(const TrainingLog& log, int stride = 100);
/// Full-precision renderings of every record and the summary.
std::string render_log_json(const TrainingLog& log);
std::string render_log_csv(const TrainingLog& log);

}  // namespace budgetseg
