#include "budgetseg/grpo.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
  if (rewards.size() < 2) {
    throw ValidationError("group advantages need at least two rewards");
  }
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);

  std::vector<double> out(rewards.size(), 0.0);
  // A constant group carries no preference; the mean may still differ from the
  // members by rounding, which epsilon alone would amplify.
  const bool constant = std::all_of(rewards.begin(), rewards.end(),
                                    [&](double r) { return r == rewards.front(); });
  if (constant) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out[i] = (rewards[i] - mean) / (std_dev + epsilon);
  }
  return out;
}

ToyPolicy::ToyPolicy(std::vector<double> bin_lengths, double format_logit)
    : bin_lengths_(std::move(bin_lengths)), format_logit_(format_logit) {
  if (bin_lengths_.size() < 2) throw ValidationError("toy policy needs at least two length bins");
  for (double len : bin_lengths_) {
    if (!(len >= 0.0)) throw ValidationError("length bins must be non-negative");
  }
  for (auto& l : logits_) l.assign(bin_lengths_.size(), 0.0);
}

std::vector<double> ToyPolicy::probabilities(DifficultyLevel level) const {
  const auto& z = logits_[level_index(level)];
  const double peak = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - peak);
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return p;
}

double ToyPolicy::format_probability() const noexcept {
  return 1.0 / (1.0 + std::exp(-format_logit_));
}

std::vector<double> ToyPolicy::parameters() const {
  std::vector<double> out;
  out.reserve(num_parameters());
  for (const auto& l : logits_) out.insert(out.end(), l.begin(), l.end());
  out.push_back(format_logit_);
  return out;
}

void ToyPolicy::set_parameters(std::span<const double> params) {
  if (params.size() != num_parameters()) {
    throw ValidationError("expected " + std::to_string(num_parameters()) + " parameters, got " +
                          std::to_string(params.size()));
  }
  std::size_t i = 0;
  for (auto& l : logits_) {
    for (auto& z : l) z = params[i++];
  }
  format_logit_ = params[i];
}

double AccuracyCurve::probability(double length, double difficulty) const {
  const double scale = scale_per_difficulty * difficulty;
  return 1.0 - (1.0 - floor) * std::exp(-length / scale);
}

namespace {

void require_compatible(const ToyPolicy& policy, const ToyPolicy& reference) {
  if (policy.bin_lengths() != reference.bin_lengths()) {
    throw ValidationError("policy and reference use different length bins");
  }
}

void require_groups(std::span<const Group> groups) {
  if (groups.empty()) throw ValidationError("policy update needs at least one group");
  for (const auto& g : groups) {
    if (g.rollouts.size() < 2) throw ValidationError("every group needs at least two rollouts");
  }
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double categorical_kl(const std::vector<double>& p, const std::vector<double>& r) {
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) kl += p[k] * (std::log(p[k]) - std::log(r[k]));
  }
  return kl;
}

double bernoulli_kl(double logit, double ref_logit) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return p * (log_sigmoid(logit) - log_sigmoid(ref_logit)) +
         (1.0 - p) * (log_sigmoid(-logit) - log_sigmoid(-ref_logit));
}

std::vector<std::vector<double>> advantages_of(std::span<const Group> groups, double epsilon) {
  std::vector<std::vector<double>> out;
  out.reserve(groups.size());
  for (const auto& g : groups) {
    std::vector<double> rewards;
    rewards.reserve(g.rollouts.size());
    for (const auto& r : g.rollouts) rewards.push_back(r.reward);
    out.push_back(group_advantages(rewards, epsilon));
  }
  return out;
}

std::size_t rollout_count(std::span<const Group> groups) {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.rollouts.size();
  return n;
}

constexpr std::array<DifficultyLevel, kNumLevels> kLevels = {
    DifficultyLevel::kEasy, DifficultyLevel::kMedium, DifficultyLevel::kHard};

}  // namespace

double surrogate_objective(const ToyPolicy& policy, const ToyPolicy& reference,
                           std::span<const Group> groups, double kl_coeff,
                           double advantage_epsilon) {
  require_compatible(policy, reference);
  require_groups(groups);
  const auto adv = advantages_of(groups, advantage_epsilon);
  const double n = static_cast<double>(rollout_count(groups));

  std::array<std::vector<double>, kNumLevels> probs;
  for (auto level : kLevels) probs[level_index(level)] = policy.probabilities(level);

  double weighted = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
      const auto& r = groups[g].rollouts[i];
      const double log_len = std::log(probs[level_index(r.level)][r.bin]);
      const double log_fmt = r.formatted ? log_sigmoid(policy.format_logit())
                                         : log_sigmoid(-policy.format_logit());
      weighted += adv[g][i] * (log_len + log_fmt);
    }
  }

  double kl = bernoulli_kl(policy.format_logit(), reference.format_logit());
  for (auto level : kLevels) {
    kl += categorical_kl(probs[level_index(level)], reference.probabilities(level));
  }
  return weighted / n - kl_coeff * kl;
}

std::vector<double> surrogate_gradient(const ToyPolicy& policy, const ToyPolicy& reference,
                                       std::span<const Group> groups, double kl_coeff,
                                       double advantage_epsilon) {
  require_compatible(policy, reference);
  require_groups(groups);
  const auto adv = advantages_of(groups, advantage_epsilon);
  const double n = static_cast<double>(rollout_count(groups));
  const std::size_t bins = policy.num_bins();
  std::vector<double> grad(policy.num_parameters(), 0.0);
  const std::size_t fmt = grad.size() - 1;

  std::array<std::vector<double>, kNumLevels> probs;
  for (auto level : kLevels) probs[level_index(level)] = policy.probabilities(level);
  const double pf = policy.format_probability();

  // d/dz_j log softmax(z)_k = [j == k] - p_j ; d/dq log sigmoid(+-q) = f - sigmoid(q)
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].rollouts.size(); ++i) {
      const auto& r = groups[g].rollouts[i];
      const double a = adv[g][i] / n;
      if (a == 0.0) continue;
      const std::size_t li = level_index(r.level);
      const auto& p = probs[li];
      for (std::size_t j = 0; j < bins; ++j) {
        grad[li * bins + j] += a * ((j == r.bin ? 1.0 : 0.0) - p[j]);
      }
      grad[fmt] += a * ((r.formatted ? 1.0 : 0.0) - pf);
    }
  }

  if (kl_coeff != 0.0) {
    // d/dz_j KL(p||r) = p_j (log p_j - log r_j - KL)
    for (auto level : kLevels) {
      const std::size_t li = level_index(level);
      const auto& p = probs[li];
      const auto ref = reference.probabilities(level);
      const double kl = categorical_kl(p, ref);
      for (std::size_t j = 0; j < bins; ++j) {
        const double term = p[j] > 0.0 ? p[j] * (std::log(p[j]) - std::log(ref[j]) - kl) : 0.0;
        grad[li * bins + j] -= kl_coeff * term;
      }
    }
    // d/dq KL(Bern(sigmoid q) || Bern(sigmoid q_ref)) = sigmoid'(q) (q - q_ref)
    grad[fmt] -= kl_coeff * pf * (1.0 - pf) * (policy.format_logit() - reference.format_logit());
  }
  return grad;
}

ToyPolicy policy_update(const ToyPolicy& policy, const ToyPolicy& reference,
                        std::span<const Group> groups, double kl_coeff, double lr,
                        double advantage_epsilon) {
  if (!(kl_coeff >= 0.0)) throw ValidationError("kl_coeff must be non-negative");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  const auto grad = surrogate_gradient(policy, reference, groups, kl_coeff, advantage_epsilon);
  auto params = policy.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += lr * grad[i];
  ToyPolicy next = policy;
  next.set_parameters(params);
  return next;
}

void SimulationConfig::validate() const {
  if (length_penalty) {
    budget.validate();
  } else {
    auto b = budget;
    b.beta = BudgetPolicy{}.beta;
    b.validate();
  }
  if (group_size < 2) throw ValidationError("group_size must be at least 2");
  if (tasks_per_step < 1) throw ValidationError("tasks_per_step must be at least 1");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (!(kl_coeff >= 0.0)) throw ValidationError("kl_coeff must be non-negative");
  if (!(curve.floor >= 0.0 && curve.floor <= 1.0)) {
    throw ValidationError("accuracy floor must lie in [0, 1]");
  }
  if (!(curve.scale_per_difficulty > 0.0)) {
    throw ValidationError("accuracy scale must be positive");
  }
}

std::vector<ToyTask> make_toy_environment(std::size_t tasks_per_level, std::uint64_t seed,
                                          const BudgetPolicy& budget) {
  budget.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::uniform_int_distribution<int> label(0, 3);
  const std::array<std::pair<double, double>, kNumLevels> ranges = {
      std::pair{1.0, budget.tau2}, std::pair{budget.tau2, budget.tau1},
      std::pair{budget.tau1, 10.0}};

  std::vector<ToyTask> env;
  for (std::size_t li = 0; li < kNumLevels; ++li) {
    const auto [lo, hi] = ranges[li];
    std::uniform_real_distribution<double> diff(lo, hi);
    for (std::size_t i = 0; i < tasks_per_level; ++i) {
      ToyTask t;
      t.id = "toy-" + std::string(to_string(kLevels[li])) + "-" + std::to_string(i);
      t.difficulty = hi > lo ? diff(rng) : lo;
      t.uncertainty = std::clamp(0.05 + 0.08 * t.difficulty + noise(rng), 0.0, 1.0);
      t.answer_label = label(rng);
      env.push_back(std::move(t));
    }
  }
  return env;
}

TrainingSummary summarize_policy(const ToyPolicy& policy, std::span<const ToyTask> env,
                                 const SimulationConfig& config) {
  TrainingSummary summary;
  const double pf = policy.format_probability();
  std::array<LevelSummary, kNumLevels> acc{};
  double total_accuracy = 0.0;
  for (const auto& task : env) {
    const auto level = level_of(task.difficulty, config.budget);
    const auto p = policy.probabilities(level);
    double length = 0.0;
    double accuracy = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      length += p[k] * policy.bin_lengths()[k];
      accuracy += p[k] * config.curve.probability(policy.bin_lengths()[k], task.difficulty);
    }
    accuracy *= pf;
    auto& s = acc[level_index(level)];
    ++s.tasks;
    s.expected_length += length;
    s.expected_accuracy += accuracy;
    total_accuracy += accuracy;
  }
  for (std::size_t li = 0; li < kNumLevels; ++li) {
    if (acc[li].tasks == 0) continue;
    const double n = static_cast<double>(acc[li].tasks);
    summary.levels[li] =
        LevelSummary{acc[li].tasks, acc[li].expected_length / n, acc[li].expected_accuracy / n};
  }
  if (!env.empty()) summary.expected_accuracy = total_accuracy / static_cast<double>(env.size());
  return summary;
}

namespace {

std::size_t sample_index(const std::vector<double>& probs, double u) {
  double cumulative = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    cumulative += probs[k];
    if (u < cumulative) return k;
  }
  return probs.size() - 1;
}

}  // namespace

TrainingLog simulate_training(std::span<const ToyTask> env, const ToyPolicy& policy,
                              const SimulationConfig& config, int steps, std::uint64_t seed) {
  if (env.empty()) throw ValidationError("toy environment has no tasks");
  if (steps < 1) throw ValidationError("steps must be at least 1");
  config.validate();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, env.size() - 1);

  const ToyPolicy reference = policy;
  ToyPolicy current = policy;
  TrainingLog log;

  for (int step = 1; step <= steps; ++step) {
    std::vector<Group> groups;
    groups.reserve(config.tasks_per_step);
    for (std::size_t t = 0; t < config.tasks_per_step; ++t) {
      const auto& task = env[pick(rng)];
      const auto level = level_of(task.difficulty, config.budget);
      const auto probs = current.probabilities(level);
      const double pf = current.format_probability();
      Group group;
      for (std::size_t g = 0; g < config.group_size; ++g) {
        Rollout r;
        r.sample_id = task.id;
        r.level = level;
        r.bin = sample_index(probs, unit(rng));
        r.tokens_used = current.bin_lengths()[r.bin];
        r.formatted = unit(rng) < pf;
        const bool lucky = unit(rng) < config.curve.probability(r.tokens_used, task.difficulty);
        r.correct = r.formatted && lucky;
        const int hit = r.correct ? 1 : 0;
        const int fmt = r.formatted ? 1 : 0;
        const auto breakdown = compose_reward(fmt, fmt, AccuracyReward{hit, hit, hit},
                                              r.tokens_used, task.difficulty, task.uncertainty,
                                              config.budget);
        r.reward = config.length_penalty ? breakdown.r_final : breakdown.r_original;
        group.rollouts.push_back(std::move(r));
      }
      groups.push_back(std::move(group));
    }

    std::array<StepRecord, kNumLevels> rec{};
    std::array<std::size_t, kNumLevels> counts{};
    for (const auto& g : groups) {
      for (const auto& r : g.rollouts) {
        const auto li = level_index(r.level);
        ++counts[li];
        rec[li].mean_length += r.tokens_used;
        rec[li].mean_reward += r.reward;
        rec[li].mean_accuracy += r.correct ? 1.0 : 0.0;
      }
    }
    for (std::size_t li = 0; li < kNumLevels; ++li) {
      if (counts[li] == 0) continue;
      const double n = static_cast<double>(counts[li]);
      log.records.push_back({step, kLevels[li], rec[li].mean_length / n,
                             rec[li].mean_reward / n, rec[li].mean_accuracy / n});
    }

    current = policy_update(current, reference, groups, config.kl_coeff, config.lr,
                            config.advantage_epsilon);
  }

  log.summary = summarize_policy(current, env, config);
  log.summary.steps = steps;
  log.summary.seed = seed;
  return log;
}

std::string to_jsonl(const TrainingLog& log) {
  std::ostringstream out;
  for (const auto& r : log.records) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["level"] = std::string(to_string(r.level));
    j["mean_length"] = r.mean_length;
    j["mean_reward"] = r.mean_reward;
    j["mean_accuracy"] = r.mean_accuracy;
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json s;
  s["summary"] = true;
  s["steps"] = log.summary.steps;
  s["seed"] = log.summary.seed;
  s["expected_accuracy"] = log.summary.expected_accuracy;
  auto levels = nlohmann::ordered_json::object();
  for (auto level : kLevels) {
    const auto& l = log.summary.levels[level_index(level)];
    if (!l) continue;
    levels[std::string(to_string(level))] = {{"tasks", l->tasks},
                                             {"expected_length", l->expected_length},
                                             {"expected_accuracy", l->expected_accuracy}};
  }
  s["levels"] = levels;
  out << s.dump() << '\n';
  return out.str();
}

TrainingLog parse_training_log(const std::string& jsonl) {
  TrainingLog log;
  std::istringstream in(jsonl);
  std::string line;
  bool saw_summary = false;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (j.value("summary", false)) {
        saw_summary = true;
        log.summary.steps = j.at("steps").get<int>();
        log.summary.seed = j.at("seed").get<std::uint64_t>();
        log.summary.expected_accuracy = j.at("expected_accuracy").get<double>();
        for (const auto& [name, v] : j.at("levels").items()) {
          log.summary.levels[level_index(parse_level(name))] =
              LevelSummary{v.at("tasks").get<std::size_t>(), v.at("expected_length").get<double>(),
                           v.at("expected_accuracy").get<double>()};
        }
      } else {
        log.records.push_back({j.at("step").get<int>(),
                               parse_level(j.at("level").get<std::string>()),
                               j.at("mean_length").get<double>(), j.at("mean_reward").get<double>(),
                               j.at("mean_accuracy").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad training log line: ") + e.what(), line);
    }
  }
  if (!saw_summary) throw ParseError("training log has no summary record", jsonl);
  return log;
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string render_log_text(const TrainingLog& log, int stride) {
  std::ostringstream out;
  char line[160];
  out << "steps: " << log.summary.steps << "  seed: " << log.summary.seed << "\n";
  std::snprintf(line, sizeof line, "%-8s %6s %12s %12s\n", "level", "tasks", "E[length]",
                "E[accuracy]");
  out << line;
  for (auto level : kLevels) {
    const auto& l = log.summary.levels[level_index(level)];
    if (!l) continue;
    std::snprintf(line, sizeof line, "%-8s %6zu %12.2f %12.4f\n",
                  std::string(to_string(level)).c_str(), l->tasks, l->expected_length,
                  l->expected_accuracy);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-8s %6s %12s %12.4f\n", "all", "", "",
                log.summary.expected_accuracy);
  out << line;

  if (stride > 0 && !log.records.empty()) {
    out << "\n";
    std::snprintf(line, sizeof line, "%6s %-8s %12s %12s %12s\n", "step", "level", "mean_length",
                  "mean_reward", "mean_acc");
    out << line;
    for (const auto& r : log.records) {
      if (r.step % stride != 0 && r.step != 1) continue;
      std::snprintf(line, sizeof line, "%6d %-8s %12.2f %12.4f %12.4f\n", r.step,
                    std::string(to_string(r.level)).c_str(), r.mean_length, r.mean_reward,
                    r.mean_accuracy);
      out << line;
    }
  }
  return out.str();
}

std::string render_log_json(const TrainingLog& log) {
  nlohmann::ordered_json j;
  auto records = nlohmann::ordered_json::array();
  for (const auto& r : log.records) {
    records.push_back({{"step", r.step},
                       {"level", std::string(to_string(r.level))},
                       {"mean_length", r.mean_length},
                       {"mean_reward", r.mean_reward},
                       {"mean_accuracy", r.mean_accuracy}});
  }
  j["records"] = records;
  nlohmann::ordered_json s;
  s["steps"] = log.summary.steps;
  s["seed"] = log.summary.seed;
  s["expected_accuracy"] = log.summary.expected_accuracy;
  auto levels = nlohmann::ordered_json::object();
  for (auto level : kLevels) {
    const auto& l = log.summary.levels[level_index(level)];
    if (!l) continue;
    levels[std::string(to_string(level))] = {{"tasks", l->tasks},
                                             {"expected_length", l->expected_length},
                                             {"expected_accuracy", l->expected_accuracy}};
  }
  s["levels"] = levels;
  j["summary"] = s;
  return j.dump(2) + "\n";
}

std::string render_log_csv(const TrainingLog& log) {
  std::ostringstream out;
  out << "kind,step,level,mean_length,mean_reward,mean_accuracy,tasks,expected_length,"
         "expected_accuracy\n";
  for (const auto& r : log.records) {
    out << "step," << r.step << ',' << to_string(r.level) << ',' << g17(r.mean_length) << ','
        << g17(r.mean_reward) << ',' << g17(r.mean_accuracy) << ",,,\n";
  }
  for (auto level : kLevels) {
    const auto& l = log.summary.levels[level_index(level)];
    if (!l) continue;
    out << "summary," << log.summary.steps << ',' << to_string(level) << ",,,," << l->tasks << ','
        << g17(l->expected_length) << ',' << g17(l->expected_accuracy) << '\n';
  }
  out << "summary," << log.summary.steps << ",all,,,,,," << g17(log.summary.expected_accuracy)
      << '\n';
  return out.str();
}

}  // namespace budgetseg
