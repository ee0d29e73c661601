#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "budgetseg/error.hpp"
#include "budgetseg/grpo.hpp"

using namespace budgetseg;

namespace {

const std::vector<double> kBins = {16, 32, 64, 96, 128, 192, 256, 384, 512};

ToyPolicy random_policy(std::mt19937_64& rng, std::vector<double> bins) {
  std::normal_distribution<double> z(0.0, 1.0);
  ToyPolicy p(std::move(bins));
  auto params = p.parameters();
  for (auto& v : params) v = z(rng);
  p.set_parameters(params);
  return p;
}

std::vector<Group> random_groups(std::mt19937_64& rng, std::size_t bins, std::size_t n_groups,
                                 std::size_t size) {
  std::uniform_real_distribution<double> reward(0.0, 5.0);
  std::vector<Group> groups(n_groups);
  for (auto& g : groups) {
    const auto level = static_cast<DifficultyLevel>(rng() % 3);
    for (std::size_t i = 0; i < size; ++i) {
      Rollout r;
      r.level = level;
      r.bin = rng() % bins;
      r.formatted = rng() % 2;
      r.reward = reward(rng);
      g.rollouts.push_back(r);
    }
  }
  return groups;
}

}  // namespace

TEST(Advantages, Examples) {
  const std::vector<double> c = {2.0, 2.0, 2.0};
  for (double a : group_advantages(c)) EXPECT_EQ(a, 0.0);
  const auto a = group_advantages(std::vector<double>{1, 2, 3}, 0.0);
  EXPECT_NEAR(a[0], -1.2247, 1e-4);
  EXPECT_NEAR(a[1], 0.0, 1e-12);
  EXPECT_NEAR(a[2], 1.2247, 1e-4);
  const auto b = group_advantages(std::vector<double>{0, 5}, 0.0);
  EXPECT_DOUBLE_EQ(b[0], -1.0);
  EXPECT_DOUBLE_EQ(b[1], 1.0);
  EXPECT_THROW(group_advantages(std::vector<double>{1.0}), ValidationError);
  EXPECT_THROW(group_advantages(std::vector<double>{1.0, 2.0}, -1.0), ValidationError);
}

TEST(Advantages, ZeroMeanShiftAndScaleInvariance) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> r(-3, 3);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> x(2 + rng() % 10);
    for (auto& v : x) v = r(rng);
    const auto a = group_advantages(x, 0.0);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-9);
    double var = 0.0;
    for (double v : a) var += v * v;
    EXPECT_NEAR(var / static_cast<double>(a.size()), 1.0, 1e-9);

    auto shifted = x;
    for (auto& v : shifted) v += 7.25;
    auto scaled = x;
    for (auto& v : scaled) v *= 3.5;
    const auto as = group_advantages(shifted, 0.0);
    const auto ak = group_advantages(scaled, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_NEAR(as[i], a[i], 1e-9);
      EXPECT_NEAR(ak[i], a[i], 1e-9);
    }
  }
}

TEST(ToyPolicyTest, NormalizedAndParameterRoundTrip) {
  std::mt19937_64 rng(1);
  const auto p = random_policy(rng, kBins);
  for (auto level : {DifficultyLevel::kEasy, DifficultyLevel::kMedium, DifficultyLevel::kHard}) {
    const auto probs = p.probabilities(level);
    EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-12);
  }
  ToyPolicy q(kBins);
  q.set_parameters(p.parameters());
  EXPECT_EQ(q.parameters(), p.parameters());
  EXPECT_THROW(q.set_parameters(std::vector<double>(3)), ValidationError);
  EXPECT_THROW(ToyPolicy(std::vector<double>{1.0}), ValidationError);
}

TEST(AccuracyCurveTest, SaturatingAndDifficultyScaled) {
  const AccuracyCurve c;
  EXPECT_DOUBLE_EQ(c.probability(0, 3), c.floor);
  double prev = 0.0;
  for (double L = 0; L < 1000; L += 10) {
    const double v = c.probability(L, 6);
    EXPECT_GE(v, prev);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
  EXPECT_GT(c.probability(64, 2), c.probability(64, 8));
}

TEST(Surrogate, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const auto policy = random_policy(rng, {16, 64, 256});
    const auto reference = random_policy(rng, {16, 64, 256});
    const auto groups = random_groups(rng, 3, 3, 8);
    const double kl = trial % 2 ? 0.3 : 1e-3;
    const auto grad = surrogate_gradient(policy, reference, groups, kl);
    const auto params = policy.parameters();
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto up = params, down = params;
      up[i] += h;
      down[i] -= h;
      ToyPolicy pu = policy, pd = policy;
      pu.set_parameters(up);
      pd.set_parameters(down);
      const double fd = (surrogate_objective(pu, reference, groups, kl) -
                         surrogate_objective(pd, reference, groups, kl)) /
                        (2 * h);
      EXPECT_LE(std::abs(grad[i] - fd), 1e-4 * std::max(std::abs(fd), 1e-3))
          << "trial " << trial << " param " << i;
    }
  }
}

TEST(Update, ZeroAdvantagesLeavePolicyUnchangedWithoutKl) {
  std::mt19937_64 rng(5);
  const auto policy = random_policy(rng, kBins);
  auto groups = random_groups(rng, kBins.size(), 2, 8);
  for (auto& g : groups)
    for (auto& r : g.rollouts) r.reward = 1.0;
  EXPECT_EQ(policy_update(policy, policy, groups, 0.0, 0.1).parameters(), policy.parameters());
  // with KL, the step only pulls toward the reference
  const auto reference = random_policy(rng, kBins);
  const auto moved = policy_update(policy, reference, groups, 0.5, 0.1);
  const auto kl_only = surrogate_gradient(policy, reference, groups, 0.5);
  const auto before = policy.parameters(), after = moved.parameters();
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_NEAR(after[i] - before[i], 0.1 * kl_only[i], 1e-15);
  }
}

TEST(Update, RewardedShortBinGainsMass) {
  ToyPolicy policy({16, 64, 256});
  Group g;
  for (std::size_t b = 0; b < 3; ++b) {
    for (int k = 0; k < 2; ++k) {
      Rollout r;
      r.level = DifficultyLevel::kEasy;
      r.bin = b;
      r.formatted = true;
      r.reward = b == 0 ? 5.0 : 1.0;
      g.rollouts.push_back(r);
    }
  }
  const std::vector<Group> groups = {g};
  const auto next = policy_update(policy, policy, groups, 0.0, 0.5);
  EXPECT_GT(next.probabilities(DifficultyLevel::kEasy)[0],
            policy.probabilities(DifficultyLevel::kEasy)[0]);
}

TEST(Update, LargeKlPointsTowardReference) {
  std::mt19937_64 rng(8);
  const auto policy = random_policy(rng, {16, 64, 256});
  const auto reference = random_policy(rng, {16, 64, 256});
  const auto groups = random_groups(rng, 3, 2, 8);
  const double big = 1e8;
  const auto g = surrogate_gradient(policy, reference, groups, big);
  const auto g0 = surrogate_gradient(policy, reference, groups, 0.0);
  // pure KL direction = (g - g0) / big
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double kl_dir = (g[i] - g0[i]) / big;
    dot += g[i] * kl_dir;
    n1 += g[i] * g[i];
    n2 += kl_dir * kl_dir;
  }
  EXPECT_NEAR(dot / std::sqrt(n1 * n2), 1.0, 1e-9);
}

TEST(Update, NormalizationPreservedAndFavoredBinMonotone) {
  // reward strictly favours bin 1; average over seeds of its probability never drops
  const int steps = 40, seeds = 64;
  std::vector<double> mean_prob(steps + 1, 0.0);
  for (int seed = 0; seed < seeds; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const ToyPolicy reference({16, 64, 256});
    ToyPolicy policy = reference;
    mean_prob[0] += policy.probabilities(DifficultyLevel::kMedium)[1];
    for (int s = 1; s <= steps; ++s) {
      const auto probs = policy.probabilities(DifficultyLevel::kMedium);
      Group g;
      for (int i = 0; i < 8; ++i) {
        Rollout r;
        r.level = DifficultyLevel::kMedium;
        const double u = unit(rng);
        r.bin = u < probs[0] ? 0 : (u < probs[0] + probs[1] ? 1 : 2);
        r.formatted = true;
        r.reward = r.bin == 1 ? 1.0 : 0.0;
        g.rollouts.push_back(r);
      }
      policy = policy_update(policy, reference, std::vector<Group>{g}, 0.0, 0.05);
      for (auto level : {DifficultyLevel::kEasy, DifficultyLevel::kMedium, DifficultyLevel::kHard}) {
        const auto p = policy.probabilities(level);
        ASSERT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
      }
      mean_prob[s] += policy.probabilities(DifficultyLevel::kMedium)[1];
    }
  }
  for (int s = 1; s <= steps; ++s) EXPECT_GE(mean_prob[s], mean_prob[s - 1] - 1e-12);
  EXPECT_GT(mean_prob[steps], mean_prob[0]);
}

TEST(Update, RejectsBadInputs) {
  const ToyPolicy p(kBins);
  EXPECT_THROW(policy_update(p, p, std::vector<Group>{}, 0.0, 0.1), ValidationError);
  Group tiny;
  tiny.rollouts.resize(1);
  EXPECT_THROW(policy_update(p, p, std::vector<Group>{tiny}, 0.0, 0.1), ValidationError);
  EXPECT_THROW(policy_update(p, ToyPolicy({1, 2}), std::vector<Group>{}, 0.0, 0.1),
               ValidationError);
}

TEST(Environment, LevelsAndUncertainty) {
  const auto env = make_toy_environment(10, 3);
  ASSERT_EQ(env.size(), 30u);
  std::array<int, 3> counts{};
  for (const auto& t : env) {
    ++counts[level_index(level_of(t.difficulty, BudgetPolicy{}))];
    EXPECT_GE(t.uncertainty, 0.0);
    EXPECT_LE(t.uncertainty, 1.0);
  }
  EXPECT_EQ(counts, (std::array<int, 3>{10, 10, 10}));
}

TEST(Simulation, DeterministicAndRoundTrips) {
  const auto env = make_toy_environment(5, 9);
  SimulationConfig cfg;
  const ToyPolicy policy(kBins);
  const auto a = simulate_training(env, policy, cfg, 50, 4);
  const auto b = simulate_training(env, policy, cfg, 50, 4);
  EXPECT_EQ(to_jsonl(a), to_jsonl(b));
  const auto c = simulate_training(env, policy, cfg, 50, 5);
  EXPECT_NE(to_jsonl(a), to_jsonl(c));

  const auto parsed = parse_training_log(to_jsonl(a));
  EXPECT_EQ(to_jsonl(parsed), to_jsonl(a));
  EXPECT_EQ(parsed.summary.steps, 50);
  EXPECT_THROW(parse_training_log("{\"step\":1}\n"), ParseError);
  EXPECT_THROW(simulate_training({}, policy, cfg, 5, 1), ValidationError);
  EXPECT_THROW(simulate_training(env, policy, cfg, 0, 1), ValidationError);
}

TEST(Simulation, NoPenaltyMeansNoSystematicShortening) {
  const auto env = make_toy_environment(20, 0);
  SimulationConfig cfg;
  cfg.length_penalty = false;
  const ToyPolicy policy(kBins);
  const auto initial = summarize_policy(policy, env, cfg);
  const auto log = simulate_training(env, policy, cfg, 2000, 0);
  for (std::size_t li = 0; li < kNumLevels; ++li) {
    EXPECT_GE(log.summary.levels[li]->expected_length, initial.levels[li]->expected_length);
  }
}

TEST(Simulation, ConfigValidation) {
  SimulationConfig cfg;
  cfg.group_size = 1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.budget.beta = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.length_penalty = false;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(LogRender, JsonAndCsvCarryTheSameNumbers) {
  const auto env = make_toy_environment(3, 1);
  const auto log = simulate_training(env, ToyPolicy(kBins), SimulationConfig{}, 20, 1);
  const auto json = render_log_json(log);
  const auto csv = render_log_csv(log);
  EXPECT_NE(json.find("\"records\""), std::string::npos);
  // one CSV row per record plus per-level summaries plus the all row plus the header
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  EXPECT_EQ(static_cast<std::size_t>(rows), 1 + log.records.size() + 3 + 1);
  EXPECT_NE(render_log_text(log).find("E[length]"), std::string::npos);
}
