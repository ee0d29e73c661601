#include <gtest/gtest.h>

#include <random>

#include "budgetseg/error.hpp"
#include "budgetseg/reward.hpp"

using namespace budgetseg;

namespace {

constexpr const char* kAnswer =
    R"({"Bbox": [10,100,200,210], "Point 1": [30,110], "Point 2": [35,180]})";

std::string output(const std::string& think, const std::string& answer) {
  return "<think>" + think + "</think><answer>" + answer + "</answer>";
}

Mask block(int w, int h, int n) {
  Mask m(w, h);
  for (int i = 0; i < n; ++i) m.set(i % w, i / w);
  return m;
}

}  // namespace

TEST(Level, ThresholdsAndBoundaries) {
  const BudgetPolicy p;
  EXPECT_EQ(level_of(5.0, p), DifficultyLevel::kHard);
  EXPECT_EQ(level_of(3.4, p), DifficultyLevel::kEasy);
  EXPECT_EQ(level_of(3.5, p), DifficultyLevel::kMedium);
  EXPECT_EQ(level_of(DifficultyScore::from_aspects(4, 6, 3).composite(), p),
            DifficultyLevel::kMedium);
  EXPECT_THROW(level_of(0.5, p), ValidationError);
  EXPECT_THROW(level_of(10.5, p), ValidationError);
}

TEST(Level, ParseAndPrint) {
  EXPECT_EQ(parse_level("Hard"), DifficultyLevel::kHard);
  EXPECT_EQ(to_string(DifficultyLevel::kMedium), "medium");
  EXPECT_THROW(parse_level("extreme"), ValidationError);
}

TEST(DifficultyScoreTest, ComponentRange) {
  EXPECT_NEAR(DifficultyScore::from_aspects(4, 6, 3).composite(), 13.0 / 3.0, 1e-15);
  EXPECT_THROW(DifficultyScore::from_aspects(0, 5, 5), ValidationError);
  EXPECT_THROW(DifficultyScore::from_aspects(5, 11, 5), ValidationError);
}

TEST(Policy, Validation) {
  BudgetPolicy p;
  EXPECT_NO_THROW(p.validate());
  p.tau2 = 6.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.l_low = 300;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.beta = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = {};
  p.alpha = -1;
  EXPECT_THROW(p.validate(), ValidationError);
  RewardWeights w;
  w.iou_threshold = 0;
  EXPECT_THROW(w.validate(), ValidationError);
}

TEST(Budget, Table) {
  const BudgetPolicy p;
  EXPECT_DOUBLE_EQ(*token_budget(6.0, 1.0, p), 281.0);
  EXPECT_DOUBLE_EQ(*token_budget(2.0, 0.9, p), 96.0);
  EXPECT_FALSE(token_budget(4.0, 0.3, p));
  EXPECT_DOUBLE_EQ(*token_budget(5.0, 0.4, p), 266.0);
  EXPECT_THROW(token_budget(6.0, 1.5, p), ValidationError);
  EXPECT_THROW(token_budget(11.0, 0.5, p), ValidationError);
}

TEST(Budget, HardIsAffineInU) {
  const BudgetPolicy p;
  for (double u = 0.0; u <= 1.0; u += 0.125) {
    EXPECT_DOUBLE_EQ(*token_budget(7.0, u, p), p.l_base + p.alpha * u);
    EXPECT_DOUBLE_EQ(*token_budget(1.5, u, p), p.l_low);
    EXPECT_FALSE(token_budget(4.5, u, p));
  }
}

TEST(Penalty, Examples) {
  const BudgetPolicy p;
  EXPECT_EQ(soft_penalty(200, 256.0, p), 1.0);
  EXPECT_NEAR(soft_penalty(300, 256.0, p), 0.912, 1e-12);
  EXPECT_EQ(soft_penalty(10000, std::nullopt, p), 1.0);
  EXPECT_EQ(soft_penalty(256, 256.0, p), 1.0);
}

TEST(Penalty, SlopeAndClamp) {
  BudgetPolicy p;
  for (double over = 1; over < 2000; over *= 1.7) {
    const double a = soft_penalty(256 + over, 256.0, p);
    const double b = soft_penalty(256 + over + 1.0, 256.0, p);
    EXPECT_NEAR(a - b, p.beta, 1e-12);
  }
  EXPECT_LT(soft_penalty(1000, 256.0, p), 0.0);
  p.clamp_floor = 0.0;
  EXPECT_EQ(soft_penalty(1000, 256.0, p), 0.0);
}

TEST(ParseOutput, ReferenceExample) {
  const auto r = parse_output(output("x", kAnswer));
  EXPECT_EQ(r.format_reason, 1);
  EXPECT_EQ(r.format_seg, 1);
  ASSERT_TRUE(r.answer);
  EXPECT_EQ(r.answer->bbox, (BBox{10, 100, 200, 210}));
  EXPECT_EQ(r.answer->point1, (Point{30, 110}));
  EXPECT_EQ(r.answer->point2, (Point{35, 180}));
  EXPECT_EQ(r.think, "x");
}

TEST(ParseOutput, MalformedCases) {
  auto r = parse_output("no tags here");
  EXPECT_EQ(r.format_reason, 0);
  EXPECT_EQ(r.format_seg, 0);
  EXPECT_FALSE(r.answer);

  r = parse_output(output("x", R"({"Bbox": [10,100,200,210], "Point 1": [30,110]})"));
  EXPECT_EQ(r.format_reason, 1);
  EXPECT_EQ(r.format_seg, 0);
  EXPECT_FALSE(r.answer);

  // answer before think
  r = parse_output(std::string("<answer>") + kAnswer + "</answer><think>x</think>");
  EXPECT_EQ(r.format_reason, 0);
  EXPECT_EQ(r.format_seg, 1);

  // two think blocks
  r = parse_output("<think>a</think><think>b</think><answer>" + std::string(kAnswer) + "</answer>");
  EXPECT_EQ(r.format_reason, 0);

  // two answer blocks
  r = parse_output(output("x", kAnswer) + "<answer>" + kAnswer + "</answer>");
  EXPECT_EQ(r.format_seg, 0);

  // single quotes, floats, wrong arity, wrong key case, inverted box
  for (const char* bad : {
           R"({'Bbox': [10,100,200,210], 'Point 1': [30,110], 'Point 2': [35,180]})",
           R"({"Bbox": [10.5,100,200,210], "Point 1": [30,110], "Point 2": [35,180]})",
           R"({"Bbox": [10,100,200], "Point 1": [30,110], "Point 2": [35,180]})",
           R"({"bbox": [10,100,200,210], "Point 1": [30,110], "Point 2": [35,180]})",
           R"({"Bbox": [200,100,10,210], "Point 1": [30,110], "Point 2": [35,180]})",
           R"([1,2,3])",
       }) {
    EXPECT_EQ(parse_output(output("x", bad)).format_seg, 0) << bad;
  }
}

TEST(ParseOutput, TotalOnRandomText) {
  std::mt19937 rng(9);
  const std::string alphabet = "<>/thinkanswer{}[]\":, 0123456789BboxPt";
  for (int i = 0; i < 2000; ++i) {
    std::string s(rng() % 80, ' ');
    for (auto& c : s) c = alphabet[rng() % alphabet.size()];
    EXPECT_NO_THROW(parse_output(s));
  }
}

TEST(ParseOutput, AnswerRoundTripsByteIdentically) {
  const auto r = parse_output(output("why", kAnswer));
  ASSERT_TRUE(r.answer);
  const auto text = to_answer_json(*r.answer);
  EXPECT_EQ(text, R"({"Bbox": [10,100,200,210], "Point 1": [30,110], "Point 2": [35,180]})");
  EXPECT_EQ(to_answer_json(*parse_answer_json(text)), text);
}

TEST(Accuracy, ExactFarAndBoundary) {
  const SegReference gt{{10, 10, 20, 20}, {15, 15}, {12, 12}};
  const auto m = block(4, 4, 8);
  EXPECT_EQ(accuracy_reward(gt, m, gt, m, {}).total(), 3);

  const SegReference far{{500, 500, 900, 900}, {800, 800}, {900, 900}};
  Mask other(4, 4);
  other.set(3, 3);
  const auto acc = accuracy_reward(far, other, gt, m, {});
  EXPECT_EQ(acc.acc_iou + acc.acc_bbox + acc.acc_point, 0);

  // |∩| = 4, |∪| = 8
  const auto half = block(4, 4, 4);
  const auto r = accuracy_reward(gt, half, gt, m, {});
  EXPECT_EQ(r.acc_iou, 1);

  // bbox L1 exactly 10, point L1 mean exactly 100
  const SegReference edge{{20, 20, 30, 30}, {215, 15}, {212, 12}};
  const auto e = accuracy_reward(edge, m, gt, m, {});
  EXPECT_EQ(e.acc_bbox, 1);
  EXPECT_EQ(e.acc_point, 1);

  EXPECT_THROW(accuracy_reward(gt, Mask(3, 3), gt, m, {}), ShapeError);
}

TEST(FinalReward, Examples) {
  const BudgetPolicy p;
  const SegReference gt = *parse_answer_json(kAnswer);
  const auto m = block(5, 5, 7);

  RewardInputs in{parse_output(output("x", kAnswer)), m, gt, m, 50, 2.0, 0.0};
  auto r = final_reward(in, p, {});
  EXPECT_EQ(r.r_original, 5.0);
  EXPECT_EQ(r.s, 1.0);
  EXPECT_EQ(r.r_final, 5.0);

  in.difficulty = 6.0;
  in.tokens_used = 356;
  r = final_reward(in, p, {});
  EXPECT_NEAR(r.s, 0.8, 1e-12);
  EXPECT_NEAR(r.r_final, 4.0, 1e-12);
  ASSERT_TRUE(r.budget);
  EXPECT_EQ(*r.budget, 256.0);

  in.output = parse_output("garbage");
  in.tokens_used = 5000;
  r = final_reward(in, p, {});
  EXPECT_EQ(r.r_original, 0.0);
  EXPECT_EQ(r.r_final, 0.0);

  in.output = parse_output(output("x", kAnswer));
  in.pred_mask = Mask(2, 2);
  EXPECT_THROW(final_reward(in, p, {}), ShapeError);
}

TEST(FinalReward, PenaltyNeverIncreasesReward) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> d(1.0, 10.0), u(0.0, 1.0), len(0.0, 800.0);
  const BudgetPolicy p;
  for (int i = 0; i < 1000; ++i) {
    const int fr = static_cast<int>(rng() % 2), fs = static_cast<int>(rng() % 2);
    const AccuracyReward acc{static_cast<int>(rng() % 2), static_cast<int>(rng() % 2),
                             static_cast<int>(rng() % 2)};
    const auto r = compose_reward(fr, fs, acc, len(rng), d(rng), u(rng), p);
    EXPECT_EQ(r.r_original, fr + fs + acc.total());
    EXPECT_EQ(r.r_final, r.r_original * r.s);
    if (r.r_original > 0) {
      EXPECT_LE(r.r_final, r.r_original);
      const bool within = !r.budget || r.s == 1.0;
      EXPECT_EQ(r.r_final == r.r_original, within);
    }
  }
}

TEST(FinalReward, NoBudgetMatchesUnpenalizedBaseline) {
  const auto r = compose_reward(1, 1, {1, 1, 1}, 1e6, 4.0, 0.7, {});
  EXPECT_FALSE(r.budget);
  EXPECT_EQ(r.r_final, 5.0);
}
