#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "budgetseg/config.hpp"
#include "budgetseg/error.hpp"

using namespace budgetseg;

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = parse_config("{}");
  EXPECT_EQ(c.budget.tau1, 5.0);
  EXPECT_EQ(c.budget.tau2, 3.5);
  EXPECT_EQ(c.budget.l_base, 256.0);
  EXPECT_EQ(c.budget.alpha, 25.0);
  EXPECT_EQ(c.budget.l_low, 96.0);
  EXPECT_EQ(c.budget.beta, 0.002);
  EXPECT_FALSE(c.budget.clamp_floor.has_value());
  EXPECT_EQ(c.weights.iou_threshold, 0.5);
  EXPECT_EQ(c.model.params_billions, 7.0);
  EXPECT_EQ(c.model.gamma, 0.7);
  EXPECT_TRUE(c.simulation.length_penalty);
  EXPECT_EQ(c.simulation.group_size, 8u);
}

TEST(Config, PartialOverridesAndRoundTrip) {
  const auto c = parse_config(
      R"({"budget": {"beta": 0.004, "clamp_floor": 0.1}, "model": {"params_billions": 3},
          "simulation": {"length_penalty": false, "lr": 0.1}})");
  EXPECT_EQ(c.budget.beta, 0.004);
  EXPECT_EQ(c.budget.clamp_floor, 0.1);
  EXPECT_EQ(c.budget.tau1, 5.0);
  EXPECT_EQ(c.model.params_billions, 3.0);
  EXPECT_FALSE(c.simulation.length_penalty);
  EXPECT_EQ(c.simulation.lr, 0.1);
  EXPECT_EQ(c.simulation.budget.beta, 0.004);

  const auto again = parse_config(to_config_json(c));
  EXPECT_EQ(to_config_json(again), to_config_json(c));
  EXPECT_EQ(to_config_json(parse_config(to_config_json(ToolkitConfig{}))),
            to_config_json(ToolkitConfig{}));
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("not json"), ParseError);
  EXPECT_THROW(parse_config("[1]"), ValidationError);
  EXPECT_THROW(parse_config(R"({"budgett": {}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"budget": {"betta": 1}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"budget": {"beta": "x"}})"), ParseError);
  EXPECT_THROW(parse_config(R"({"budget": {"tau1": 3, "tau2": 4}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"budget": {"beta": 0}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"model": {"gamma": 2}})"), ValidationError);
  EXPECT_THROW(parse_config(R"({"simulation": {"group_size": 1}})"), ValidationError);
}

TEST(Config, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "budgetseg_config_test.json";
  {
    std::ofstream out(path);
    out << R"({"weights": {"iou_threshold": 0.7}})";
  }
  EXPECT_EQ(load_config(path).weights.iou_threshold, 0.7);
  std::filesystem::remove(path);
  EXPECT_THROW(load_config(path), ValidationError);
}
