#include "budgetseg/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& section, const std::string& name,
                    const std::set<std::string>& known) {
  if (!section.is_object()) throw ValidationError("config section '" + name + "' must be an object");
  for (const auto& [key, _] : section.items()) {
    if (!known.contains(key)) throw ValidationError("unknown config key '" + name + "." + key + "'");
  }
}

template <typename T>
void read(const json& section, const char* key, T& out) {
  if (section.contains(key)) out = section[key].get<T>();
}

}  // namespace

ToolkitConfig parse_config(const std::string& text) {
  ToolkitConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config is not JSON: ") + e.what(), text);
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  reject_unknown(j, "<root>", {"budget", "weights", "model", "simulation"});
  try {
    if (j.contains("budget")) {
      const auto& b = j["budget"];
      reject_unknown(b, "budget", {"tau1", "tau2", "l_base", "alpha", "l_low", "beta", "clamp_floor"});
      read(b, "tau1", c.budget.tau1);
      read(b, "tau2", c.budget.tau2);
      read(b, "l_base", c.budget.l_base);
      read(b, "alpha", c.budget.alpha);
      read(b, "l_low", c.budget.l_low);
      read(b, "beta", c.budget.beta);
      if (b.contains("clamp_floor") && !b["clamp_floor"].is_null()) {
        c.budget.clamp_floor = b["clamp_floor"].get<double>();
      }
    }
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      reject_unknown(w, "weights", {"iou_threshold", "bbox_l1_threshold", "point_l1_threshold"});
      read(w, "iou_threshold", c.weights.iou_threshold);
      read(w, "bbox_l1_threshold", c.weights.bbox_l1_threshold);
      read(w, "point_l1_threshold", c.weights.point_l1_threshold);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      reject_unknown(m, "model", {"params_billions", "gamma"});
      read(m, "params_billions", c.model.params_billions);
      read(m, "gamma", c.model.gamma);
    }
    if (j.contains("simulation")) {
      const auto& s = j["simulation"];
      reject_unknown(s, "simulation",
                     {"group_size", "tasks_per_step", "lr", "kl_coeff", "advantage_epsilon",
                      "accuracy_floor", "accuracy_scale_per_difficulty", "length_penalty"});
      read(s, "group_size", c.simulation.group_size);
      read(s, "tasks_per_step", c.simulation.tasks_per_step);
      read(s, "lr", c.simulation.lr);
      read(s, "kl_coeff", c.simulation.kl_coeff);
      read(s, "advantage_epsilon", c.simulation.advantage_epsilon);
      read(s, "accuracy_floor", c.simulation.curve.floor);
      read(s, "accuracy_scale_per_difficulty", c.simulation.curve.scale_per_difficulty);
      read(s, "length_penalty", c.simulation.length_penalty);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("config value has the wrong type: ") + e.what(), text);
  }
  c.simulation.budget = c.budget;
  c.budget.validate();
  c.weights.validate();
  c.model.validate();
  c.simulation.validate();
  return c;
}

ToolkitConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_json(const ToolkitConfig& c) {
  nlohmann::ordered_json j;
  j["budget"] = {{"tau1", c.budget.tau1},   {"tau2", c.budget.tau2},
                 {"l_base", c.budget.l_base}, {"alpha", c.budget.alpha},
                 {"l_low", c.budget.l_low}, {"beta", c.budget.beta}};
  j["budget"]["clamp_floor"] =
      c.budget.clamp_floor ? nlohmann::ordered_json(*c.budget.clamp_floor) : nlohmann::ordered_json(nullptr);
  j["weights"] = {{"iou_threshold", c.weights.iou_threshold},
                  {"bbox_l1_threshold", c.weights.bbox_l1_threshold},
                  {"point_l1_threshold", c.weights.point_l1_threshold}};
  j["model"] = {{"params_billions", c.model.params_billions}, {"gamma", c.model.gamma}};
  j["simulation"] = {{"group_size", c.simulation.group_size},
                     {"tasks_per_step", c.simulation.tasks_per_step},
                     {"lr", c.simulation.lr},
                     {"kl_coeff", c.simulation.kl_coeff},
                     {"advantage_epsilon", c.simulation.advantage_epsilon},
                     {"accuracy_floor", c.simulation.curve.floor},
                     {"accuracy_scale_per_difficulty", c.simulation.curve.scale_per_difficulty},
                     {"length_penalty", c.simulation.length_penalty}};
  return j.dump(2) + "\n";
}

}  // namespace budgetseg
