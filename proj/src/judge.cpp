#include "budgetseg/judge.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "budgetseg/error.hpp"

namespace budgetseg {

OfflineJudgeClient OfflineJudgeClient::from_jsonl(const std::string& text) {
  OfflineJudgeClient client;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      client.add(j.at("sample_id").get<std::string>(), j.at("kind").get<std::string>(),
                 j.at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("offline judge line " + std::to_string(lineno) + ": " + e.what(), line);
    }
  }
  return client;
}

OfflineJudgeClient OfflineJudgeClient::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open offline judge file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_jsonl(buf.str());
}

void OfflineJudgeClient::add(const std::string& sample_id, const std::string& kind,
                             std::string response) {
  responses_[{sample_id, kind}] = std::move(response);
}

std::string OfflineJudgeClient::complete(const JudgeRequest& request) {
  const auto it = responses_.find({request.sample_id, request.kind});
  if (it == responses_.end()) {
    throw JudgeError(request.sample_id, "no offline response for kind '" + request.kind + "'");
  }
  return it->second;
}

HttpJudgeConfig HttpJudgeConfig::from_env() {
  const auto read = [](const char* name) -> std::string {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
  };
  HttpJudgeConfig config;
  config.endpoint = read("BUDGETSEG_JUDGE_URL");
  if (config.endpoint.empty()) {
    throw ValidationError("BUDGETSEG_JUDGE_URL is not set; pass offline scores or set a judge endpoint");
  }
  config.token = read("BUDGETSEG_JUDGE_TOKEN");
  if (auto model = read("BUDGETSEG_JUDGE_MODEL"); !model.empty()) config.model = model;
  if (auto path = read("BUDGETSEG_JUDGE_RESPONSE_PATH"); !path.empty()) {
    config.response_path = path;
  }
  return config;
}

HttpJudgeClient::HttpJudgeClient(HttpJudgeConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("judge endpoint must include a scheme: " + config_.endpoint);
  }
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  origin_ = config_.endpoint.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
}

std::string HttpJudgeClient::complete(const JudgeRequest& request) {
  nlohmann::json body;
  body["model"] = request.model.empty() ? config_.model : request.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
  body["temperature"] = request.temperature;

  // Clients are per call so concurrent requests never share connection state.
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.token.empty()) headers.emplace("Authorization", "Bearer " + config_.token);

  const auto result = client.Post(path_, headers, body.dump(), "application/json");
  if (!result) {
    throw TransportError("judge request failed: " + httplib::to_string(result.error()));
  }
  if (result->status >= 500 || result->status == 429) {
    throw TransportError("judge returned HTTP " + std::to_string(result->status));
  }
  if (result->status != 200) {
    throw JudgeError(request.sample_id, "judge returned HTTP " + std::to_string(result->status) +
                                            ": " + result->body);
  }
  return extract_text_at(result->body, config_.response_path);
}

std::string extract_text_at(const std::string& json_body, const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_body);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("judge response is not JSON: ") + e.what(), json_body);
  }
  const nlohmann::json* node = &j;
  std::istringstream segments(path);
  std::string seg;
  while (std::getline(segments, seg, '.')) {
    if (node->is_array()) {
      char* end = nullptr;
      const auto index = std::strtoul(seg.c_str(), &end, 10);
      if (seg.empty() || *end != '\0' || index >= node->size()) {
        throw ParseError("response path segment '" + seg + "' does not index the array", json_body);
      }
      node = &(*node)[index];
    } else if (node->is_object() && node->contains(seg)) {
      node = &(*node)[seg];
    } else {
      throw ParseError("response path '" + path + "' not found", json_body);
    }
  }
  if (!node->is_string()) throw ParseError("value at '" + path + "' is not a string", json_body);
  return node->get<std::string>();
}

std::string complete_with_retry(JudgeClient& judge, const JudgeRequest& request,
                                const RetryPolicy& retry) {
  const int attempts = std::max(1, retry.max_attempts);
  auto delay = retry.base_delay;
  for (int attempt = 1;; ++attempt) {
    try {
      return judge.complete(request);
    } catch (const TransportError& e) {
      if (attempt >= attempts) {
        throw JudgeError(request.sample_id, std::string(e.what()) + " (after " +
                                                std::to_string(attempts) + " attempts)");
      }
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace budgetseg
