#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>

namespace budgetseg {

/// One chat-completion style call: a single user message in, text out.
struct JudgeRequest {
  std::string sample_id;
  /// What the call is for ("difficulty", "short_chain", "long_chain", "reasoning").
  /// Offline clients key their canned responses on (sample_id, kind).
  std::string kind;
  std::string prompt;
  /// Empty means the client's configured model.
  std::string model;
  double temperature = 0.0;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  /// Returns the generated text. Throws TransportError for failures worth retrying.
  virtual std::string complete(const JudgeRequest& request) = 0;
};

/// Canned responses keyed by (sample_id, kind). Read-only after loading, so
/// concurrent calls are safe.
class OfflineJudgeClient : public JudgeClient {
 public:
  OfflineJudgeClient() = default;

  /// JSONL lines of {"sample_id", "kind", "response"}.
  static OfflineJudgeClient from_jsonl(const std::string& text);
  static OfflineJudgeClient from_file(const std::filesystem::path& path);

  void add(const std::string& sample_id, const std::string& kind, std::string response);
  std::size_t size() const noexcept { return responses_.size(); }

  std::string complete(const JudgeRequest& request) override;

 private:
  std::map<std::pair<std::string, std::string>, std::string> responses_;
};

struct HttpJudgeConfig {
  /// Full endpoint URL, e.g. http://localhost:8000/v1/chat/completions.
  std::string endpoint;
  std::string token;
  std::string model = "judge";
  /// Dotted path to the generated text in the response body; numeric segments index arrays.
  std::string response_path = "choices.0.message.content";
  std::chrono::seconds timeout{60};

  /// Reads BUDGETSEG_JUDGE_URL, BUDGETSEG_JUDGE_TOKEN, BUDGETSEG_JUDGE_MODEL and
  /// BUDGETSEG_JUDGE_RESPONSE_PATH. Throws ValidationError if the URL is unset.
  static HttpJudgeConfig from_env();
};

/// Posts {model, messages: [{role: "user", content}], temperature} and extracts
/// the text at response_path.
class HttpJudgeClient : public JudgeClient {
 public:
  explicit HttpJudgeClient(HttpJudgeConfig config);

  std::string complete(const JudgeRequest& request) override;
  const HttpJudgeConfig& config() const noexcept { return config_; }

 private:
  HttpJudgeConfig config_;
  std::string origin_;
  std::string path_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  bool reprompt_on_parse_error = false;
};

inline constexpr const char* kReprompt = "\n\nRespond with only the dictionary.";

/// Calls the judge, retrying TransportError with exponential backoff. The last
/// failure is rethrown as JudgeError carrying the sample id.
std::string complete_with_retry(JudgeClient& judge, const JudgeRequest& request,
                                const RetryPolicy& retry);

/// Like complete_with_retry, then runs `parse`. On ParseError, when the policy
/// allows it, re-asks once with kReprompt appended before giving up.
template <typename Parse>
auto complete_and_parse(JudgeClient& judge, JudgeRequest request, const RetryPolicy& retry,
                        Parse&& parse) -> decltype(parse(std::string{}));

/// Extracts a value by dotted path; throws ParseError when absent or not a string.
std::string extract_text_at(const std::string& json_body, const std::string& path);

}  // namespace budgetseg

#include "budgetseg/error.hpp"

namespace budgetseg {

template <typename Parse>
auto complete_and_parse(JudgeClient& judge, JudgeRequest request, const RetryPolicy& retry,
                        Parse&& parse) -> decltype(parse(std::string{})) {
  const auto raw = complete_with_retry(judge, request, retry);
  try {
    return parse(raw);
  } catch (const ParseError&) {
    if (!retry.reprompt_on_parse_error) throw;
  }
  request.prompt += kReprompt;
  return parse(complete_with_retry(judge, request, retry));
}

}  // namespace budgetseg
