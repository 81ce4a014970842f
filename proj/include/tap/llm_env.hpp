#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "tap/environments.hpp"
#include "tap/json_io.hpp"

namespace tap {

enum class AnswerScorer { ExactMatch, ContainsAnswer };

struct LlmEnvConfig {
  /// Full URL of an OpenAI-compatible chat-completions endpoint.
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-3.5-turbo";
  double temperature = 0.7;
  std::size_t completions = 3;  // m; reward = fraction judged correct
  AnswerScorer scorer = AnswerScorer::ContainsAnswer;
  double timeout_seconds = 30.0;  // per request
  std::size_t max_retries = 2;
  std::string api_key_env = "TAP_API_KEY";
  std::string system_prompt =
      "Solve the task. Use the guidance as your reasoning outline and end with "
      "the final answer.";

  /// Throws ConfigError unless m >= 1, timeout > 0 and the endpoint parses.
  void validate() const;
};

Json llm_config_to_json(const LlmEnvConfig& cfg);
LlmEnvConfig llm_config_from_json(const Json& j);

/// Splits "scheme://host[:port]/path" into ("scheme://host[:port]", "/path").
/// Throws ConfigError on anything else.
std::pair<std::string, std::string> split_endpoint(const std::string& url);

/// Trimmed, lower-cased, inner whitespace collapsed.
std::string normalize_answer(std::string_view text);
bool judge_completion(AnswerScorer scorer, std::string_view completion,
                      std::string_view expected);

/// Sends the task with the rendered chain as guidance and returns the
/// fraction of the m completions the scorer accepts. Connection failures,
/// 5xx and 429 responses are retried; other 4xx responses and exhausted
/// retries throw EnvError; an unparseable body throws ParseError.
class LlmEnv : public Environment {
 public:
  explicit LlmEnv(LlmEnvConfig cfg);

  double evaluate(const TaskInput& task, const ReasoningChain& chain) override;
  bool deterministic() const override { return false; }
  double cost_per_query() const override { return cfg_.timeout_seconds / 10.0; }

  /// The request body sent for (task, chain).
  Json request_body(const TaskInput& task, const ReasoningChain& chain) const;
  /// Completion texts of a chat-completions response body.
  static std::vector<std::string> parse_completions(const std::string& body);

  std::size_t requests_sent() const { return requests_; }

 private:
  LlmEnvConfig cfg_;
  std::string base_;
  std::string path_;
  std::size_t requests_ = 0;
};

}  // namespace tap
