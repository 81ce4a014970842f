#include "tap/llm_env.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include <httplib.h>

#include "tap/errors.hpp"

namespace tap {

void LlmEnvConfig::validate() const {
  if (completions == 0) throw ConfigError("environment.llm.completions must be >= 1");
  if (!(timeout_seconds > 0.0)) throw ConfigError("environment.llm.timeout_seconds must be > 0");
  if (model.empty()) throw ConfigError("environment.llm.model must not be empty");
  split_endpoint(endpoint);
}

Json llm_config_to_json(const LlmEnvConfig& c) {
  return {{"endpoint", c.endpoint},
          {"model", c.model},
          {"temperature", c.temperature},
          {"completions", c.completions},
          {"scorer", c.scorer == AnswerScorer::ExactMatch ? "exact_match" : "contains_answer"},
          {"timeout_seconds", c.timeout_seconds},
          {"max_retries", c.max_retries},
          {"api_key_env", c.api_key_env},
          {"system_prompt", c.system_prompt}};
}

LlmEnvConfig llm_config_from_json(const Json& j) {
  constexpr std::string_view section = "environment.llm";
  reject_unknown_keys(j,
                      {"endpoint", "model", "temperature", "completions", "scorer",
                       "timeout_seconds", "max_retries", "api_key_env", "system_prompt"},
                      section);
  LlmEnvConfig c;
  read_config_value(j, "endpoint", c.endpoint, section);
  read_config_value(j, "model", c.model, section);
  read_config_value(j, "temperature", c.temperature, section);
  read_config_value(j, "completions", c.completions, section);
  read_config_value(j, "timeout_seconds", c.timeout_seconds, section);
  read_config_value(j, "max_retries", c.max_retries, section);
  read_config_value(j, "api_key_env", c.api_key_env, section);
  read_config_value(j, "system_prompt", c.system_prompt, section);
  std::string scorer = "contains_answer";
  read_config_value(j, "scorer", scorer, section);
  if (scorer == "exact_match") {
    c.scorer = AnswerScorer::ExactMatch;
  } else if (scorer == "contains_answer") {
    c.scorer = AnswerScorer::ContainsAnswer;
  } else {
    throw ConfigError("environment.llm.scorer: unknown value '" + scorer + "'");
  }
  c.validate();
  return c;
}

std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("environment.llm.endpoint: missing scheme in '" + url + "'");
  }
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("environment.llm.endpoint: unsupported scheme '" + scheme + "'");
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") {
    throw ConfigError("environment.llm.endpoint: built without TLS support");
  }
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == scheme_end + 3) {
    throw ConfigError("environment.llm.endpoint: missing host in '" + url + "'");
  }
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  }
  return out;
}

bool judge_completion(AnswerScorer scorer, std::string_view completion,
                      std::string_view expected) {
  const std::string got = normalize_answer(completion);
  const std::string want = normalize_answer(expected);
  if (scorer == AnswerScorer::ExactMatch) return got == want;
  return !want.empty() && got.find(want) != std::string::npos;
}

LlmEnv::LlmEnv(LlmEnvConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::tie(base_, path_) = split_endpoint(cfg_.endpoint);
}

Json LlmEnv::request_body(const TaskInput& task, const ReasoningChain& chain) const {
  std::string task_text;
  for (const auto& t : task.text) {
    if (!task_text.empty()) task_text.push_back(' ');
    task_text += t;
  }
  const std::string user = "Task: " + task_text + "\n\nGuidance:\n" + render_chain(chain);
  return {{"model", cfg_.model},
          {"messages",
           Json::array({{{"role", "system"}, {"content", cfg_.system_prompt}},
                        {{"role", "user"}, {"content", user}}})},
          {"temperature", cfg_.temperature},
          {"n", cfg_.completions}};
}

std::vector<std::string> LlmEnv::parse_completions(const std::string& body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("chat completion: ") + e.what(), e.byte);
  }
  std::vector<std::string> out;
  try {
    for (const auto& choice : j.at("choices")) {
      const Json& content = choice.at("message").at("content");
      out.push_back(content.is_null() ? std::string() : content.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("chat completion: unexpected shape: ") + e.what(), 0);
  }
  return out;
}

double LlmEnv::evaluate(const TaskInput& task, const ReasoningChain& chain) {
  if (!task.expected_answer) {
    throw EnvError("llm env: task '" + task.id + "' has no expected answer");
  }
  httplib::Client client(base_);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = request_body(task, chain).dump();

  std::string last_failure;
  for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    ++requests_;
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      last_failure = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw EnvError("llm env: HTTP " + std::to_string(res->status) + " from " + cfg_.endpoint);
    }
    const auto completions = parse_completions(res->body);
    if (completions.empty()) throw ParseError("chat completion: no choices", 0);
    std::size_t correct = 0;
    for (const auto& c : completions) {
      if (judge_completion(cfg_.scorer, c, *task.expected_answer)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(completions.size());
  }
  throw EnvError("llm env: " + last_failure + " after " +
                 std::to_string(cfg_.max_retries + 1) + " attempts to " + cfg_.endpoint);
}

}  // namespace tap
