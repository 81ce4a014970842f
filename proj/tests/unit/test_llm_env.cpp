#include "doctest.h"

#include <atomic>
#include <thread>

#include <httplib.h>

#include "tap/errors.hpp"
#include "tap/llm_env.hpp"

using namespace tap;

namespace {

// Serves scripted responses on a free local port; one entry per request,
// the last entry repeats.
class ScriptedServer {
 public:
  struct Reply {
    int status;
    std::string body;
  };

  explicit ScriptedServer(std::vector<Reply> script) : script_(std::move(script)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      const std::size_t i = std::min<std::size_t>(hits_++, script_.size() - 1);
      res.status = script_[i].status;
      res.set_content(script_[i].body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScriptedServer() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }
  std::size_t hits() const { return hits_; }
  std::string last_body() const { return last_body_; }
  std::string last_auth() const { return last_auth_; }

 private:
  std::vector<Reply> script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> hits_{0};
  std::string last_body_;
  std::string last_auth_;
};

std::string completions_body(const std::vector<std::string>& texts) {
  Json choices = Json::array();
  for (const auto& t : texts) choices.push_back({{"message", {{"role", "assistant"}, {"content", t}}}});
  return Json{{"choices", choices}}.dump();
}

TaskInput arithmetic_task() {
  TaskInput t;
  t.id = "sum";
  t.text = {"what", "is", "two", "plus", "two"};
  t.expected_answer = "Four";
  return t;
}

LlmEnvConfig config_for(const ScriptedServer& s) {
  LlmEnvConfig c;
  c.endpoint = s.endpoint();
  c.completions = 3;
  c.timeout_seconds = 2.0;
  c.max_retries = 2;
  c.api_key_env = "TAP_TEST_LLM_KEY";
  return c;
}

const ReasoningChain kChain{{{"add", "the", "numbers"}, {"state", "the", "total"}}};

}  // namespace

TEST_CASE("split_endpoint") {
  CHECK(split_endpoint("http://localhost:8080/v1/chat") ==
        std::pair<std::string, std::string>{"http://localhost:8080", "/v1/chat"});
  CHECK(split_endpoint("http://example.org") ==
        std::pair<std::string, std::string>{"http://example.org", "/"});
  CHECK_THROWS_AS(split_endpoint("localhost/v1"), ConfigError);
  CHECK_THROWS_AS(split_endpoint("ftp://host/v1"), ConfigError);
  CHECK_THROWS_AS(split_endpoint("http:///v1"), ConfigError);
}

TEST_CASE("normalize and judge answers") {
  CHECK(normalize_answer("  The   Answer\tIS\n4 ") == "the answer is 4");
  CHECK(normalize_answer("") == "");
  CHECK(judge_completion(AnswerScorer::ExactMatch, " FOUR ", "four"));
  CHECK_FALSE(judge_completion(AnswerScorer::ExactMatch, "it is four", "four"));
  CHECK(judge_completion(AnswerScorer::ContainsAnswer, "So it is  Four.", "four"));
  CHECK_FALSE(judge_completion(AnswerScorer::ContainsAnswer, "five", "four"));
  CHECK_FALSE(judge_completion(AnswerScorer::ContainsAnswer, "anything", "  "));
}

TEST_CASE("config validation and json round trip") {
  LlmEnvConfig c;
  c.endpoint = "http://localhost:1/v1";
  CHECK(llm_config_to_json(llm_config_from_json(llm_config_to_json(c))) == llm_config_to_json(c));
  c.completions = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.completions = 1;
  c.timeout_seconds = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(llm_config_from_json(Json{{"scorer", "fuzzy"}}), ConfigError);
  CHECK_THROWS_AS(llm_config_from_json(Json{{"endpont", "x"}}), ConfigError);
}

TEST_CASE("parse_completions") {
  CHECK(LlmEnv::parse_completions(completions_body({"a", "b"})) ==
        std::vector<std::string>{"a", "b"});
  CHECK(LlmEnv::parse_completions(R"({"choices":[{"message":{"content":null}}]})") ==
        std::vector<std::string>{""});
  CHECK_THROWS_AS(LlmEnv::parse_completions("not json"), ParseError);
  CHECK_THROWS_AS(LlmEnv::parse_completions(R"({"data": []})"), ParseError);
}

TEST_CASE("reward is the fraction of accepted completions") {
  ScriptedServer server({{200, completions_body({"The answer is four.", "five", "FOUR"})}});
  LlmEnv env(config_for(server));
  CHECK(env.evaluate(arithmetic_task(), kChain) == doctest::Approx(2.0 / 3.0));
  CHECK(server.hits() == 1);

  const Json sent = Json::parse(server.last_body());
  CHECK(sent.at("n") == 3);
  CHECK(sent.at("messages").size() == 2);
  const std::string user = sent.at("messages").at(1).at("content");
  CHECK(user.find("what is two plus two") != std::string::npos);
  CHECK(user.find(render_chain(kChain)) != std::string::npos);
}

TEST_CASE("api key is sent as a bearer token when set") {
  ScriptedServer server({{200, completions_body({"four"})}});
  setenv("TAP_TEST_LLM_KEY", "sekret", 1);
  LlmEnv env(config_for(server));
  env.evaluate(arithmetic_task(), kChain);
  CHECK(server.last_auth() == "Bearer sekret");
  unsetenv("TAP_TEST_LLM_KEY");
}

TEST_CASE("5xx and 429 are retried") {
  ScriptedServer server({{503, "{}"}, {429, "{}"}, {200, completions_body({"four"})}});
  LlmEnv env(config_for(server));
  CHECK(env.evaluate(arithmetic_task(), kChain) == 1.0);
  CHECK(server.hits() == 3);
  CHECK(env.requests_sent() == 3);
}

TEST_CASE("exhausted retries throw EnvError") {
  ScriptedServer server({{500, "{}"}});
  LlmEnv env(config_for(server));
  CHECK_THROWS_AS(env.evaluate(arithmetic_task(), kChain), EnvError);
  CHECK(server.hits() == 3);
}

TEST_CASE("other 4xx responses fail immediately") {
  ScriptedServer server({{401, R"({"error":"unauthorized"})"}});
  LlmEnv env(config_for(server));
  CHECK_THROWS_AS(env.evaluate(arithmetic_task(), kChain), EnvError);
  CHECK(server.hits() == 1);
}

TEST_CASE("malformed bodies are parse errors") {
  ScriptedServer server({{200, "<html>oops</html>"}});
  LlmEnv env(config_for(server));
  CHECK_THROWS_AS(env.evaluate(arithmetic_task(), kChain), ParseError);
}

TEST_CASE("empty choices are parse errors") {
  ScriptedServer server({{200, R"({"choices": []})"}});
  LlmEnv env(config_for(server));
  CHECK_THROWS_AS(env.evaluate(arithmetic_task(), kChain), ParseError);
}

TEST_CASE("tasks without an expected answer are rejected") {
  ScriptedServer server({{200, completions_body({"four"})}});
  LlmEnv env(config_for(server));
  TaskInput t = arithmetic_task();
  t.expected_answer.reset();
  CHECK_THROWS_AS(env.evaluate(t, kChain), EnvError);
  CHECK(server.hits() == 0);
}

TEST_CASE("connection refused is retried then reported") {
  LlmEnvConfig c;
  c.endpoint = "http://127.0.0.1:9/v1/chat/completions";
  c.timeout_seconds = 0.5;
  c.max_retries = 1;
  LlmEnv env(c);
  CHECK_THROWS_AS(env.evaluate(arithmetic_task(), kChain), EnvError);
  CHECK(env.requests_sent() == 2);
}
