#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "tap/config.hpp"
#include "tap/datastore.hpp"
#include "tap/errors.hpp"

using namespace tap;
namespace fs = std::filesystem;

TEST_CASE("default config survives a json round trip") {
  const AppConfig c;
  const Json j = app_config_to_json(c);
  const AppConfig back = app_config_from_json(j);
  CHECK(app_config_to_json(back) == j);
  CHECK(back.training.seed == 0);
  CHECK(back.planner.seed == 0);
}

TEST_CASE("empty path gives defaults") {
  const AppConfig c = load_app_config({});
  CHECK(app_config_to_json(c) == app_config_to_json(AppConfig{}));
}

TEST_CASE("top-level seed propagates unless a section sets its own") {
  AppConfig c = app_config_from_json(Json{{"seed", 9}});
  CHECK(c.training.seed == 9);
  CHECK(c.planner.seed == 9);

  c = app_config_from_json(Json{{"seed", 9}, {"planner", {{"seed", 4}}}});
  CHECK(c.training.seed == 9);
  CHECK(c.planner.seed == 4);

  c.apply_seed(12);
  CHECK(c.seed == 12);
  CHECK(c.training.seed == 12);
  CHECK(c.planner.seed == 12);
}

TEST_CASE("unknown keys are rejected with the section in the message") {
  try {
    app_config_from_json(Json{{"training", {{"epochs", 3}, {"epoch", 4}}}});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("training") != std::string::npos);
    CHECK(msg.find("epoch") != std::string::npos);
  }
  CHECK_THROWS_AS(app_config_from_json(Json{{"sed", 1}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json(Json{{"collect", {{"polcy", "random_edits"}}}}),
                  ConfigError);
}

TEST_CASE("bad enum values and ranges are config errors") {
  CHECK_THROWS_AS(app_config_from_json(Json{{"environment", {{"kind", "mock"}}}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json(Json{{"planner_scorer", "exact"}}), ConfigError);
  CHECK_THROWS_AS(
      app_config_from_json(Json{{"environment", {{"synthetic", {{"similarity", "bleu"}}}}}}),
      ConfigError);
  CHECK_THROWS_AS(
      app_config_from_json(Json{{"environment", {{"synthetic", {{"noise_sigma", -0.1}}}}}}),
      ConfigError);
  CHECK_THROWS_AS(app_config_from_json(Json{{"collect", {{"episodes", 0}}}}), ConfigError);
  CHECK_THROWS_AS(app_config_from_json(Json{{"training", {{"learning_rate", -1.0}}}}),
                  ConfigError);
  CHECK_THROWS_AS(app_config_from_json(Json{{"seed", "zero"}}), ConfigError);
}

TEST_CASE("oracle scoring requires the synthetic environment") {
  const Json j = {{"planner_scorer", "oracle"},
                  {"environment", {{"kind", "llm"}, {"llm", {{"endpoint", "http://localhost:1/v1"}}}}}};
  CHECK_THROWS_AS(app_config_from_json(j), ConfigError);
}

TEST_CASE("model section marks the architecture as given") {
  CHECK_FALSE(app_config_from_json(Json::object()).arch_given);
  CHECK(app_config_from_json(Json{{"model", Json::object()}}).arch_given);
}

TEST_CASE("config files: missing and malformed files are config errors") {
  const auto dir = fs::temp_directory_path() / "tap_cfg_test";
  fs::create_directories(dir);
  CHECK_THROWS_AS(load_app_config(dir / "does_not_exist.json"), ConfigError);

  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{\"seed\": ";
  CHECK_THROWS_AS(load_app_config(bad), ConfigError);

  const auto good = dir / "good.json";
  std::ofstream(good) << R"({"seed": 5, "collect": {"episodes": 2, "steps_per_episode": 3}})";
  const AppConfig c = load_app_config(good);
  CHECK(c.seed == 5);
  CHECK(c.collect.episodes == 2);
  CHECK(c.collect.steps_per_episode == 3);
  fs::remove_all(dir);
}

TEST_CASE("golden config document parses and re-serializes identically") {
  const auto path = fs::path(TAP_SOURCE_DIR) / "docs" / "schemas" / "config.json";
  const Json golden = read_json_file(path);
  CHECK(app_config_to_json(app_config_from_json(golden)) == golden);
}
