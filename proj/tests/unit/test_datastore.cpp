#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "tap/datastore.hpp"
#include "tap/environments.hpp"
#include "tap/errors.hpp"
#include "tap/planner.hpp"

using namespace tap;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tap_ds_" + name);
  fs::remove(p);
  return p;
}

fs::path schema_dir() { return fs::path(TAP_SOURCE_DIR) / "docs" / "schemas"; }

std::vector<Transition> sample_transitions(std::size_t episodes) {
  SyntheticTaskConfig gen;
  const auto tasks = generate_synthetic_tasks(7, gen, 21);
  auto env = SyntheticOracleEnv::from_tasks(tasks);
  CollectConfig cc;
  cc.episodes = episodes;
  cc.steps_per_episode = 10;
  cc.seed = 21;
  cc.enum_cfg.example_fragments = {ReasoningChain{{{"for", "example"}}}};
  cc.enum_cfg.instruction_steps = {{"check", "the", "units"}};
  return collect_transitions(env, tasks, cc).transitions;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("append and load") {
  const auto path = temp_path("append.jsonl");
  const auto data = sample_transitions(1);
  append_transition(path, data[0]);
  CHECK(load_dataset(path) == std::vector<Transition>{data[0]});
  append_transition(path, data[1]);
  CHECK(line_count(path) == 2);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[1] == data[1]);

  DatasetWriter writer(path, true);
  for (const auto& t : data) writer.write(t);
  writer.flush();
  CHECK(writer.written() == data.size());
  CHECK(load_dataset(path) == data);
  fs::remove(path);
}

TEST_CASE("empty and malformed files") {
  const auto path = temp_path("bad.jsonl");
  write_text_file(path, "");
  CHECK(load_dataset(path).empty());

  const auto data = sample_transitions(1);
  write_dataset(path, std::span(data.data(), 2));
  std::string text = read_text_file(path);
  text += "{not json\n";
  write_text_file(path, text);
  try {
    load_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.position() == 3);
  }

  // Structurally valid JSON whose next_chain does not follow from the action.
  auto broken = data[0];
  broken.next_chain.steps.push_back({"extra"});
  write_dataset(path, std::span(&broken, 1));
  CHECK_THROWS_AS(load_dataset(path), ParseError);
  CHECK(load_dataset(path, false).size() == 1);

  CHECK_THROWS_AS(load_dataset(temp_path("missing.jsonl")), IoError);
  fs::remove(path);
}

TEST_CASE("blank lines are skipped") {
  const auto path = temp_path("blank.jsonl");
  const auto data = sample_transitions(1);
  write_text_file(path, "\n" + transition_to_json(data[0]).dump() + "\n\n");
  CHECK(load_dataset(path).size() == 1);
  fs::remove(path);
}

TEST_CASE("thousand-record round trip is byte-identical") {
  const auto data = sample_transitions(100);
  REQUIRE(data.size() == 1000);
  const auto a = temp_path("a.jsonl");
  const auto b = temp_path("b.jsonl");
  write_dataset(a, data);
  const auto loaded = load_dataset(a);
  CHECK(loaded == data);
  write_dataset(b, loaded);
  CHECK(read_text_file(a) == read_text_file(b));
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("task files") {
  const auto tasks = generate_synthetic_tasks(5, SyntheticTaskConfig{}, 2);
  const auto path = temp_path("tasks.jsonl");
  write_tasks(path, tasks);
  CHECK(load_tasks(path) == tasks);
  fs::remove(path);
}

TEST_CASE("reports") {
  RunReport r;
  r.run_id = "run-1";
  r.command = "optimize";
  r.seed = 5;
  r.config = Json{{"seed", 5}};
  r.metrics = Json::array({Json{{"step", 0}, {"reward", 0.5}}});
  r.summary = Json{{"final_reward", 0.75}};
  r.env_queries = 9;
  r.wall_clock_seconds = 0.125;
  const auto path = temp_path("report.json");
  write_report(r, path);
  const auto j = read_json_file(path);
  CHECK(j.at("schema_version") == kReportSchemaVersion);
  const auto back = read_report(path);
  CHECK(report_to_json(back) == report_to_json(r));

  auto wrong = report_to_json(r);
  wrong["schema_version"] = 99;
  CHECK_THROWS_AS(report_from_json(wrong), ParseError);
  wrong.erase("schema_version");
  CHECK_THROWS_AS(report_from_json(wrong), ParseError);
  fs::remove(path);
}

TEST_CASE("probe count audit") {
  const auto tasks = generate_synthetic_tasks(1, SyntheticTaskConfig{}, 6);
  auto env = SyntheticOracleEnv::from_tasks(tasks);
  CountingEnv counter(env);
  ArchConfig arch;
  arch.d = 8;
  arch.hash_buckets = 64;
  const auto m = init_world_model(arch, 6);
  PlannerConfig cfg;
  cfg.outer_steps = 8;
  cfg.candidates = 10;
  cfg.probe_env = true;
  cfg.patience = 0;
  const auto tr = optimize(counter, m, tasks[0].input, tasks[0].initial_chain, cfg);
  const auto j = trajectory_to_json(tr);
  std::size_t logged = j.at("initial_reward").is_null() ? 0 : 1;
  for (const auto& s : j.at("steps")) logged += s.at("probe_reward").is_null() ? 0 : 1;
  CHECK(logged == 9);
  CHECK(counter.count() == logged);
  CHECK(j.at("env_queries") == logged);
}

TEST_CASE("golden schema examples re-serialize identically") {
  const auto dir = schema_dir();
  {
    const auto p = dir / "transition.jsonl";
    const auto data = load_dataset(p);
    CHECK_FALSE(data.empty());
    const auto out = temp_path("golden.jsonl");
    write_dataset(out, data);
    CHECK(read_text_file(out) == read_text_file(p));
    fs::remove(out);
  }
  {
    const auto p = dir / "task.jsonl";
    const auto tasks = load_tasks(p);
    CHECK_FALSE(tasks.empty());
    const auto out = temp_path("golden_tasks.jsonl");
    write_tasks(out, tasks);
    CHECK(read_text_file(out) == read_text_file(p));
    fs::remove(out);
  }
  {
    const auto j = read_json_file(dir / "trajectory.json");
    CHECK(trajectory_to_json(trajectory_from_json(j)) == j);
    const auto tr = trajectory_from_json(j);
    CHECK(replay(tr) == tr.final_chain);
  }
  {
    const auto j = read_json_file(dir / "report.json");
    CHECK(report_to_json(report_from_json(j)) == j);
  }
  {
    const auto j = read_json_file(dir / "mdp.json");
    const auto m = mdp_from_json(j);
    CHECK_NOTHROW(m.validate());
    CHECK(mdp_to_json(m) == j);
  }
}
