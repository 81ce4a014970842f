#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tap/cli.hpp"
#include "tap/datastore.hpp"
#include "tap/theory.hpp"
#include "tap/world_model.hpp"

using namespace tap;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run tap_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct Workdir {
  fs::path dir;
  Workdir() : dir(fs::temp_directory_path() / "tap_cli_test") {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workdir() { fs::remove_all(dir); }
  std::string at(const std::string& name) const { return (dir / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return at(name);
  }
};

std::size_t count_lines(const std::string& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with the config code") {
  CHECK(tap_run({}).code == cli::kExitConfig);
  CHECK(tap_run({"frobnicate"}).code == cli::kExitConfig);
  CHECK(tap_run({"validate"}).code == cli::kExitConfig);
  CHECK(tap_run({"validate", "--suite", "nonsense"}).code == cli::kExitConfig);
  CHECK(tap_run({"train", "--data", "/nonexistent/data.jsonl", "--out", "/tmp/x"}).code ==
        cli::kExitConfig);
  CHECK(tap_run({"collect", "--episodes", "1"}).code == cli::kExitConfig);
}

TEST_CASE("help exits cleanly") {
  const Run r = tap_run({"--help"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("collect") != std::string::npos);
}

TEST_CASE("bad config files exit with the config code") {
  Workdir w;
  const auto unknown = w.write("unknown.json", R"({"trainng": {}})");
  Run r = tap_run({"validate", "--suite", "simlemma", "--config", unknown});
  CHECK(r.code == cli::kExitConfig);
  CHECK(r.err.find("trainng") != std::string::npos);
  const auto broken = w.write("broken.json", "{");
  CHECK(tap_run({"validate", "--suite", "simlemma", "--config", broken}).code ==
        cli::kExitConfig);
}

TEST_CASE("collect, train, export and optimize end to end") {
  Workdir w;
  const auto data = w.at("data.jsonl");
  const auto tasks = w.at("tasks.jsonl");
  Run r = tap_run({"collect", "--episodes", "2", "--steps", "3", "--seed", "1", "--out", data,
                   "--tasks-out", tasks});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(count_lines(data) == 6);
  CHECK(load_dataset(data, true).size() == 6);
  CHECK(r.out.find("collected 6 transitions") != std::string::npos);

  SUBCASE("zero learning rate leaves the initial weights") {
    const auto cfg = w.write(
        "lr0.json",
        R"({"seed": 3, "training": {"learning_rate": 0.0, "epochs": 3, "batch_size": 2}})");
    const auto ckpt = w.at("m.ckpt");
    r = tap_run({"train", "--config", cfg, "--data", data, "--out", ckpt});
    REQUIRE(r.code == cli::kExitOk);
    CHECK(load_checkpoint(ckpt) == init_world_model(ArchConfig{}, 3));
    const Json history = read_json_file(ckpt + ".history.json");
    CHECK(history.at("epochs").size() == 3);
    CHECK(history.at("train_size").get<std::size_t>() + history.at("holdout_size").get<std::size_t>() == 6);
  }

  SUBCASE("export writes one row per transition and d+1 columns") {
    const auto cfg = w.write("small.json", R"({"training": {"epochs": 1, "batch_size": 2}})");
    const auto ckpt = w.at("m.ckpt");
    REQUIRE(tap_run({"train", "--config", cfg, "--data", data, "--out", ckpt}).code ==
            cli::kExitOk);
    const auto more = w.at("more.jsonl");
    REQUIRE(tap_run({"collect", "--episodes", "4", "--steps", "3", "--out", more}).code ==
            cli::kExitOk);
    const auto csv = w.at("z.csv");
    r = tap_run({"export-embeddings", "--model", ckpt, "--data", more, "--out", csv, "--limit",
                 "10"});
    REQUIRE(r.code == cli::kExitOk);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    const std::size_t d = ArchConfig{}.d;
    CHECK(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) == d);
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++rows;
      CHECK(static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) == d);
    }
    CHECK(rows == 10);
  }

  SUBCASE("optimize with the oracle scorer writes trajectories and a report") {
    const auto cfg = w.write(
        "plan.json",
        R"({"planner": {"horizon": 1, "outer_steps": 2, "candidates": 4, "continuations": 1}})");
    const auto traj = w.at("traj.json");
    const auto report = w.at("report.json");
    r = tap_run({"optimize", "--config", cfg, "--scorer", "oracle", "--task-file", tasks,
                 "--out", traj, "--report", report});
    REQUIRE(r.code == cli::kExitOk);
    const Json doc = read_json_file(traj);
    CHECK(doc.at("scorer") == "oracle");
    CHECK(doc.at("runs").size() == count_lines(tasks));
    for (const auto& run : doc.at("runs")) {
      CHECK(run.at("final_reward").get<double>() >= run.at("initial_reward").get<double>());
    }
    const Json rep = read_json_file(report);
    CHECK(rep.at("command") == "optimize");
    CHECK(rep.at("env_queries").get<std::size_t>() > 0);
  }

  SUBCASE("architecture mismatch against the checkpoint is a config error") {
    const auto cfg = w.write("small.json", R"({"training": {"epochs": 1, "batch_size": 2}})");
    const auto ckpt = w.at("m.ckpt");
    REQUIRE(tap_run({"train", "--config", cfg, "--data", data, "--out", ckpt}).code ==
            cli::kExitOk);
    const auto other = w.write("d8.json", R"({"model": {"d": 8}})");
    CHECK(tap_run({"export-embeddings", "--config", other, "--model", ckpt, "--data", data,
                   "--out", w.at("z.csv")})
              .code == cli::kExitConfig);
  }

  SUBCASE("diverging training exits with the numerics code") {
    const auto cfg = w.write(
        "boom.json",
        R"({"training": {"optimizer": "sgd", "learning_rate": 1e200, "epochs": 3, "batch_size": 2}})");
    r = tap_run({"train", "--config", cfg, "--data", data, "--out", w.at("boom.ckpt")});
    CHECK(r.code == cli::kExitNumeric);
  }
}

TEST_CASE("corrupt inputs exit with the environment/io code") {
  Workdir w;
  const auto data = w.write("data.jsonl", "{\"not\": \"a transition\"}\n");
  CHECK(tap_run({"train", "--data", data, "--out", w.at("m.ckpt")}).code == cli::kExitEnv);
  const auto ckpt = w.write("m.ckpt", "garbage");
  CHECK(tap_run({"export-embeddings", "--model", ckpt, "--data", data, "--out", w.at("z.csv")})
            .code == cli::kExitEnv);
}

TEST_CASE("unreachable llm endpoint exits with the environment code") {
  Workdir w;
  const auto tasks = w.write(
      "tasks.jsonl",
      R"({"id":"t0","text":["what","is","two","plus","two"],"expected_answer":"4","initial_chain":[["add","numbers"]]})"
      "\n");
  const auto cfg = w.write("llm.json", R"({"environment": {"kind": "llm", "llm": {
      "endpoint": "http://127.0.0.1:9/v1/chat/completions", "timeout_seconds": 0.5,
      "max_retries": 0}}})");
  const Run r = tap_run({"collect", "--config", cfg, "--tasks", tasks, "--episodes", "1",
                         "--steps", "1", "--out", w.at("d.jsonl")});
  CHECK(r.code == cli::kExitEnv);
}

TEST_CASE("validate simlemma passes and writes reports") {
  Workdir w;
  const Run r = tap_run({"validate", "--suite", "simlemma", "--trials", "10", "--out-dir",
                         w.at("out")});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("10/10") != std::string::npos);
  CHECK(fs::exists(w.at("out/simlemma.json")));
  CHECK(count_lines(w.at("out/simlemma.csv")) == 11);
}

TEST_CASE("bench reports K*H*M evaluations per row") {
  Workdir w;
  const Run r = tap_run({"bench", "--k", "4,8", "--horizon", "1,3", "--d", "8", "--reps", "1",
                         "--out-dir", w.at("out")});
  REQUIRE(r.code == cli::kExitOk);
  const Json j = read_json_file(w.at("out/bench.json"));
  const auto& rows = j.at("rows");
  CHECK(rows.size() == 4);
  for (const auto& row : rows) {
    CHECK(row.at("evaluations").get<std::size_t>() ==
          row.at("k").get<std::size_t>() * row.at("horizon").get<std::size_t>() *
              row.at("continuations").get<std::size_t>());
  }
}
