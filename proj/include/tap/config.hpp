#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tap/environments.hpp"
#include "tap/json_io.hpp"
#include "tap/llm_env.hpp"
#include "tap/planner.hpp"
#include "tap/world_model.hpp"

namespace tap {

enum class EnvKind { Synthetic, Llm };
enum class ScorerKind { Model, Oracle };

struct SyntheticEnvConfig {
  Similarity similarity = Similarity::TokenF1;
  double noise_sigma = 0.0;
  std::size_t n_tasks = 20;  // generated when no task file is given
  SyntheticTaskConfig generator;
};

struct CollectSection {
  CollectPolicy policy = CollectPolicy::RandomEdits;
  std::size_t episodes = 100;
  std::size_t steps_per_episode = 10;
};

struct PathsSection {
  std::string tasks;
  std::string data;
  std::string model;
  std::string out;
};

/// One JSON document with sections seed, environment, model, training,
/// planner, collect and paths. Unknown keys are rejected everywhere.
struct AppConfig {
  std::uint64_t seed = 0;
  EnvKind env_kind = EnvKind::Synthetic;
  SyntheticEnvConfig synthetic;
  LlmEnvConfig llm;
  ArchConfig arch;
  bool arch_given = false;  // the file had a "model" section
  TrainConfig training;
  PlannerConfig planner;
  ScorerKind scorer = ScorerKind::Model;
  CollectSection collect;
  PathsSection paths;

  /// Copies the top-level seed into the training and planner sections.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

Json app_config_to_json(const AppConfig& cfg);
/// Throws ConfigError naming the offending field.
AppConfig app_config_from_json(const Json& j);
/// Missing path gives the defaults; unreadable or malformed files throw
/// ConfigError.
AppConfig load_app_config(const std::filesystem::path& path);

EnvKind parse_env_kind(const std::string& name);

}  // namespace tap
