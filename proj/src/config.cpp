#include "tap/config.hpp"

#include "tap/datastore.hpp"
#include "tap/errors.hpp"

namespace tap {

namespace {

const char* similarity_name(Similarity s) {
  return s == Similarity::TokenF1 ? "token_f1" : "normalized_levenshtein";
}

Json generator_to_json(const SyntheticTaskConfig& g) {
  return {{"content_pool", g.content_pool},
          {"words_per_task", g.words_per_task},
          {"min_steps", g.min_steps},
          {"max_steps", g.max_steps},
          {"distractor_inserts", g.distractor_inserts},
          {"word_drops", g.word_drops},
          {"word_replacements", g.word_replacements},
          {"id_prefix", g.id_prefix}};
}

SyntheticTaskConfig generator_from_json(const Json& j) {
  constexpr std::string_view section = "environment.synthetic.generator";
  reject_unknown_keys(j,
                      {"content_pool", "words_per_task", "min_steps", "max_steps", "distractor_inserts",
                       "word_drops", "word_replacements", "id_prefix"},
                      section);
  SyntheticTaskConfig g;
  read_config_value(j, "content_pool", g.content_pool, section);
  read_config_value(j, "words_per_task", g.words_per_task, section);
  read_config_value(j, "min_steps", g.min_steps, section);
  read_config_value(j, "max_steps", g.max_steps, section);
  read_config_value(j, "distractor_inserts", g.distractor_inserts, section);
  read_config_value(j, "word_drops", g.word_drops, section);
  read_config_value(j, "word_replacements", g.word_replacements, section);
  read_config_value(j, "id_prefix", g.id_prefix, section);
  return g;
}

SyntheticEnvConfig synthetic_from_json(const Json& j) {
  constexpr std::string_view section = "environment.synthetic";
  reject_unknown_keys(j, {"similarity", "noise_sigma", "n_tasks", "generator"}, section);
  SyntheticEnvConfig c;
  std::string sim = similarity_name(c.similarity);
  read_config_value(j, "similarity", sim, section);
  if (sim == "token_f1") {
    c.similarity = Similarity::TokenF1;
  } else if (sim == "normalized_levenshtein") {
    c.similarity = Similarity::NormalizedLevenshtein;
  } else {
    throw ConfigError("environment.synthetic.similarity: unknown value '" + sim + "'");
  }
  read_config_value(j, "noise_sigma", c.noise_sigma, section);
  read_config_value(j, "n_tasks", c.n_tasks, section);
  if (j.contains("generator")) c.generator = generator_from_json(j.at("generator"));
  return c;
}

}  // namespace

EnvKind parse_env_kind(const std::string& name) {
  if (name == "synthetic") return EnvKind::Synthetic;
  if (name == "llm") return EnvKind::Llm;
  throw ConfigError("environment.kind: unknown value '" + name + "'");
}

void AppConfig::apply_seed(std::uint64_t s) {
  seed = s;
  training.seed = s;
  planner.seed = s;
}

void AppConfig::validate() const {
  arch.validate();
  training.validate();
  planner.validate();
  if (env_kind == EnvKind::Llm) llm.validate();
  if (!(synthetic.noise_sigma >= 0.0)) {
    throw ConfigError("environment.synthetic.noise_sigma must be >= 0");
  }
  if (collect.episodes == 0) throw ConfigError("collect.episodes must be >= 1");
  if (scorer == ScorerKind::Oracle && env_kind != EnvKind::Synthetic) {
    throw ConfigError("planner_scorer: oracle scoring needs the synthetic environment");
  }
}

Json app_config_to_json(const AppConfig& c) {
  return {{"seed", c.seed},
          {"environment",
           {{"kind", c.env_kind == EnvKind::Synthetic ? "synthetic" : "llm"},
            {"synthetic",
             {{"similarity", similarity_name(c.synthetic.similarity)},
              {"noise_sigma", c.synthetic.noise_sigma},
              {"n_tasks", c.synthetic.n_tasks},
              {"generator", generator_to_json(c.synthetic.generator)}}},
            {"llm", llm_config_to_json(c.llm)}}},
          {"model", arch_to_json(c.arch)},
          {"training", train_config_to_json(c.training)},
          {"planner", planner_config_to_json(c.planner)},
          {"planner_scorer", c.scorer == ScorerKind::Model ? "model" : "oracle"},
          {"collect",
           {{"policy", c.collect.policy == CollectPolicy::RandomEdits ? "random_edits"
                                                                      : "planner_guided"},
            {"episodes", c.collect.episodes},
            {"steps_per_episode", c.collect.steps_per_episode}}},
          {"paths",
           {{"tasks", c.paths.tasks},
            {"data", c.paths.data},
            {"model", c.paths.model},
            {"out", c.paths.out}}}};
}

AppConfig app_config_from_json(const Json& j) {
  reject_unknown_keys(j,
                      {"seed", "environment", "model", "training", "planner",
                       "planner_scorer", "collect", "paths"},
                      "config");
  AppConfig c;
  read_config_value(j, "seed", c.seed, "config");
  if (j.contains("environment")) {
    const Json& e = j.at("environment");
    reject_unknown_keys(e, {"kind", "synthetic", "llm"}, "environment");
    std::string kind = "synthetic";
    read_config_value(e, "kind", kind, "environment");
    c.env_kind = parse_env_kind(kind);
    if (e.contains("synthetic")) c.synthetic = synthetic_from_json(e.at("synthetic"));
    if (e.contains("llm")) c.llm = llm_config_from_json(e.at("llm"));
  }
  if (j.contains("model")) {
    c.arch = arch_from_json(j.at("model"));
    c.arch_given = true;
  }
  if (j.contains("training")) c.training = train_config_from_json(j.at("training"));
  if (!j.contains("training") || !j.at("training").contains("seed")) c.training.seed = c.seed;
  if (j.contains("planner")) c.planner = planner_config_from_json(j.at("planner"));
  if (!j.contains("planner") || !j.at("planner").contains("seed")) c.planner.seed = c.seed;
  std::string scorer = "model";
  read_config_value(j, "planner_scorer", scorer, "config");
  if (scorer == "model") {
    c.scorer = ScorerKind::Model;
  } else if (scorer == "oracle") {
    c.scorer = ScorerKind::Oracle;
  } else {
    throw ConfigError("planner_scorer: unknown value '" + scorer + "'");
  }
  if (j.contains("collect")) {
    const Json& s = j.at("collect");
    reject_unknown_keys(s, {"policy", "episodes", "steps_per_episode"}, "collect");
    std::string policy = "random_edits";
    read_config_value(s, "policy", policy, "collect");
    if (policy == "random_edits") {
      c.collect.policy = CollectPolicy::RandomEdits;
    } else if (policy == "planner_guided") {
      c.collect.policy = CollectPolicy::PlannerGuided;
    } else {
      throw ConfigError("collect.policy: unknown value '" + policy + "'");
    }
    read_config_value(s, "episodes", c.collect.episodes, "collect");
    read_config_value(s, "steps_per_episode", c.collect.steps_per_episode, "collect");
  }
  if (j.contains("paths")) {
    const Json& p = j.at("paths");
    reject_unknown_keys(p, {"tasks", "data", "model", "out"}, "paths");
    read_config_value(p, "tasks", c.paths.tasks, "paths");
    read_config_value(p, "data", c.paths.data, "paths");
    read_config_value(p, "model", c.paths.model, "paths");
    read_config_value(p, "out", c.paths.out, "paths");
  }
  c.validate();
  return c;
}

AppConfig load_app_config(const std::filesystem::path& path) {
  if (path.empty()) return AppConfig{};
  Json j;
  try {
    j = read_json_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return app_config_from_json(j);
}

}  // namespace tap
