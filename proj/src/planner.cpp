#include "tap/planner.hpp"

#include <cmath>

#include "tap/errors.hpp"

namespace tap {

namespace {

constexpr int kContinuationRetries = 8;

EditAction sample_continuation(const ReasoningChain& chain,
                               const std::vector<Token>& vocab,
                               const PlannerConfig& cfg, Rng& rng,
                               ReasoningChain& next) {
  for (int attempt = 0; attempt < kContinuationRetries; ++attempt) {
    EditAction a = sample_action(chain, vocab, cfg.weights, rng, cfg.enum_cfg);
    try {
      next = apply_edit(chain, a);
      return a;
    } catch (const Error&) {
    }
  }
  next = chain;
  return NoOpEdit{};
}

}  // namespace

void PlannerConfig::validate() const {
  if (horizon == 0) throw ConfigError("planner.horizon must be >= 1");
  if (outer_steps == 0) throw ConfigError("planner.outer_steps must be >= 1");
  if (candidates == 0) throw ConfigError("planner.candidates must be >= 1");
  if (continuations == 0) throw ConfigError("planner.continuations must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("planner.temperature must be > 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("planner.gamma must be in [0, 1)");
  if (weights.token < 0 || weights.step < 0 || weights.structure < 0) {
    throw ConfigError("planner.weights must be non-negative");
  }
}

RolloutResult rollout(const WorldModel& model, std::span<const double> z,
                      const EditAction& first_action,
                      const ReasoningChain& chain_at_z,
                      const std::vector<Token>& vocab, const PlannerConfig& cfg,
                      Rng& rng) {
  if (cfg.horizon == 0) throw ConfigError("planner.horizon must be >= 1");
  RolloutResult out;
  out.z = predict_transition(model, z, first_action, chain_at_z);
  out.evaluations = 1;
  ReasoningChain chain = apply_edit(chain_at_z, first_action);
  for (std::size_t h = 1; h < cfg.horizon; ++h) {
    ReasoningChain next;
    EditAction a = sample_continuation(chain, vocab, cfg, rng, next);
    out.z = predict_transition(model, out.z, a, chain);
    ++out.evaluations;
    out.continuation.push_back(std::move(a));
    chain = std::move(next);
  }
  return out;
}

ReasoningChain symbolic_rollout(const EditAction& first_action,
                                const ReasoningChain& chain,
                                const std::vector<Token>& vocab,
                                const PlannerConfig& cfg, Rng& rng) {
  ReasoningChain cur = apply_edit(chain, first_action);
  for (std::size_t h = 1; h < cfg.horizon; ++h) {
    ReasoningChain next;
    sample_continuation(cur, vocab, cfg, rng, next);
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> score_candidates(const WorldModel& model,
                                     std::span<const double> z,
                                     const std::vector<EditAction>& candidates,
                                     const ReasoningChain& chain,
                                     const std::vector<Token>& vocab,
                                     const PlannerConfig& cfg, Rng& rng,
                                     std::size_t* evaluations) {
  if (candidates.empty()) throw DomainError("score_candidates: no candidates");
  const std::uint64_t base = rng();
  std::vector<double> scores(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    double total = 0.0;
    for (std::size_t m = 0; m < cfg.continuations; ++m) {
      Rng sub(mix_seed(base, m));
      RolloutResult r = rollout(model, z, candidates[k], chain, vocab, cfg, sub);
      total += predict_reward(model, r.z);
      if (evaluations) *evaluations += r.evaluations;
    }
    scores[k] = total / static_cast<double>(cfg.continuations);
  }
  return scores;
}

std::size_t select_action(std::span<const double> scores, const PlannerConfig& cfg,
                          Rng& rng) {
  if (scores.empty()) throw DomainError("select_action: no scores");
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericsError("select_action: non-finite score");
  }
  if (cfg.selection == Selection::Argmax) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
      if (scores[i] > scores[best]) best = i;
    }
    return best;
  }
  const Vec p = softmax_with_temperature(scores, cfg.temperature);
  double u = uniform01(rng);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (u < p[i]) return i;
    u -= p[i];
  }
  return p.size() - 1;
}

// --- scorers ------------------------------------------------------------------

void LatentScorer::begin(const MDPState& state) { z_ = encode(model_, state); }

std::vector<double> LatentScorer::score(const MDPState& state,
                                        const std::vector<EditAction>& candidates,
                                        const std::vector<Token>& vocab,
                                        const PlannerConfig& cfg, Rng& rng) {
  return score_candidates(model_, z_, candidates, state.chain, vocab, cfg, rng,
                          &evaluations_);
}

void LatentScorer::advance(const MDPState& before, const EditAction& action,
                           const MDPState& after, const PlannerConfig& cfg) {
  if (cfg.reencode_each_step) {
    z_ = encode(model_, after);
  } else {
    z_ = predict_transition(model_, z_, action, before.chain);
  }
}

std::vector<double> OracleScorer::score(const MDPState& state,
                                        const std::vector<EditAction>& candidates,
                                        const std::vector<Token>& vocab,
                                        const PlannerConfig& cfg, Rng& rng) {
  const std::uint64_t base = rng();
  std::vector<double> scores(candidates.size());
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    double total = 0.0;
    for (std::size_t m = 0; m < cfg.continuations; ++m) {
      Rng sub(mix_seed(base, m));
      const ReasoningChain end = symbolic_rollout(candidates[k], state.chain, vocab, cfg, sub);
      total += env_.evaluate(state.task, end);
      ++evaluations_;
    }
    scores[k] = total / static_cast<double>(cfg.continuations);
  }
  return scores;
}

// --- outer loop -------------------------------------------------------------------

PlanTrajectory optimize(Environment& env, CandidateScorer& scorer,
                        const TaskInput& task, const ReasoningChain& c0,
                        const PlannerConfig& cfg) {
  cfg.validate();
  CountingEnv counted(env);
  PlanTrajectory traj;
  traj.task_id = task.id;
  traj.initial_chain = c0;
  traj.final_chain = c0;

  const std::vector<Token> vocab = task_vocabulary(task, cfg.extra_vocab);
  Rng rng(mix_seed(cfg.seed, stable_hash(task.id.data(), task.id.size())));
  MDPState state{task, c0};
  const std::size_t evals_at_start = scorer.evaluations();

  auto finish = [&]() {
    traj.final_chain = state.chain;
    traj.scorer_evaluations = scorer.evaluations() - evals_at_start;
    traj.env_queries += counted.count();
    return traj;
  };

  if (cfg.probe_env) {
    try {
      traj.initial_reward = counted.evaluate(task, c0);
    } catch (const Error& e) {
      traj.error = e.what();
      traj.error_step = 0;
      return finish();
    }
  }
  scorer.begin(state);

  std::size_t noop_streak = 0;
  for (std::size_t t = 0; t < cfg.outer_steps; ++t) {
    PlanStep rec;
    rec.step = t;
    rec.chain_before = state.chain;
    rec.z_before = scorer.latent();
    try {
      rec.candidates = cfg.candidate_mode == CandidateMode::Exhaustive
                           ? enumerate_actions(state.chain, vocab, cfg.enum_cfg)
                           : sample_candidates(state.chain, cfg.candidates, vocab,
                                               cfg.weights, rng, cfg.enum_cfg);
      const std::size_t queries_before = scorer.env_queries();
      rec.scores = scorer.score(state, rec.candidates, vocab, cfg, rng);
      traj.env_queries += scorer.env_queries() - queries_before;
      rec.chosen = select_action(rec.scores, cfg, rng);
      const EditAction& action = rec.candidates[rec.chosen];
      MDPState next{task, apply_edit(state.chain, action)};
      scorer.advance(state, action, next, cfg);
      rec.chain_after = next.chain;
      rec.z_after = scorer.latent();
      state = std::move(next);
      if (cfg.probe_env) rec.probe_reward = counted.evaluate(task, state.chain);
    } catch (const Error& e) {
      traj.error = e.what();
      traj.error_step = t;
      traj.steps.push_back(std::move(rec));
      return finish();
    }
    const bool noop = kind_of(rec.candidates[rec.chosen]) == OpKind::NoOp;
    traj.steps.push_back(std::move(rec));
    noop_streak = noop ? noop_streak + 1 : 0;
    if (cfg.patience > 0 && noop_streak >= cfg.patience) {
      traj.stopped_early = t + 1 < cfg.outer_steps;
      break;
    }
  }
  return finish();
}

PlanTrajectory optimize(Environment& env, const WorldModel& model,
                        const TaskInput& task, const ReasoningChain& c0,
                        const PlannerConfig& cfg) {
  LatentScorer scorer(model);
  return optimize(env, scorer, task, c0, cfg);
}

ReasoningChain replay(const PlanTrajectory& trajectory) {
  ReasoningChain c = trajectory.initial_chain;
  for (const auto& s : trajectory.steps) {
    if (s.chosen >= s.candidates.size()) break;
    if (trajectory.error_step && s.step == *trajectory.error_step) break;
    c = apply_edit(c, s.candidates[s.chosen]);
  }
  return c;
}

// --- JSON -----------------------------------------------------------------------------

namespace {

Json optional_vec(const std::optional<Vec>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<Vec> read_optional_vec(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<Vec>();
}

}  // namespace

Json trajectory_to_json(const PlanTrajectory& t) {
  Json steps = Json::array();
  for (const auto& s : t.steps) {
    Json cands = Json::array();
    for (const auto& a : s.candidates) cands.push_back(action_to_json(a));
    steps.push_back({{"step", s.step},
                     {"candidates", cands},
                     {"scores", s.scores},
                     {"chosen", s.chosen},
                     {"chain_before", chain_to_json(s.chain_before)},
                     {"chain_after", chain_to_json(s.chain_after)},
                     {"probe_reward", s.probe_reward ? Json(*s.probe_reward) : Json(nullptr)},
                     {"z_before", optional_vec(s.z_before)},
                     {"z_after", optional_vec(s.z_after)}});
  }
  return {{"task_id", t.task_id},
          {"initial_chain", chain_to_json(t.initial_chain)},
          {"initial_reward", t.initial_reward ? Json(*t.initial_reward) : Json(nullptr)},
          {"steps", steps},
          {"final_chain", chain_to_json(t.final_chain)},
          {"stopped_early", t.stopped_early},
          {"error", t.error ? Json(*t.error) : Json(nullptr)},
          {"error_step", t.error_step ? Json(*t.error_step) : Json(nullptr)},
          {"scorer_evaluations", t.scorer_evaluations},
          {"env_queries", t.env_queries}};
}

PlanTrajectory trajectory_from_json(const Json& j) {
  PlanTrajectory t;
  try {
    t.task_id = j.at("task_id").get<std::string>();
    t.initial_chain = chain_from_json(j.at("initial_chain"));
    if (!j.at("initial_reward").is_null()) t.initial_reward = j.at("initial_reward").get<double>();
    for (const auto& s : j.at("steps")) {
      PlanStep rec;
      rec.step = s.at("step").get<std::size_t>();
      for (const auto& a : s.at("candidates")) rec.candidates.push_back(action_from_json(a));
      rec.scores = s.at("scores").get<std::vector<double>>();
      rec.chosen = s.at("chosen").get<std::size_t>();
      rec.chain_before = chain_from_json(s.at("chain_before"));
      rec.chain_after = chain_from_json(s.at("chain_after"));
      if (!s.at("probe_reward").is_null()) rec.probe_reward = s.at("probe_reward").get<double>();
      rec.z_before = read_optional_vec(s, "z_before");
      rec.z_after = read_optional_vec(s, "z_after");
      t.steps.push_back(std::move(rec));
    }
    t.final_chain = chain_from_json(j.at("final_chain"));
    t.stopped_early = j.at("stopped_early").get<bool>();
    if (!j.at("error").is_null()) t.error = j.at("error").get<std::string>();
    if (!j.at("error_step").is_null()) t.error_step = j.at("error_step").get<std::size_t>();
    t.scorer_evaluations = j.at("scorer_evaluations").get<std::size_t>();
    t.env_queries = j.at("env_queries").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory: ") + e.what(), 0);
  }
  return t;
}

Json planner_config_to_json(const PlannerConfig& c) {
  Json fragments = Json::array();
  for (const auto& f : c.enum_cfg.example_fragments) fragments.push_back(chain_to_json(f));
  return {{"horizon", c.horizon},
          {"outer_steps", c.outer_steps},
          {"candidates", c.candidates},
          {"temperature", c.temperature},
          {"selection", c.selection == Selection::Argmax ? "argmax" : "softmax"},
          {"continuations", c.continuations},
          {"gamma", c.gamma},
          {"seed", c.seed},
          {"reencode_each_step", c.reencode_each_step},
          {"probe_env", c.probe_env},
          {"patience", c.patience},
          {"candidate_mode",
           c.candidate_mode == CandidateMode::Sampled ? "sampled" : "exhaustive"},
          {"weights",
           {{"token", c.weights.token},
            {"step", c.weights.step},
            {"structure", c.weights.structure}}},
          {"max_enumeration", c.enum_cfg.max_enumeration},
          {"max_tokens", c.enum_cfg.max_tokens},
          {"example_fragments", fragments},
          {"instruction_steps", c.enum_cfg.instruction_steps},
          {"templates", c.enum_cfg.templates},
          {"extra_vocab", c.extra_vocab}};
}

PlannerConfig planner_config_from_json(const Json& j) {
  constexpr std::string_view section = "planner";
  reject_unknown_keys(j,
                      {"horizon", "outer_steps", "candidates", "temperature",
                       "selection", "continuations", "gamma", "seed",
                       "reencode_each_step", "probe_env", "patience",
                       "candidate_mode", "weights", "max_enumeration", "max_tokens",
                       "example_fragments", "instruction_steps", "templates",
                       "extra_vocab"},
                      section);
  PlannerConfig c;
  read_config_value(j, "horizon", c.horizon, section);
  read_config_value(j, "outer_steps", c.outer_steps, section);
  read_config_value(j, "candidates", c.candidates, section);
  read_config_value(j, "temperature", c.temperature, section);
  read_config_value(j, "continuations", c.continuations, section);
  read_config_value(j, "gamma", c.gamma, section);
  read_config_value(j, "seed", c.seed, section);
  read_config_value(j, "reencode_each_step", c.reencode_each_step, section);
  read_config_value(j, "probe_env", c.probe_env, section);
  read_config_value(j, "patience", c.patience, section);
  read_config_value(j, "max_enumeration", c.enum_cfg.max_enumeration, section);
  read_config_value(j, "max_tokens", c.enum_cfg.max_tokens, section);
  read_config_value(j, "instruction_steps", c.enum_cfg.instruction_steps, section);
  read_config_value(j, "templates", c.enum_cfg.templates, section);
  read_config_value(j, "extra_vocab", c.extra_vocab, section);
  std::string selection = "argmax";
  read_config_value(j, "selection", selection, section);
  if (selection == "argmax") {
    c.selection = Selection::Argmax;
  } else if (selection == "softmax") {
    c.selection = Selection::Softmax;
  } else {
    throw ConfigError("planner.selection: unknown value '" + selection + "'");
  }
  std::string mode = "sampled";
  read_config_value(j, "candidate_mode", mode, section);
  if (mode == "sampled") {
    c.candidate_mode = CandidateMode::Sampled;
  } else if (mode == "exhaustive") {
    c.candidate_mode = CandidateMode::Exhaustive;
  } else {
    throw ConfigError("planner.candidate_mode: unknown value '" + mode + "'");
  }
  if (j.contains("weights")) {
    const Json& w = j.at("weights");
    reject_unknown_keys(w, {"token", "step", "structure"}, "planner.weights");
    read_config_value(w, "token", c.weights.token, "planner.weights");
    read_config_value(w, "step", c.weights.step, "planner.weights");
    read_config_value(w, "structure", c.weights.structure, "planner.weights");
  }
  if (j.contains("example_fragments")) {
    try {
      for (const auto& f : j.at("example_fragments")) {
        c.enum_cfg.example_fragments.push_back(chain_from_json(f));
      }
    } catch (const Error& e) {
      throw ConfigError(std::string("planner.example_fragments: ") + e.what());
    }
  }
  for (const auto& t : c.enum_cfg.templates) {
    if (!is_known_template(t)) throw ConfigError("planner.templates: unknown template '" + t + "'");
  }
  c.validate();
  return c;
}

}  // namespace tap
