#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tap/actions.hpp"
#include "tap/chain.hpp"
#include "tap/environments.hpp"
#include "tap/json_io.hpp"
#include "tap/random.hpp"
#include "tap/world_model.hpp"

namespace tap {

enum class Selection { Argmax, Softmax };
enum class CandidateMode { Sampled, Exhaustive };

struct PlannerConfig {
  std::size_t horizon = 3;        // H
  std::size_t outer_steps = 8;    // T
  std::size_t candidates = 10;    // K (ignored in Exhaustive mode)
  double temperature = 0.1;       // tau
  Selection selection = Selection::Argmax;
  std::size_t continuations = 1;  // M rollouts per candidate, scores averaged
  double gamma = 0.99;            // reported only; selection uses terminal reward
  std::uint64_t seed = 0;
  /// Re-encode the real chain after each applied edit instead of stepping the
  /// latent with the transition model.
  bool reencode_each_step = true;
  /// Query the environment after every applied edit (logging only).
  bool probe_env = false;
  /// Stop after this many consecutive NoOp choices; 0 never stops early.
  std::size_t patience = 2;
  CandidateMode candidate_mode = CandidateMode::Sampled;
  ScaleWeights weights;
  EnumConfig enum_cfg;
  /// Tokens offered to Add/Replace besides the task's own tokens.
  std::vector<Token> extra_vocab = distractor_tokens();

  /// Throws ConfigError on H, T, K or M of 0, tau <= 0 or gamma outside [0, 1).
  void validate() const;
};

/// Scores candidate first actions for a state. Implementations keep whatever
/// per-step context they need between begin() / advance() calls.
class CandidateScorer {
 public:
  virtual ~CandidateScorer() = default;
  virtual void begin(const MDPState& state) = 0;
  virtual std::vector<double> score(const MDPState& state,
                                    const std::vector<EditAction>& candidates,
                                    const std::vector<Token>& vocab,
                                    const PlannerConfig& cfg, Rng& rng) = 0;
  /// Called after `action` moved the real state from `before` to `after`.
  virtual void advance(const MDPState& before, const EditAction& action,
                       const MDPState& after, const PlannerConfig& cfg) = 0;
  /// Current latent, if the scorer has one.
  virtual std::optional<Vec> latent() const { return std::nullopt; }
  /// Transition-model (or environment) evaluations spent on scoring so far.
  virtual std::size_t evaluations() const = 0;
  /// Environment queries made while scoring.
  virtual std::size_t env_queries() const { return 0; }
};

struct RolloutResult {
  Vec z;
  std::vector<EditAction> continuation;  // the H - 1 sampled follow-up actions
  std::size_t evaluations = 0;           // predict_transition calls
};

/// Applies `first_action` then H - 1 sampled continuations through the
/// transition model, tracking the chain symbolically so continuations stay
/// legal. A continuation that fails to apply is resampled a few times and
/// then replaced by NoOp.
RolloutResult rollout(const WorldModel& model, std::span<const double> z,
                      const EditAction& first_action,
                      const ReasoningChain& chain_at_z,
                      const std::vector<Token>& vocab, const PlannerConfig& cfg,
                      Rng& rng);

/// Chain reached by `first_action` followed by H - 1 sampled continuations.
ReasoningChain symbolic_rollout(const EditAction& first_action,
                                const ReasoningChain& chain,
                                const std::vector<Token>& vocab,
                                const PlannerConfig& cfg, Rng& rng);

/// Score k is the mean over M rollouts of R(z_{t+H}). Rollout m of every
/// candidate draws its continuations from the same generator, seeded from one
/// draw of `rng` and m, so candidates are compared under common random
/// numbers and scores do not depend on the evaluation order. `evaluations`,
/// if given, is increased by K * H * M.
std::vector<double> score_candidates(const WorldModel& model,
                                     std::span<const double> z,
                                     const std::vector<EditAction>& candidates,
                                     const ReasoningChain& chain,
                                     const std::vector<Token>& vocab,
                                     const PlannerConfig& cfg, Rng& rng,
                                     std::size_t* evaluations = nullptr);

/// Argmax: lowest index among the maximal scores. Softmax: a draw from
/// softmax_with_temperature(scores, tau).
std::size_t select_action(std::span<const double> scores, const PlannerConfig& cfg,
                          Rng& rng);

/// Scores with the learned world model.
class LatentScorer : public CandidateScorer {
 public:
  explicit LatentScorer(const WorldModel& model) : model_(model) {}
  void begin(const MDPState& state) override;
  std::vector<double> score(const MDPState& state,
                            const std::vector<EditAction>& candidates,
                            const std::vector<Token>& vocab,
                            const PlannerConfig& cfg, Rng& rng) override;
  void advance(const MDPState& before, const EditAction& action,
               const MDPState& after, const PlannerConfig& cfg) override;
  std::optional<Vec> latent() const override { return z_; }
  std::size_t evaluations() const override { return evaluations_; }

 private:
  const WorldModel& model_;
  Vec z_;
  std::size_t evaluations_ = 0;
};

/// Replaces the predicted reward by the true environment reward of the
/// symbolically rolled-out chain. Used for exactness checks.
class OracleScorer : public CandidateScorer {
 public:
  explicit OracleScorer(Environment& env) : env_(env) {}
  void begin(const MDPState&) override {}
  std::vector<double> score(const MDPState& state,
                            const std::vector<EditAction>& candidates,
                            const std::vector<Token>& vocab,
                            const PlannerConfig& cfg, Rng& rng) override;
  void advance(const MDPState&, const EditAction&, const MDPState&,
               const PlannerConfig&) override {}
  std::size_t evaluations() const override { return evaluations_; }
  std::size_t env_queries() const override { return evaluations_; }

 private:
  Environment& env_;
  std::size_t evaluations_ = 0;
};

struct PlanStep {
  std::size_t step = 0;
  std::vector<EditAction> candidates;
  std::vector<double> scores;
  std::size_t chosen = 0;
  ReasoningChain chain_before;
  ReasoningChain chain_after;
  std::optional<double> probe_reward;
  std::optional<Vec> z_before;
  std::optional<Vec> z_after;
};

struct PlanTrajectory {
  std::string task_id;
  ReasoningChain initial_chain;
  std::optional<double> initial_reward;  // probed when probe_env is set
  std::vector<PlanStep> steps;
  ReasoningChain final_chain;
  bool stopped_early = false;
  std::optional<std::string> error;  // set when a step failed
  std::optional<std::size_t> error_step;
  std::size_t scorer_evaluations = 0;
  std::size_t env_queries = 0;  // probes plus oracle scoring queries
};

/// Outer edit loop: at each of T steps, propose candidates, score them, select
/// one, apply it and update the scorer. Environment failures end the run and
/// are recorded in the trajectory rather than thrown.
PlanTrajectory optimize(Environment& env, CandidateScorer& scorer,
                        const TaskInput& task, const ReasoningChain& c0,
                        const PlannerConfig& cfg);
/// Latent planning with `model`.
PlanTrajectory optimize(Environment& env, const WorldModel& model,
                        const TaskInput& task, const ReasoningChain& c0,
                        const PlannerConfig& cfg);

/// Applies the chosen actions of `trajectory` to its initial chain.
ReasoningChain replay(const PlanTrajectory& trajectory);

/// {"task_id", "initial_chain", "steps": [{"step", "candidates", "scores",
/// "chosen", "chain_before", "chain_after", "probe_reward", ...}], ...}
Json trajectory_to_json(const PlanTrajectory& trajectory);
PlanTrajectory trajectory_from_json(const Json& j);

Json planner_config_to_json(const PlannerConfig& cfg);
/// Starts from defaults; throws ConfigError on unknown keys or bad values.
PlannerConfig planner_config_from_json(const Json& j);

}  // namespace tap
