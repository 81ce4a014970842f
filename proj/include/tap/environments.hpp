#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <memory>
#include <string>
#include <vector>

#include "tap/actions.hpp"
#include "tap/chain.hpp"
#include "tap/json_io.hpp"
#include "tap/random.hpp"
#include "tap/transition.hpp"

namespace tap {

/// Source of the downstream reward R(x, c) in [0, 1].
class Environment {
 public:
  virtual ~Environment() = default;
  virtual double evaluate(const TaskInput& task, const ReasoningChain& chain) = 0;
  virtual bool deterministic() const = 0;
  /// Rough cost of one evaluate call in seconds; 0 for local environments.
  virtual double cost_per_query() const { return 0.0; }
};

/// F1 between token multisets. Both empty gives 1, exactly one empty gives 0.
double token_f1(const std::vector<Token>& candidate,
                const std::vector<Token>& reference);
/// 1 - levenshtein(a, b) / max(|a|, |b|) over token sequences; 1 if both empty.
double normalized_levenshtein(const std::vector<Token>& a,
                              const std::vector<Token>& b);

enum class Similarity { TokenF1, NormalizedLevenshtein };

/// Reward = similarity(chain, hidden target) over the flattened token
/// sequences, plus optional Gaussian noise, clipped to [0, 1].
class SyntheticOracleEnv : public Environment {
 public:
  SyntheticOracleEnv(std::map<std::string, ReasoningChain> targets,
                     Similarity similarity = Similarity::TokenF1,
                     double noise_sigma = 0.0, std::uint64_t seed = 0);
  /// Takes targets from every record that has one.
  static SyntheticOracleEnv from_tasks(const std::vector<TaskRecord>& tasks,
                                       Similarity similarity = Similarity::TokenF1,
                                       double noise_sigma = 0.0,
                                       std::uint64_t seed = 0);

  /// Throws EnvError for a task id without a target.
  double evaluate(const TaskInput& task, const ReasoningChain& chain) override;
  bool deterministic() const override { return noise_sigma_ == 0.0; }

  const ReasoningChain& target(const std::string& task_id) const;
  Similarity similarity() const { return similarity_; }

 private:
  std::map<std::string, ReasoningChain> targets_;
  Similarity similarity_;
  double noise_sigma_;
  Rng rng_;
};

/// Forwards to another environment and counts evaluate calls.
class CountingEnv : public Environment {
 public:
  explicit CountingEnv(Environment& inner) : inner_(inner) {}
  double evaluate(const TaskInput& task, const ReasoningChain& chain) override {
    ++count_;
    return inner_.evaluate(task, chain);
  }
  bool deterministic() const override { return inner_.deterministic(); }
  double cost_per_query() const override { return inner_.cost_per_query(); }
  std::size_t count() const { return count_; }
  void reset() { count_ = 0; }

 private:
  Environment& inner_;
  std::size_t count_ = 0;
};

/// Task tokens followed by `extra` tokens, duplicates removed, first
/// occurrence order kept.
std::vector<Token> task_vocabulary(const TaskInput& task,
                                   const std::vector<Token>& extra = {});

// --- synthetic task generators ----------------------------------------------

/// Tasks whose hidden target is the task's content words, each used once and
/// cut into a few steps. The task text lists the same words in another order; the initial chain is the target corrupted by
/// inserted distractor tokens, dropped words and replacements.
struct SyntheticTaskConfig {
  std::size_t content_pool = 40;   // size of the shared content vocabulary
  std::size_t words_per_task = 8;  // distinct content words per task
  std::size_t min_steps = 2;
  std::size_t max_steps = 3;
  std::size_t distractor_inserts = 3;
  std::size_t word_drops = 1;
  std::size_t word_replacements = 1;
  std::string id_prefix = "task";
};

/// Fixed distractor words used by the synthetic generators.
const std::vector<Token>& distractor_tokens();

std::vector<TaskRecord> generate_synthetic_tasks(std::size_t n,
                                                 const SyntheticTaskConfig& cfg,
                                                 std::uint64_t seed);

/// Tasks whose initial chain is the target with two steps swapped (one
/// reorder) plus up to `max_token_edits` token edits.
std::vector<TaskRecord> generate_reorder_tasks(std::size_t n, std::size_t steps,
                                               std::size_t tokens_per_step,
                                               std::size_t max_token_edits,
                                               std::uint64_t seed);

// --- transition collection --------------------------------------------------

enum class CollectPolicy { RandomEdits, PlannerGuided };

/// Chooses the next action for planner-guided collection.
using ActionChooser = std::function<EditAction(const MDPState&, Rng&)>;

struct CollectConfig {
  CollectPolicy policy = CollectPolicy::RandomEdits;
  std::size_t episodes = 1;
  std::size_t steps_per_episode = 10;
  std::uint64_t seed = 0;
  ScaleWeights weights;
  EnumConfig enum_cfg;
  std::vector<Token> extra_vocab = distractor_tokens();
  ActionChooser guide;  // required for PlannerGuided
};

struct CollectResult {
  std::vector<Transition> transitions;
  std::size_t skipped = 0;
  std::vector<std::string> errors;
  std::size_t env_queries = 0;
};

/// Episode e starts from tasks[e % tasks.size()].initial_chain and takes
/// steps_per_episode actions (never NoOp for RandomEdits). Environment
/// failures skip the step and are recorded in `errors`.
CollectResult collect_transitions(Environment& env,
                                  const std::vector<TaskRecord>& tasks,
                                  const CollectConfig& cfg);

// --- tabular MDPs --------------------------------------------------------------

struct TabularMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transitions;  // [s][a][s'] row-major
  std::vector<double> rewards;      // [s][a], in [0, 1]
  double gamma = 0.9;

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transitions[(s * n_actions + a) * n_states + next];
  }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {transitions.data() + (s * n_actions + a) * n_states, n_states};
  }
  double r(std::size_t s, std::size_t a) const { return rewards[s * n_actions + a]; }
  /// Throws DomainError unless rows are distributions (sum 1 within 1e-12),
  /// rewards are in [0, 1] and gamma is in [0, 1).
  void validate() const;
};

using Policy = std::vector<std::size_t>;

struct ValueIterationResult {
  Vec values;
  Policy policy;
  std::vector<double> residuals;  // sup-norm change per sweep
};

/// Iterates the Bellman optimality operator until the values are within
/// tol / 2 of the fixed point; the greedy policy breaks ties by lowest index.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-10);
/// V^pi to within tol / 2.
Vec policy_value(const TabularMdp& mdp, const Policy& policy, double tol = 1e-10);

/// Dirichlet(1) rows, uniform [0, 1] rewards.
TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma,
                      Rng& rng);
/// Moves every transition row by at most `delta` in l1 (random zero-sum
/// direction, Euclidean projection onto the simplex, shrunk toward the
/// original row if needed). Rewards unchanged.
TabularMdp perturb_mdp(const TabularMdp& mdp, double delta, Rng& rng);
double max_row_l1_distance(const TabularMdp& a, const TabularMdp& b);

/// {"n_states", "n_actions", "P": [[[...]]], "R": [[...]], "gamma"}
Json mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const Json& j);

}  // namespace tap
