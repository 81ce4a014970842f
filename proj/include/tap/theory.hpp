#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tap/environments.hpp"
#include "tap/json_io.hpp"
#include "tap/planner.hpp"
#include "tap/world_model.hpp"

namespace tap {

// --- simulation lemma -------------------------------------------------------------

struct SimLemmaConfig {
  std::size_t n_trials = 100;
  std::size_t min_states = 2;
  std::size_t max_states = 6;
  std::size_t min_actions = 1;
  std::size_t max_actions = 3;
  std::vector<double> deltas{0.05, 0.1, 0.2};
  std::vector<std::size_t> horizons{3};
  std::vector<double> gammas{0.5, 0.9};
  std::uint64_t seed = 0;
  double tol = 1e-12;  // value-iteration tolerance
};

struct BoundCheckResult {
  std::size_t trial = 0;
  std::uint64_t mdp_seed = 0;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  double delta = 0.0;           // requested
  double measured_delta = 0.0;  // max row l1 distance actually applied
  std::size_t horizon = 0;
  double gamma = 0.0;
  double gap = 0.0;      // max_s V*_true(s) - V^{pi_hat}_true(s)
  double bound = 0.0;    // H * delta / (1 - gamma)^2
  double classical_bound = 0.0;  // 2 * gamma * delta * R_max / (1 - gamma)^2
  bool satisfied = false;           // gap <= bound + 1e-9
  bool classical_satisfied = false;  // gap <= classical_bound + 1e-9
  double margin() const { return bound - gap; }
  double classical_margin() const { return classical_bound - gap; }
};

/// Trial i uses delta = deltas[i % |deltas|], gamma and H cycling likewise
/// over the remaining grids, and a random MDP whose size is drawn from the
/// configured ranges. The optimal policy of the perturbed MDP is evaluated on
/// the true MDP; delta in the bound is the measured distance.
std::vector<BoundCheckResult> run_simulation_lemma_suite(const SimLemmaConfig& cfg);

// --- convergence ------------------------------------------------------------------

struct ConvergenceConfig {
  std::vector<std::size_t> sizes{250, 1000, 4000};
  std::size_t seeds = 5;
  std::size_t holdout_size = 500;
  ArchConfig arch = [] {
    ArchConfig a;
    a.d = 8;
    a.d_emb = 8;
    a.hash_buckets = 512;
    a.pooling = Pooling::Mean;
    a.encoder_hidden = 16;
    a.transition_hidden = 32;
    a.reward_hidden = 16;
    a.kind_dim = 4;
    a.action_token_dim = 4;
    a.action_token_buckets = 128;
    return a;
  }();
  TrainConfig train = [] {
    TrainConfig t;
    t.epochs = 20;
    t.learning_rate = 1e-3;
    t.holdout_fraction = 0.0;
    t.train_encoder = false;
    t.lambda_rew = 0.0;
    return t;
  }();
  std::size_t n_tasks = 50;
  std::size_t steps_per_episode = 10;
  std::uint64_t seed = 0;
};

struct ConvergenceTrial {
  std::size_t n = 0;
  std::size_t seed_index = 0;
  double holdout_dynamics = 0.0;
  bool dropped = false;
  std::string note;
};

struct RateFit {
  std::vector<std::size_t> sizes;
  std::vector<double> errors;  // median held-out dynamics error per size
  double slope = 0.0;          // least squares on (log n, log error)
  double intercept = 0.0;
  std::size_t seeds = 0;
  double theoretical_slope = -0.5;
  std::vector<ConvergenceTrial> trials;
};

/// Least-squares fit of log(errors) on log(sizes). Throws
/// InsufficientGridError with fewer than 3 distinct sizes and DomainError on
/// non-positive values.
RateFit fit_rate(const std::vector<std::size_t>& sizes, const std::vector<double>& errors);

/// A frozen random encoder acts as the teacher: transitions come from random
/// edits on synthetic tasks, the dynamics target is the teacher encoding of
/// the next state, and a student transition model is trained on the first n
/// transitions of each seed's pool. Diverging trials are dropped and noted.
RateFit run_convergence_suite(const ConvergenceConfig& cfg);

// --- multi-scale ------------------------------------------------------------------

struct MultiscaleConfig {
  std::size_t n_tasks = 20;
  std::size_t seeds = 5;
  std::size_t steps = 4;
  std::size_t tokens_per_step = 3;
  std::size_t max_token_edits = 2;
  std::size_t candidates = 64;
  std::size_t outer_steps = 30;
  double threshold = 0.95;
  std::uint64_t seed = 0;
};

struct MultiscaleTrial {
  std::string task_id;
  std::size_t seed_index = 0;
  std::string sampler;  // "multi_scale" or "token_only"
  std::size_t edits = 0;  // outer_steps + 1 when the threshold is never reached
  bool reached = false;
  double final_reward = 0.0;
  std::size_t non_token_actions = 0;  // chosen or proposed non-token edits
};

struct MultiscaleReport {
  std::vector<MultiscaleTrial> trials;
  double median_multi = 0.0;
  double median_token = 0.0;
  std::size_t token_only_violations = 0;
};

/// Edits-to-threshold for a single run: 0 if the start already meets it,
/// otherwise the 1-based step whose probed reward first reaches it, or
/// outer_steps + 1.
std::size_t edits_to_threshold(const PlanTrajectory& trajectory, double threshold,
                               std::size_t outer_steps);

/// Oracle-scored planning (H = 1, Levenshtein reward) on reorder tasks with
/// the default multi-scale sampler and with a token-only sampler at equal K
/// and T.
MultiscaleReport run_multiscale_suite(const MultiscaleConfig& cfg);

// --- complexity bench ---------------------------------------------------------------

struct BenchConfig {
  std::vector<std::size_t> ks{16, 32, 64};
  std::vector<std::size_t> horizons{1, 2, 3};
  std::vector<std::size_t> dims{16, 32};
  std::size_t continuations = 1;
  std::size_t reps = 20;
  std::size_t warmup = 3;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::size_t k = 0;
  std::size_t horizon = 0;
  std::size_t d = 0;
  std::size_t continuations = 1;
  std::size_t evaluations = 0;  // transition-model calls for one planning step
  double median_seconds = 0.0;
};

/// Times score_candidates for one planning step per grid point.
std::vector<BenchRow> run_complexity_bench(const BenchConfig& cfg);

// --- reports --------------------------------------------------------------------------

Json simlemma_to_json(const std::vector<BoundCheckResult>& results);
std::string simlemma_to_csv(const std::vector<BoundCheckResult>& results);
Json rate_fit_to_json(const RateFit& fit);
std::string rate_fit_to_csv(const RateFit& fit);
Json multiscale_to_json(const MultiscaleReport& report);
std::string multiscale_to_csv(const MultiscaleReport& report);
Json bench_to_json(const std::vector<BenchRow>& rows);
std::string bench_to_csv(const std::vector<BenchRow>& rows);

double median(std::vector<double> values);

}  // namespace tap
