#include "tap/theory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "tap/errors.hpp"

namespace tap {

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// --- simulation lemma -------------------------------------------------------------

std::vector<BoundCheckResult> run_simulation_lemma_suite(const SimLemmaConfig& cfg) {
  if (cfg.deltas.empty() || cfg.gammas.empty() || cfg.horizons.empty()) {
    throw ConfigError("simlemma: empty grid");
  }
  if (cfg.min_states == 0 || cfg.min_states > cfg.max_states || cfg.min_actions == 0 ||
      cfg.min_actions > cfg.max_actions) {
    throw ConfigError("simlemma: bad state/action ranges");
  }
  for (double g : cfg.gammas) {
    if (!(g >= 0.0 && g <= 0.95)) throw ConfigError("simlemma: gamma grid must lie in [0, 0.95]");
  }
  for (std::size_t h : cfg.horizons) {
    if (h < 2) throw ConfigError("simlemma: horizons must be >= 2");
  }
  std::vector<BoundCheckResult> out;
  for (std::size_t i = 0; i < cfg.n_trials; ++i) {
    BoundCheckResult r;
    r.trial = i;
    r.mdp_seed = mix_seed(cfg.seed, i);
    const std::size_t nd = cfg.deltas.size();
    const std::size_t ng = cfg.gammas.size();
    r.delta = cfg.deltas[i % nd];
    r.gamma = cfg.gammas[(i / nd) % ng];
    r.horizon = cfg.horizons[(i / (nd * ng)) % cfg.horizons.size()];

    Rng rng(r.mdp_seed);
    r.n_states = cfg.min_states + uniform_index(rng, cfg.max_states - cfg.min_states + 1);
    r.n_actions = cfg.min_actions + uniform_index(rng, cfg.max_actions - cfg.min_actions + 1);
    const TabularMdp truth = random_mdp(r.n_states, r.n_actions, r.gamma, rng);
    const TabularMdp model = perturb_mdp(truth, r.delta, rng);
    r.measured_delta = max_row_l1_distance(truth, model);

    const auto opt_true = value_iteration(truth, cfg.tol);
    const auto opt_model = value_iteration(model, cfg.tol);
    const Vec v_hat = policy_value(truth, opt_model.policy, cfg.tol);
    const Vec v_star = policy_value(truth, opt_true.policy, cfg.tol);
    r.gap = 0.0;
    for (std::size_t s = 0; s < r.n_states; ++s) r.gap = std::max(r.gap, v_star[s] - v_hat[s]);

    double r_max = 0.0;
    for (double x : truth.rewards) r_max = std::max(r_max, x);
    const double denom = (1.0 - r.gamma) * (1.0 - r.gamma);
    r.bound = static_cast<double>(r.horizon) * r.measured_delta / denom;
    r.classical_bound = 2.0 * r.gamma * r.measured_delta * r_max / denom;
    r.satisfied = r.gap <= r.bound + 1e-9;
    r.classical_satisfied = r.gap <= r.classical_bound + 1e-9;
    out.push_back(r);
  }
  return out;
}

// --- convergence ------------------------------------------------------------------

RateFit fit_rate(const std::vector<std::size_t>& sizes, const std::vector<double>& errors) {
  if (sizes.size() != errors.size()) throw DomainError("fit_rate: length mismatch");
  if (std::set<std::size_t>(sizes.begin(), sizes.end()).size() < 3) {
    throw InsufficientGridError("fit_rate: need at least 3 distinct sample sizes");
  }
  double mx = 0, my = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0 || !(errors[i] > 0.0) || !std::isfinite(errors[i])) {
      throw DomainError("fit_rate: sizes and errors must be positive");
    }
    lx.push_back(std::log(static_cast<double>(sizes[i])));
    ly.push_back(std::log(errors[i]));
    mx += lx.back();
    my += ly.back();
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(ly.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  RateFit fit;
  fit.sizes = sizes;
  fit.errors = errors;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

RateFit run_convergence_suite(const ConvergenceConfig& cfg) {
  if (std::set<std::size_t>(cfg.sizes.begin(), cfg.sizes.end()).size() < 3) {
    throw InsufficientGridError("convergence: need at least 3 distinct sample sizes");
  }
  if (!std::is_sorted(cfg.sizes.begin(), cfg.sizes.end())) {
    throw ConfigError("convergence: sizes must be increasing");
  }
  if (cfg.seeds == 0 || cfg.holdout_size == 0) throw ConfigError("convergence: empty run");
  const std::size_t max_n = cfg.sizes.back();
  TrainConfig tcfg = cfg.train;
  tcfg.holdout_fraction = 0.0;
  tcfg.train_encoder = false;

  std::vector<ConvergenceTrial> trials;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = mix_seed(cfg.seed, s);
    const WorldModel teacher = init_world_model(cfg.arch, seed);

    SyntheticTaskConfig task_cfg;
    task_cfg.id_prefix = "conv" + std::to_string(s);
    const auto tasks = generate_synthetic_tasks(cfg.n_tasks, task_cfg, seed);
    auto env = SyntheticOracleEnv::from_tasks(tasks);
    CollectConfig ccfg;
    ccfg.seed = seed;
    ccfg.steps_per_episode = cfg.steps_per_episode;
    ccfg.episodes = (max_n + cfg.holdout_size + cfg.steps_per_episode - 1) /
                    cfg.steps_per_episode;
    const auto pool = collect_transitions(env, tasks, ccfg).transitions;
    if (pool.size() < max_n + cfg.holdout_size) {
      throw EnvError("convergence: collected too few transitions");
    }
    const std::span<const Transition> all(pool);
    const auto holdout = all.subspan(pool.size() - cfg.holdout_size);

    for (std::size_t n : cfg.sizes) {
      ConvergenceTrial trial;
      trial.n = n;
      trial.seed_index = s;
      WorldModel student = init_world_model(cfg.arch, mix_seed(seed, 0x5717de));
      student.encoder = teacher.encoder;
      tcfg.seed = mix_seed(seed, n);
      try {
        const auto result = train(all.first(n), cfg.arch, tcfg, &student);
        trial.holdout_dynamics = dynamics_loss(result.model, holdout);
        if (!std::isfinite(trial.holdout_dynamics)) {
          trial.dropped = true;
          trial.note = "non-finite held-out error";
        }
      } catch (const NumericsError& e) {
        trial.dropped = true;
        trial.note = e.what();
      }
      trials.push_back(trial);
    }
  }

  std::vector<double> medians;
  for (std::size_t n : cfg.sizes) {
    std::vector<double> errs;
    for (const auto& t : trials) {
      if (t.n == n && !t.dropped) errs.push_back(t.holdout_dynamics);
    }
    if (errs.empty()) throw NumericsError("convergence: every trial at n=" + std::to_string(n) + " diverged");
    medians.push_back(median(errs));
  }
  RateFit fit = fit_rate(cfg.sizes, medians);
  fit.seeds = cfg.seeds;
  fit.trials = std::move(trials);
  return fit;
}

// --- multi-scale ------------------------------------------------------------------

std::size_t edits_to_threshold(const PlanTrajectory& t, double threshold,
                               std::size_t outer_steps) {
  if (t.initial_reward && *t.initial_reward >= threshold) return 0;
  for (const auto& s : t.steps) {
    if (s.probe_reward && *s.probe_reward >= threshold) return s.step + 1;
  }
  return outer_steps + 1;
}

MultiscaleReport run_multiscale_suite(const MultiscaleConfig& cfg) {
  const auto tasks = generate_reorder_tasks(cfg.n_tasks, cfg.steps, cfg.tokens_per_step,
                                            cfg.max_token_edits, cfg.seed);
  auto env = SyntheticOracleEnv::from_tasks(tasks, Similarity::NormalizedLevenshtein);
  MultiscaleReport report;
  std::vector<double> multi, token;
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    for (const auto& task : tasks) {
      for (int variant = 0; variant < 2; ++variant) {
        PlannerConfig pc;
        pc.horizon = 1;
        pc.outer_steps = cfg.outer_steps;
        pc.candidates = cfg.candidates;
        pc.probe_env = true;
        pc.patience = 0;
        pc.seed = mix_seed(cfg.seed, s);
        pc.extra_vocab = {};
        if (variant == 1) pc.weights = ScaleWeights{1.0, 0.0, 0.0};
        OracleScorer scorer(env);
        const auto traj = optimize(env, scorer, task.input, task.initial_chain, pc);

        MultiscaleTrial trial;
        trial.task_id = task.input.id;
        trial.seed_index = s;
        trial.sampler = variant == 0 ? "multi_scale" : "token_only";
        trial.edits = edits_to_threshold(traj, cfg.threshold, cfg.outer_steps);
        trial.reached = trial.edits <= cfg.outer_steps;
        trial.final_reward = traj.steps.empty()
                                 ? traj.initial_reward.value_or(0.0)
                                 : traj.steps.back().probe_reward.value_or(0.0);
        for (const auto& step : traj.steps) {
          for (const auto& a : step.candidates) {
            const Scale sc = scale_of(a);
            if (sc == Scale::Step || sc == Scale::Structure) ++trial.non_token_actions;
          }
        }
        if (variant == 1) report.token_only_violations += trial.non_token_actions;
        (variant == 0 ? multi : token).push_back(static_cast<double>(trial.edits));
        report.trials.push_back(std::move(trial));
      }
    }
  }
  report.median_multi = median(multi);
  report.median_token = median(token);
  return report;
}

// --- complexity bench ---------------------------------------------------------------

std::vector<BenchRow> run_complexity_bench(const BenchConfig& cfg) {
  if (cfg.ks.empty() || cfg.horizons.empty() || cfg.dims.empty() || cfg.reps == 0) {
    throw ConfigError("bench: grids must be non-empty and reps >= 1");
  }
  const auto tasks = generate_synthetic_tasks(1, SyntheticTaskConfig{}, cfg.seed);
  const TaskRecord& task = tasks.front();
  const auto vocab = task_vocabulary(task.input, distractor_tokens());
  std::vector<BenchRow> rows;
  for (std::size_t d : cfg.dims) {
    ArchConfig arch;
    arch.d = d;
    const WorldModel model = init_world_model(arch, cfg.seed);
    const Vec z = encode(model, {task.input, task.initial_chain});
    for (std::size_t h : cfg.horizons) {
      for (std::size_t k : cfg.ks) {
        PlannerConfig pc;
        pc.horizon = h;
        pc.candidates = k;
        pc.continuations = cfg.continuations;
        Rng cand_rng(mix_seed(cfg.seed, k));
        const auto candidates =
            sample_candidates(task.initial_chain, k, vocab, pc.weights, cand_rng);
        BenchRow row{k, h, d, cfg.continuations, 0, 0.0};
        std::vector<double> times;
        for (std::size_t r = 0; r < cfg.warmup + cfg.reps; ++r) {
          Rng rng(cfg.seed);
          std::size_t evals = 0;
          const auto start = std::chrono::steady_clock::now();
          const auto scores =
              score_candidates(model, z, candidates, task.initial_chain, vocab, pc, rng, &evals);
          const auto stop = std::chrono::steady_clock::now();
          if (scores.size() != k) throw DomainError("bench: score count mismatch");
          row.evaluations = evals;
          if (r >= cfg.warmup) times.push_back(std::chrono::duration<double>(stop - start).count());
        }
        row.median_seconds = median(times);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

// --- reports --------------------------------------------------------------------------

Json simlemma_to_json(const std::vector<BoundCheckResult>& results) {
  Json trials = Json::array();
  std::size_t ok = 0, ok_classical = 0;
  for (const auto& r : results) {
    ok += r.satisfied;
    ok_classical += r.classical_satisfied;
    trials.push_back({{"trial", r.trial},
                      {"mdp_seed", r.mdp_seed},
                      {"n_states", r.n_states},
                      {"n_actions", r.n_actions},
                      {"delta", r.delta},
                      {"measured_delta", r.measured_delta},
                      {"horizon", r.horizon},
                      {"gamma", r.gamma},
                      {"gap", r.gap},
                      {"bound", r.bound},
                      {"margin", r.margin()},
                      {"satisfied", r.satisfied},
                      {"classical_bound", r.classical_bound},
                      {"classical_margin", r.classical_margin()},
                      {"classical_satisfied", r.classical_satisfied}});
  }
  return {{"suite", "simlemma"},
          {"n_trials", results.size()},
          {"satisfied", ok},
          {"classical_satisfied", ok_classical},
          {"trials", trials}};
}

std::string simlemma_to_csv(const std::vector<BoundCheckResult>& results) {
  std::ostringstream out;
  out.precision(17);
  out << "trial,mdp_seed,n_states,n_actions,delta,measured_delta,horizon,gamma,gap,"
         "bound,satisfied,classical_bound,classical_satisfied\n";
  for (const auto& r : results) {
    out << r.trial << ',' << r.mdp_seed << ',' << r.n_states << ',' << r.n_actions << ','
        << r.delta << ',' << r.measured_delta << ',' << r.horizon << ',' << r.gamma << ','
        << r.gap << ',' << r.bound << ',' << r.satisfied << ',' << r.classical_bound << ','
        << r.classical_satisfied << '\n';
  }
  return out.str();
}

Json rate_fit_to_json(const RateFit& fit) {
  Json trials = Json::array();
  for (const auto& t : fit.trials) {
    trials.push_back({{"n", t.n},
                      {"seed_index", t.seed_index},
                      {"holdout_dynamics", t.holdout_dynamics},
                      {"dropped", t.dropped},
                      {"note", t.note}});
  }
  return {{"suite", "convergence"},
          {"sizes", fit.sizes},
          {"median_errors", fit.errors},
          {"slope", fit.slope},
          {"intercept", fit.intercept},
          {"theoretical_slope", fit.theoretical_slope},
          {"slope_minus_theory", fit.slope - fit.theoretical_slope},
          {"seeds", fit.seeds},
          {"trials", trials}};
}

std::string rate_fit_to_csv(const RateFit& fit) {
  std::ostringstream out;
  out.precision(17);
  out << "n,seed_index,holdout_dynamics,dropped\n";
  for (const auto& t : fit.trials) {
    out << t.n << ',' << t.seed_index << ',' << t.holdout_dynamics << ',' << t.dropped << '\n';
  }
  return out.str();
}

Json multiscale_to_json(const MultiscaleReport& report) {
  Json trials = Json::array();
  for (const auto& t : report.trials) {
    trials.push_back({{"task_id", t.task_id},
                      {"seed_index", t.seed_index},
                      {"sampler", t.sampler},
                      {"edits", t.edits},
                      {"reached", t.reached},
                      {"final_reward", t.final_reward},
                      {"non_token_actions", t.non_token_actions}});
  }
  return {{"suite", "multiscale"},
          {"median_edits_multi_scale", report.median_multi},
          {"median_edits_token_only", report.median_token},
          {"token_only_violations", report.token_only_violations},
          {"trials", trials}};
}

std::string multiscale_to_csv(const MultiscaleReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "task_id,seed_index,sampler,edits,reached,final_reward\n";
  for (const auto& t : report.trials) {
    out << t.task_id << ',' << t.seed_index << ',' << t.sampler << ',' << t.edits << ','
        << t.reached << ',' << t.final_reward << '\n';
  }
  return out.str();
}

Json bench_to_json(const std::vector<BenchRow>& rows) {
  Json out = Json::array();
  for (const auto& r : rows) {
    out.push_back({{"k", r.k},
                   {"horizon", r.horizon},
                   {"d", r.d},
                   {"continuations", r.continuations},
                   {"evaluations", r.evaluations},
                   {"median_seconds", r.median_seconds}});
  }
  return {{"suite", "bench"}, {"rows", out}};
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "k,horizon,d,continuations,evaluations,median_seconds\n";
  for (const auto& r : rows) {
    out << r.k << ',' << r.horizon << ',' << r.d << ',' << r.continuations << ','
        << r.evaluations << ',' << r.median_seconds << '\n';
  }
  return out.str();
}

}  // namespace tap
