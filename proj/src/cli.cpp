#include "tap/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "tap/config.hpp"
#include "tap/datastore.hpp"
#include "tap/errors.hpp"
#include "tap/theory.hpp"

namespace tap::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  // collect
  std::string env_kind;
  std::size_t episodes = 0;
  std::size_t steps = 0;
  std::string out;
  std::string tasks;
  std::string tasks_out;
  std::string model;
  // train
  std::string data;
  std::string history;
  std::size_t epochs = 0;
  double lr = 0.0;
  // optimize
  std::string scorer;
  std::string report;
  bool probe = false;
  // validate
  std::string suite;
  std::string out_dir;
  std::size_t trials = 0;
  std::size_t suite_seeds = 0;
  // bench
  std::vector<std::size_t> ks{16, 32, 64};
  std::vector<std::size_t> horizons{1, 2, 3};
  std::vector<std::size_t> dims{16, 32};
  std::size_t reps = 20;
  // export
  std::size_t limit = 0;
};

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required");
  if (!fs::exists(path)) throw ConfigError(flag + ": no such file '" + path + "'");
}

std::string pick(const std::string& flag_value, const std::string& config_value) {
  return flag_value.empty() ? config_value : flag_value;
}

std::vector<TaskRecord> resolve_tasks(const AppConfig& cfg, const std::string& path) {
  if (!path.empty()) {
    require_file(path, "--tasks");
    return load_tasks(path);
  }
  if (cfg.env_kind != EnvKind::Synthetic) {
    throw ConfigError("paths.tasks: the llm environment needs a task file");
  }
  return generate_synthetic_tasks(cfg.synthetic.n_tasks, cfg.synthetic.generator, cfg.seed);
}

std::unique_ptr<Environment> make_env(const AppConfig& cfg,
                                      const std::vector<TaskRecord>& tasks) {
  if (cfg.env_kind == EnvKind::Llm) return std::make_unique<LlmEnv>(cfg.llm);
  for (const auto& t : tasks) {
    if (!t.target) {
      throw ConfigError("environment.kind: synthetic environment needs a target_chain for task '" +
                        t.input.id + "'");
    }
  }
  return std::make_unique<SyntheticOracleEnv>(SyntheticOracleEnv::from_tasks(
      tasks, cfg.synthetic.similarity, cfg.synthetic.noise_sigma, cfg.seed));
}

WorldModel load_model_checked(const AppConfig& cfg, const std::string& path) {
  require_file(path, "--model");
  WorldModel model = load_checkpoint(path);
  if (cfg.arch_given && !(model.arch == cfg.arch)) {
    throw ConfigError("model: checkpoint architecture (d=" + std::to_string(model.arch.d) +
                      ") does not match the configured architecture (d=" +
                      std::to_string(cfg.arch.d) + ")");
  }
  return model;
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

int cmd_collect(AppConfig cfg, const Options& o, std::ostream& out) {
  const auto tasks = resolve_tasks(cfg, pick(o.tasks, cfg.paths.tasks));
  auto env = make_env(cfg, tasks);
  const std::string out_path = pick(o.out, cfg.paths.data);
  if (out_path.empty()) throw ConfigError("--out is required");

  CollectConfig cc;
  cc.policy = cfg.collect.policy;
  cc.episodes = o.episodes ? o.episodes : cfg.collect.episodes;
  cc.steps_per_episode = o.steps ? o.steps : cfg.collect.steps_per_episode;
  cc.seed = cfg.seed;
  cc.weights = cfg.planner.weights;
  cc.enum_cfg = cfg.planner.enum_cfg;
  cc.extra_vocab = cfg.planner.extra_vocab;

  std::unique_ptr<WorldModel> model;
  if (cc.policy == CollectPolicy::PlannerGuided) {
    model = std::make_unique<WorldModel>(load_model_checked(cfg, pick(o.model, cfg.paths.model)));
    const PlannerConfig pc = cfg.planner;
    cc.guide = [&model, pc](const MDPState& s, Rng& rng) {
      const auto vocab = task_vocabulary(s.task, pc.extra_vocab);
      const auto candidates =
          sample_candidates(s.chain, pc.candidates, vocab, pc.weights, rng, pc.enum_cfg);
      const Vec z = encode(*model, s);
      const auto scores = score_candidates(*model, z, candidates, s.chain, vocab, pc, rng);
      return candidates[select_action(scores, pc, rng)];
    };
  }

  const auto result = collect_transitions(*env, tasks, cc);
  write_dataset(out_path, result.transitions);
  if (!o.tasks_out.empty()) write_tasks(o.tasks_out, tasks);
  double mean = 0.0;
  for (const auto& t : result.transitions) mean += t.reward;
  if (!result.transitions.empty()) mean /= static_cast<double>(result.transitions.size());
  out << "collected " << result.transitions.size() << " transitions (skipped "
      << result.skipped << ", env queries " << result.env_queries << "), mean reward "
      << std::fixed << std::setprecision(4) << mean << std::defaultfloat << "\n";
  if (result.transitions.empty() && result.skipped > 0) {
    throw EnvError("collect: every step failed; first error: " + result.errors.front());
  }
  return kExitOk;
}

int cmd_train(AppConfig cfg, const Options& o, std::ostream& out) {
  const std::string data = pick(o.data, cfg.paths.data);
  require_file(data, "--data");
  const std::string out_path = pick(o.out, cfg.paths.model);
  if (out_path.empty()) throw ConfigError("--out is required");
  if (o.epochs) cfg.training.epochs = o.epochs;
  if (o.lr > 0.0) cfg.training.learning_rate = o.lr;
  cfg.training.validate();

  const auto dataset = load_dataset(data, true);
  const auto result = train(dataset, cfg.arch, cfg.training);
  const Json extra = {{"training", train_config_to_json(cfg.training)},
                      {"dataset_size", dataset.size()}};
  save_checkpoint(result.model, out_path, extra.dump());
  const std::string history_path = o.history.empty() ? out_path + ".history.json" : o.history;
  write_text_file(history_path, history_to_json(result.history).dump(2) + "\n");
  const auto& last = result.history.epochs.back();
  out << "trained " << result.history.epochs.size() << " epochs on "
      << result.history.train_size << " transitions; final train loss "
      << format_double(last.train_loss);
  if (last.has_holdout) out << ", holdout loss " << format_double(last.holdout.total);
  out << "\n";
  return kExitOk;
}

int cmd_optimize(AppConfig cfg, const Options& o, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const std::string task_path = pick(o.tasks, cfg.paths.tasks);
  require_file(task_path, "--task-file");
  const auto tasks = load_tasks(task_path);
  auto env = make_env(cfg, tasks);
  CountingEnv counted(*env);
  if (!o.scorer.empty()) {
    if (o.scorer == "model") {
      cfg.scorer = ScorerKind::Model;
    } else if (o.scorer == "oracle") {
      cfg.scorer = ScorerKind::Oracle;
    } else {
      throw ConfigError("--scorer: unknown value '" + o.scorer + "'");
    }
  }
  if (o.probe) cfg.planner.probe_env = true;
  cfg.validate();

  std::unique_ptr<WorldModel> model;
  if (cfg.scorer == ScorerKind::Model) {
    model = std::make_unique<WorldModel>(load_model_checked(cfg, pick(o.model, cfg.paths.model)));
  }

  Json runs = Json::array();
  RunReport report;
  report.command = "optimize";
  report.seed = cfg.seed;
  report.run_id = "optimize-" + std::to_string(cfg.seed);
  report.config = app_config_to_json(cfg);
  std::size_t improved = 0;
  for (const auto& task : tasks) {
    PlanTrajectory traj;
    if (model) {
      LatentScorer scorer(*model);
      traj = optimize(counted, scorer, task.input, task.initial_chain, cfg.planner);
    } else {
      OracleScorer scorer(counted);
      traj = optimize(counted, scorer, task.input, task.initial_chain, cfg.planner);
    }
    const double r0 = counted.evaluate(task.input, task.initial_chain);
    const double r1 = counted.evaluate(task.input, traj.final_chain);
    improved += r1 > r0;
    runs.push_back({{"trajectory", trajectory_to_json(traj)},
                    {"initial_reward", r0},
                    {"final_reward", r1},
                    {"final_chain_text", render_chain(traj.final_chain)}});
    report.metrics.push_back({{"task_id", task.input.id},
                              {"initial_reward", r0},
                              {"final_reward", r1},
                              {"steps", traj.steps.size()},
                              {"planner_env_queries", traj.env_queries},
                              {"error", traj.error ? Json(*traj.error) : Json(nullptr)}});
    out << "task " << task.input.id << ": reward " << format_double(r0) << " -> "
        << format_double(r1) << "\n"
        << render_chain(traj.final_chain) << "\n";
    if (traj.error) out << "  stopped at step " << *traj.error_step << ": " << *traj.error << "\n";
  }
  const Json doc = {{"planner", planner_config_to_json(cfg.planner)},
                    {"scorer", cfg.scorer == ScorerKind::Model ? "model" : "oracle"},
                    {"runs", runs}};
  const std::string out_path = pick(o.out, cfg.paths.out);
  if (!out_path.empty()) write_text_file(out_path, doc.dump(2) + "\n");
  report.env_queries = counted.count();
  report.summary = {{"tasks", tasks.size()}, {"improved", improved}};
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.report.empty()) write_report(report, o.report);
  return kExitOk;
}

void write_suite(const Options& o, const std::string& name, const Json& j,
                 const std::string& csv) {
  if (o.out_dir.empty()) return;
  fs::create_directories(o.out_dir);
  write_text_file(fs::path(o.out_dir) / (name + ".json"), j.dump(2) + "\n");
  write_text_file(fs::path(o.out_dir) / (name + ".csv"), csv);
}

int cmd_validate(const AppConfig& cfg, const Options& o, std::ostream& out) {
  if (o.suite == "simlemma") {
    SimLemmaConfig sc;
    sc.seed = cfg.seed;
    if (o.trials) sc.n_trials = o.trials;
    const auto results = run_simulation_lemma_suite(sc);
    std::size_t ok = 0, ok_classical = 0;
    double worst = INFINITY;
    for (const auto& r : results) {
      ok += r.satisfied;
      ok_classical += r.classical_satisfied;
      worst = std::min(worst, r.margin());
    }
    write_suite(o, "simlemma", simlemma_to_json(results), simlemma_to_csv(results));
    out << "simlemma: " << ok << "/" << results.size() << " trials within H*delta/(1-gamma)^2"
        << " (smallest margin " << format_double(worst) << "); classical bound "
        << ok_classical << "/" << results.size() << "\n";
    return ok == results.size() ? kExitOk : kExitCheckFailed;
  }
  if (o.suite == "convergence") {
    ConvergenceConfig cc;
    cc.seed = cfg.seed;
    if (o.suite_seeds) cc.seeds = o.suite_seeds;
    const auto fit = run_convergence_suite(cc);
    write_suite(o, "convergence", rate_fit_to_json(fit), rate_fit_to_csv(fit));
    out << "convergence: slope " << format_double(fit.slope) << " (theory -0.5, difference "
        << format_double(fit.slope + 0.5) << ")\n";
    return fit.slope < 0.0 ? kExitOk : kExitCheckFailed;
  }
  if (o.suite == "multiscale") {
    MultiscaleConfig mc;
    mc.seed = cfg.seed;
    if (o.suite_seeds) mc.seeds = o.suite_seeds;
    const auto rep = run_multiscale_suite(mc);
    write_suite(o, "multiscale", multiscale_to_json(rep), multiscale_to_csv(rep));
    out << "multiscale: median edits multi-scale " << rep.median_multi << ", token-only "
        << rep.median_token << ", token-only violations " << rep.token_only_violations << "\n";
    return rep.median_multi <= rep.median_token && rep.token_only_violations == 0
               ? kExitOk
               : kExitCheckFailed;
  }
  throw ConfigError("--suite: unknown value '" + o.suite + "'");
}

int cmd_bench(const AppConfig& cfg, const Options& o, std::ostream& out) {
  BenchConfig bc;
  bc.seed = cfg.seed;
  bc.ks = o.ks;
  bc.horizons = o.horizons;
  bc.dims = o.dims;
  bc.reps = o.reps;
  bc.continuations = cfg.planner.continuations;
  const auto rows = run_complexity_bench(bc);
  write_suite(o, "bench", bench_to_json(rows), bench_to_csv(rows));
  out << "k,horizon,d,continuations,evaluations,median_seconds\n";
  for (const auto& r : rows) {
    out << r.k << ',' << r.horizon << ',' << r.d << ',' << r.continuations << ','
        << r.evaluations << ',' << format_double(r.median_seconds) << '\n';
  }
  return kExitOk;
}

int cmd_export(const AppConfig& cfg, const Options& o, std::ostream& out) {
  const WorldModel model = load_model_checked(cfg, pick(o.model, cfg.paths.model));
  const std::string data = pick(o.data, cfg.paths.data);
  require_file(data, "--data");
  const std::string out_path = pick(o.out, cfg.paths.out);
  if (out_path.empty()) throw ConfigError("--out is required");
  const auto dataset = load_dataset(data, false);
  std::ostringstream csv;
  csv << std::setprecision(17) << "id";
  for (std::size_t i = 0; i < model.arch.d; ++i) csv << ",z" << i;
  csv << '\n';
  std::size_t rows = 0;
  for (const auto& t : dataset) {
    if (o.limit && rows >= o.limit) break;
    const Vec z = encode(model, t.state);
    csv << t.state.task.id << ':' << t.meta.episode << ':' << t.meta.step;
    for (double v : z) csv << ',' << v;
    csv << '\n';
    ++rows;
  }
  write_text_file(out_path, csv.str());
  out << "exported " << rows << " embeddings of width " << model.arch.d << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reasoning-chain optimization by planning over a learned latent world model"};
  app.require_subcommand(1);
  Options o;
  bool seed_given = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "overrides the config seed")
        ->each([&](const std::string&) { seed_given = true; });
  };

  auto* collect = app.add_subcommand("collect", "collect random-edit transitions");
  common(collect);
  collect->add_option("--env", o.env_kind, "synthetic | llm");
  collect->add_option("--episodes", o.episodes);
  collect->add_option("--steps", o.steps, "steps per episode");
  collect->add_option("--out", o.out, "dataset file (JSON lines)");
  collect->add_option("--tasks", o.tasks, "task file (JSON lines)");
  collect->add_option("--tasks-out", o.tasks_out, "write the task set used");
  collect->add_option("--model", o.model, "checkpoint for planner-guided collection");

  auto* train_cmd = app.add_subcommand("train", "train the world model");
  common(train_cmd);
  train_cmd->add_option("--data", o.data, "dataset file");
  train_cmd->add_option("--out", o.out, "checkpoint path");
  train_cmd->add_option("--history", o.history, "history JSON (default <out>.history.json)");
  train_cmd->add_option("--epochs", o.epochs);
  train_cmd->add_option("--lr", o.lr);

  auto* optimize_cmd = app.add_subcommand("optimize", "plan edits for each task");
  common(optimize_cmd);
  optimize_cmd->add_option("--model", o.model, "checkpoint");
  optimize_cmd->add_option("--task-file", o.tasks, "task file (JSON lines)");
  optimize_cmd->add_option("--out", o.out, "trajectory JSON");
  optimize_cmd->add_option("--report", o.report, "run report JSON");
  optimize_cmd->add_option("--scorer", o.scorer, "model | oracle");
  optimize_cmd->add_flag("--probe", o.probe, "probe the environment after every edit");

  auto* validate = app.add_subcommand("validate", "run a theory validation suite");
  common(validate);
  validate->add_option("--suite", o.suite, "simlemma | convergence | multiscale")->required();
  validate->add_option("--out-dir", o.out_dir, "directory for JSON and CSV reports");
  validate->add_option("--trials", o.trials, "simlemma trial count");
  validate->add_option("--seeds", o.suite_seeds, "seed count for convergence/multiscale");

  auto* bench = app.add_subcommand("bench", "time one planning step over a grid");
  common(bench);
  bench->add_option("--k", o.ks)->delimiter(',');
  bench->add_option("--horizon", o.horizons)->delimiter(',');
  bench->add_option("--d", o.dims)->delimiter(',');
  bench->add_option("--reps", o.reps);
  bench->add_option("--out-dir", o.out_dir);

  auto* export_cmd = app.add_subcommand("export-embeddings", "write state embeddings as CSV");
  common(export_cmd);
  export_cmd->add_option("--model", o.model, "checkpoint");
  export_cmd->add_option("--data", o.data, "dataset file");
  export_cmd->add_option("--out", o.out, "CSV path");
  export_cmd->add_option("--limit", o.limit, "maximum rows (0 = all)");

  std::vector<std::string> argv_store{"tap"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  try {
    AppConfig cfg = load_app_config(o.config);
    if (seed_given) cfg.apply_seed(o.seed);
    if (!o.env_kind.empty()) cfg.env_kind = parse_env_kind(o.env_kind);
    cfg.validate();
    if (*collect) return cmd_collect(cfg, o, out);
    if (*train_cmd) return cmd_train(cfg, o, out);
    if (*optimize_cmd) return cmd_optimize(cfg, o, out);
    if (*validate) return cmd_validate(cfg, o, out);
    if (*bench) return cmd_bench(cfg, o, out);
    return cmd_export(cfg, o, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InsufficientGridError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EnvError& e) {
    err << "environment error: " << e.what() << "\n";
    return kExitEnv;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitEnv;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitEnv;
  } catch (const VersionError& e) {
    err << "version error: " << e.what() << "\n";
    return kExitEnv;
  } catch (const NumericsError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace tap::cli
