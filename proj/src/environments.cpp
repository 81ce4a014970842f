#include "tap/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "tap/errors.hpp"

namespace tap {

double token_f1(const std::vector<Token>& candidate,
                const std::vector<Token>& reference) {
  if (candidate.empty() && reference.empty()) return 1.0;
  if (candidate.empty() || reference.empty()) return 0.0;
  std::unordered_map<std::string_view, long> counts;
  for (const auto& t : reference) ++counts[t];
  long overlap = 0;
  for (const auto& t : candidate) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  return 2.0 * static_cast<double>(overlap) /
         static_cast<double>(candidate.size() + reference.size());
}

double normalized_levenshtein(const std::vector<Token>& a,
                              const std::vector<Token>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return 1.0 - static_cast<double>(prev[b.size()]) /
                   static_cast<double>(std::max(a.size(), b.size()));
}

SyntheticOracleEnv::SyntheticOracleEnv(std::map<std::string, ReasoningChain> targets,
                                       Similarity similarity, double noise_sigma,
                                       std::uint64_t seed)
    : targets_(std::move(targets)),
      similarity_(similarity),
      noise_sigma_(noise_sigma),
      rng_(mix_seed(seed, 0x04ac1e)) {
  if (!(noise_sigma_ >= 0.0)) throw DomainError("oracle: noise sigma must be >= 0");
}

SyntheticOracleEnv SyntheticOracleEnv::from_tasks(const std::vector<TaskRecord>& tasks,
                                                  Similarity similarity,
                                                  double noise_sigma,
                                                  std::uint64_t seed) {
  std::map<std::string, ReasoningChain> targets;
  for (const auto& t : tasks) {
    if (t.target) targets[t.input.id] = *t.target;
  }
  return SyntheticOracleEnv(std::move(targets), similarity, noise_sigma, seed);
}

const ReasoningChain& SyntheticOracleEnv::target(const std::string& task_id) const {
  auto it = targets_.find(task_id);
  if (it == targets_.end()) throw EnvError("oracle: no target for task '" + task_id + "'");
  return it->second;
}

double SyntheticOracleEnv::evaluate(const TaskInput& task,
                                    const ReasoningChain& chain) {
  const auto flat = chain.flatten();
  const auto ref = target(task.id).flatten();
  double r = similarity_ == Similarity::TokenF1 ? token_f1(flat, ref)
                                                : normalized_levenshtein(flat, ref);
  if (noise_sigma_ > 0.0) r += noise_sigma_ * standard_normal(rng_);
  return std::clamp(r, 0.0, 1.0);
}

std::vector<Token> task_vocabulary(const TaskInput& task,
                                   const std::vector<Token>& extra) {
  std::vector<Token> out;
  std::set<std::string_view> seen;
  auto push = [&](const Token& t) {
    if (is_valid_token(t) && seen.insert(t).second) out.push_back(t);
  };
  for (const auto& t : task.text) push(t);
  for (const auto& t : extra) push(t);
  return out;
}

// --- synthetic generators ---------------------------------------------------------

namespace {

const std::vector<Token>& content_words() {
  static const std::vector<Token> words = {
      "add",    "sum",     "total",   "carry",   "digit",   "times",  "divide",
      "half",   "double",  "count",   "apples",  "boxes",   "price",  "cost",
      "each",   "left",    "remain",  "share",   "equal",   "groups", "rate",
      "hours",  "miles",   "speed",   "area",    "width",   "length", "height",
      "ratio",  "percent", "tax",     "profit",  "balance", "units",  "weight",
      "volume", "angle",   "sides",   "square",  "root",    "factor", "prime",
      "even",   "odd",     "average", "median",  "minus",   "result"};
  return words;
}

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + uniform_index(rng, hi - lo + 1);
}

/// Flat token position -> (step, position).
std::pair<std::size_t, std::size_t> locate(const ReasoningChain& c, std::size_t flat) {
  for (std::size_t s = 0; s < c.steps.size(); ++s) {
    if (flat < c.steps[s].size()) return {s, flat};
    flat -= c.steps[s].size();
  }
  return {c.steps.size() - 1, c.steps.back().size()};
}

}  // namespace

const std::vector<Token>& distractor_tokens() {
  static const std::vector<Token> words = {"um",     "maybe",  "perhaps", "filler",
                                           "unclear", "anyway", "hmm",    "whatever"};
  return words;
}

std::vector<TaskRecord> generate_synthetic_tasks(std::size_t n,
                                                 const SyntheticTaskConfig& cfg,
                                                 std::uint64_t seed) {
  const auto& all = content_words();
  const std::size_t pool = std::min(cfg.content_pool, all.size());
  if (cfg.words_per_task == 0 || cfg.words_per_task > pool || cfg.min_steps == 0 ||
      cfg.min_steps > cfg.max_steps) {
    throw ConfigError("synthetic tasks: inconsistent generator sizes");
  }
  Rng rng(mix_seed(seed, 0x7a5c));
  std::vector<TaskRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Token> words(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(pool));
    shuffle(words, rng);
    words.resize(cfg.words_per_task);

    // The target uses every task word exactly once, cut into contiguous
    // steps, so the reward is a function of the task text and the chain.
    const std::size_t steps = std::min(uniform_between(rng, cfg.min_steps, cfg.max_steps),
                                       words.size());
    std::vector<std::size_t> cuts(words.size() - 1);
    std::iota(cuts.begin(), cuts.end(), std::size_t{1});
    shuffle(cuts, rng);
    cuts.resize(steps - 1);
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(words.size());
    ReasoningChain target;
    std::size_t begin = 0;
    for (std::size_t end : cuts) {
      target.steps.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(begin),
                                words.begin() + static_cast<std::ptrdiff_t>(end));
      begin = end;
    }

    ReasoningChain start = target;
    for (std::size_t k = 0; k < cfg.word_drops && start.token_count() > 1; ++k) {
      auto [s, p] = locate(start, uniform_index(rng, start.token_count()));
      start = apply_edit(start, TokenDelete{s, p});
    }
    for (std::size_t k = 0; k < cfg.word_replacements && start.token_count() > 0; ++k) {
      auto [s, p] = locate(start, uniform_index(rng, start.token_count()));
      start = apply_edit(start, TokenReplace{s, p, words[uniform_index(rng, words.size())]});
    }
    const auto& noise = distractor_tokens();
    for (std::size_t k = 0; k < cfg.distractor_inserts; ++k) {
      const std::size_t s = uniform_index(rng, start.steps.size());
      const std::size_t p = uniform_index(rng, start.steps[s].size() + 1);
      start = apply_edit(start, TokenAdd{s, p, noise[uniform_index(rng, noise.size())]});
    }

    std::vector<Token> text = words;
    shuffle(text, rng);
    TaskRecord rec;
    rec.input.id = cfg.id_prefix + "-" + std::to_string(i);
    rec.input.text = std::move(text);
    rec.initial_chain = std::move(start);
    rec.target = std::move(target);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<TaskRecord> generate_reorder_tasks(std::size_t n, std::size_t steps,
                                               std::size_t tokens_per_step,
                                               std::size_t max_token_edits,
                                               std::uint64_t seed) {
  const auto& all = content_words();
  if (steps < 2 || tokens_per_step == 0 || steps * tokens_per_step > all.size()) {
    throw ConfigError("reorder tasks: need >= 2 steps and enough distinct words");
  }
  Rng rng(mix_seed(seed, 0x2e02d));
  std::vector<TaskRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Token> words = all;
    shuffle(words, rng);
    ReasoningChain target;
    for (std::size_t s = 0; s < steps; ++s) {
      target.steps.emplace_back(
          words.begin() + static_cast<std::ptrdiff_t>(s * tokens_per_step),
          words.begin() + static_cast<std::ptrdiff_t>((s + 1) * tokens_per_step));
    }
    std::vector<Token> used = target.flatten();

    const std::size_t from = uniform_index(rng, steps);
    std::size_t to = uniform_index(rng, steps - 1);
    if (to >= from) ++to;
    ReasoningChain start = apply_edit(target, StepReorder{from, to});
    const std::size_t edits = uniform_index(rng, max_token_edits + 1);
    for (std::size_t k = 0; k < edits; ++k) {
      auto [s, p] = locate(start, uniform_index(rng, start.token_count()));
      start = apply_edit(start, TokenReplace{s, p, used[uniform_index(rng, used.size())]});
    }

    TaskRecord rec;
    rec.input.id = "reorder-" + std::to_string(i);
    rec.input.text = used;
    shuffle(rec.input.text, rng);
    rec.initial_chain = std::move(start);
    rec.target = std::move(target);
    out.push_back(std::move(rec));
  }
  return out;
}

// --- collection -----------------------------------------------------------------

CollectResult collect_transitions(Environment& env, const std::vector<TaskRecord>& tasks,
                                  const CollectConfig& cfg) {
  if (cfg.episodes == 0) throw DomainError("collect: episodes must be >= 1");
  if (tasks.empty()) throw DomainError("collect: no tasks");
  if (cfg.policy == CollectPolicy::PlannerGuided && !cfg.guide) {
    throw ConfigError("collect: planner-guided collection needs a model");
  }
  const std::string policy_name =
      cfg.policy == CollectPolicy::RandomEdits ? "random_edits" : "planner_guided";
  CollectResult out;
  Rng rng(mix_seed(cfg.seed, 0xc011ec7));
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const TaskRecord& task = tasks[e % tasks.size()];
    const auto vocab = task_vocabulary(task.input, cfg.extra_vocab);
    MDPState state{task.input, task.initial_chain};
    double prev;
    try {
      ++out.env_queries;
      prev = env.evaluate(state.task, state.chain);
    } catch (const Error& err) {
      ++out.skipped;
      out.errors.push_back("episode " + std::to_string(e) + ": " + err.what());
      continue;
    }
    for (std::size_t step = 0; step < cfg.steps_per_episode; ++step) {
      const EditAction action =
          cfg.policy == CollectPolicy::RandomEdits
              ? sample_action(state.chain, vocab, cfg.weights, rng, cfg.enum_cfg)
              : cfg.guide(state, rng);
      ReasoningChain next;
      double reward;
      try {
        next = apply_edit(state.chain, action);
        ++out.env_queries;
        reward = env.evaluate(state.task, next);
      } catch (const Error& err) {
        ++out.skipped;
        out.errors.push_back("episode " + std::to_string(e) + " step " +
                             std::to_string(step) + ": " + err.what());
        continue;
      }
      Transition t{state, action, next, reward, reward - prev,
                   {cfg.seed, e, step, policy_name}};
      out.transitions.push_back(std::move(t));
      state.chain = std::move(next);
      prev = reward;
    }
  }
  return out;
}

// --- tabular MDPs -------------------------------------------------------------------

void TabularMdp::validate() const {
  if (n_states == 0 || n_actions == 0) throw DomainError("mdp: empty state or action set");
  if (transitions.size() != n_states * n_actions * n_states ||
      rewards.size() != n_states * n_actions) {
    throw DomainError("mdp: table sizes do not match n_states / n_actions");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw DomainError("mdp: gamma must be in [0, 1)");
  for (std::size_t s = 0; s < n_states; ++s) {
    for (std::size_t a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (double p : row(s, a)) {
        if (!(p >= 0.0)) throw DomainError("mdp: negative transition probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw DomainError("mdp: row (" + std::to_string(s) + "," + std::to_string(a) +
                          ") sums to " + std::to_string(sum));
      }
      if (!(r(s, a) >= 0.0 && r(s, a) <= 1.0)) throw DomainError("mdp: reward outside [0, 1]");
    }
  }
}

namespace {

double q_value(const TabularMdp& mdp, const Vec& v, std::size_t s, std::size_t a) {
  double acc = 0.0;
  const auto row = mdp.row(s, a);
  for (std::size_t n = 0; n < mdp.n_states; ++n) acc += row[n] * v[n];
  return mdp.r(s, a) + mdp.gamma * acc;
}

/// Change threshold that keeps the iterate within tol / 2 of the fixed point.
double stop_threshold(double gamma, double tol) {
  return gamma == 0.0 ? INFINITY : tol * (1.0 - gamma) / (2.0 * gamma);
}

}  // namespace

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol) {
  mdp.validate();
  if (!(tol > 0.0)) throw DomainError("value_iteration: tol must be > 0");
  ValueIterationResult out;
  out.values.assign(mdp.n_states, 0.0);
  const double threshold = stop_threshold(mdp.gamma, tol);
  Vec next(mdp.n_states);
  while (true) {
    double change = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      double best = -INFINITY;
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        best = std::max(best, q_value(mdp, out.values, s, a));
      }
      next[s] = best;
      change = std::max(change, std::abs(best - out.values[s]));
    }
    out.values.swap(next);
    out.residuals.push_back(change);
    if (change <= threshold) break;
  }
  out.policy.assign(mdp.n_states, 0);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double best = q_value(mdp, out.values, s, 0);
    for (std::size_t a = 1; a < mdp.n_actions; ++a) {
      const double q = q_value(mdp, out.values, s, a);
      if (q > best) {
        best = q;
        out.policy[s] = a;
      }
    }
  }
  return out;
}

Vec policy_value(const TabularMdp& mdp, const Policy& policy, double tol) {
  mdp.validate();
  if (policy.size() != mdp.n_states) throw DomainError("policy_value: policy size mismatch");
  for (std::size_t a : policy) {
    if (a >= mdp.n_actions) throw DomainError("policy_value: action out of range");
  }
  const double threshold = stop_threshold(mdp.gamma, tol);
  Vec v(mdp.n_states, 0.0), next(mdp.n_states);
  while (true) {
    double change = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      next[s] = q_value(mdp, v, s, policy[s]);
      change = std::max(change, std::abs(next[s] - v[s]));
    }
    v.swap(next);
    if (change <= threshold) break;
  }
  return v;
}

TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma,
                      Rng& rng) {
  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  m.transitions.resize(n_states * n_actions * n_states);
  m.rewards.resize(n_states * n_actions);
  for (std::size_t sa = 0; sa < n_states * n_actions; ++sa) {
    double sum = 0.0;
    double* row = m.transitions.data() + sa * n_states;
    for (std::size_t n = 0; n < n_states; ++n) {
      double u = 0.0;
      while (u <= 0.0) u = uniform01(rng);
      row[n] = -std::log(u);
      sum += row[n];
    }
    for (std::size_t n = 0; n < n_states; ++n) row[n] /= sum;
    m.rewards[sa] = uniform01(rng);
  }
  return m;
}

namespace {

/// Euclidean projection onto the probability simplex (sort-based).
Vec project_to_simplex(const Vec& y) {
  Vec u = y;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, theta = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumsum += u[i];
    const double t = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - t > 0.0) theta = t;
  }
  Vec x(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) x[i] = std::max(y[i] - theta, 0.0);
  return x;
}

double l1(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc;
}

}  // namespace

TabularMdp perturb_mdp(const TabularMdp& mdp, double delta, Rng& rng) {
  if (!(delta >= 0.0 && delta <= 2.0)) throw DomainError("perturb_mdp: delta must be in [0, 2]");
  TabularMdp out = mdp;
  if (delta == 0.0) return out;
  const std::size_t n = mdp.n_states;
  for (std::size_t sa = 0; sa < mdp.n_states * mdp.n_actions; ++sa) {
    const std::span<const double> p(mdp.transitions.data() + sa * n, n);
    Vec dir(n);
    double mean = 0.0;
    for (double& v : dir) {
      v = standard_normal(rng);
      mean += v;
    }
    mean /= static_cast<double>(n);
    double norm = 0.0;
    for (double& v : dir) {
      v -= mean;
      norm += std::abs(v);
    }
    if (norm == 0.0) continue;
    Vec q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = p[i] + delta * dir[i] / norm;
    Vec proj = project_to_simplex(q);
    double sum = 0.0;
    for (double v : proj) sum += v;
    for (double& v : proj) v /= sum;
    const double dist = l1(proj, p);
    if (dist > delta) {
      const double shrink = delta / dist;
      for (std::size_t i = 0; i < n; ++i) proj[i] = p[i] + shrink * (proj[i] - p[i]);
    }
    sum = 0.0;
    for (double& v : proj) {
      v = std::max(v, 0.0);
      sum += v;
    }
    for (std::size_t i = 0; i < n; ++i) out.transitions[sa * n + i] = proj[i] / sum;
  }
  return out;
}

double max_row_l1_distance(const TabularMdp& a, const TabularMdp& b) {
  if (a.n_states != b.n_states || a.n_actions != b.n_actions) {
    throw DomainError("max_row_l1_distance: shape mismatch");
  }
  double worst = 0.0;
  for (std::size_t s = 0; s < a.n_states; ++s) {
    for (std::size_t act = 0; act < a.n_actions; ++act) {
      worst = std::max(worst, l1(a.row(s, act), b.row(s, act)));
    }
  }
  return worst;
}

Json mdp_to_json(const TabularMdp& m) {
  Json P = Json::array();
  Json R = Json::array();
  for (std::size_t s = 0; s < m.n_states; ++s) {
    Json ps = Json::array();
    Json rs = Json::array();
    for (std::size_t a = 0; a < m.n_actions; ++a) {
      const auto row = m.row(s, a);
      ps.push_back(std::vector<double>(row.begin(), row.end()));
      rs.push_back(m.r(s, a));
    }
    P.push_back(ps);
    R.push_back(rs);
  }
  return {{"n_states", m.n_states}, {"n_actions", m.n_actions},
          {"P", P},                 {"R", R},
          {"gamma", m.gamma}};
}

TabularMdp mdp_from_json(const Json& j) {
  TabularMdp m;
  try {
    m.n_states = j.at("n_states").get<std::size_t>();
    m.n_actions = j.at("n_actions").get<std::size_t>();
    m.gamma = j.at("gamma").get<double>();
    const Json& P = j.at("P");
    const Json& R = j.at("R");
    for (std::size_t s = 0; s < m.n_states; ++s) {
      for (std::size_t a = 0; a < m.n_actions; ++a) {
        const auto row = P.at(s).at(a).get<std::vector<double>>();
        if (row.size() != m.n_states) throw ParseError("mdp: P row has wrong length", 0);
        m.transitions.insert(m.transitions.end(), row.begin(), row.end());
        m.rewards.push_back(R.at(s).at(a).get<double>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("mdp: ") + e.what(), 0);
  }
  m.validate();
  return m;
}

}  // namespace tap
