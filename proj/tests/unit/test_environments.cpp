#include "doctest.h"

#include <cmath>
#include <set>

#include "tap/environments.hpp"
#include "tap/errors.hpp"

using namespace tap;

namespace {

TabularMdp one_action_mdp(std::vector<std::vector<double>> P, std::vector<double> R,
                          double gamma) {
  TabularMdp m;
  m.n_states = R.size();
  m.n_actions = 1;
  for (const auto& row : P) m.transitions.insert(m.transitions.end(), row.begin(), row.end());
  m.rewards = R;
  m.gamma = gamma;
  return m;
}

// (I - gamma P) V = R by Gaussian elimination with partial pivoting.
std::vector<double> solve_policy_system(const std::vector<std::vector<double>>& P,
                                        const std::vector<double>& R, double gamma) {
  const std::size_t n = R.size();
  std::vector<std::vector<double>> A(n, std::vector<double>(n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) A[i][j] = (i == j ? 1.0 : 0.0) - gamma * P[i][j];
    A[i][n] = R[i];
  }
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k <= n; ++k) A[r][k] -= f * A[c][k];
    }
  }
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = A[i][n] / A[i][i];
  return v;
}

}  // namespace

TEST_CASE("similarity functions") {
  CHECK(token_f1({"a", "b"}, {"a", "c"}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(token_f1({"a", "b"}, {"c", "d"}) == 0.0);
  CHECK(token_f1({}, {}) == 1.0);
  CHECK(token_f1({"a"}, {}) == 0.0);
  // Multiset overlap: one shared "a" out of 3 and 1 tokens.
  CHECK(token_f1({"a", "a", "a"}, {"a"}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(normalized_levenshtein({"a", "b", "c"}, {"a", "b", "c"}) == 1.0);
  CHECK(normalized_levenshtein({"a", "b", "c"}, {"a", "c"}) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(normalized_levenshtein({"a", "b"}, {"b", "a"}) == 0.0);
  CHECK(normalized_levenshtein({}, {}) == 1.0);
}

TEST_CASE("synthetic oracle") {
  const ReasoningChain target{{{"a", "b"}, {"c"}}};
  SyntheticOracleEnv env({{"t", target}});
  const TaskInput t{"t", {"x"}, std::nullopt};
  CHECK(env.evaluate(t, target) == 1.0);
  CHECK(env.evaluate(t, ReasoningChain{{{"q"}}}) == 0.0);
  CHECK(env.deterministic());
  CHECK_THROWS_AS(env.evaluate(TaskInput{"missing", {}, std::nullopt}, target), EnvError);

  const ReasoningChain probe{{{"a", "z"}}};
  const double first = env.evaluate(t, probe);
  for (int i = 0; i < 1000; ++i) CHECK(env.evaluate(t, probe) == first);

  SyntheticOracleEnv lev({{"t", target}}, Similarity::NormalizedLevenshtein);
  CHECK(lev.evaluate(t, ReasoningChain{{{"c"}, {"a", "b"}}}) < 1.0);

  SyntheticOracleEnv noisy({{"t", target}}, Similarity::TokenF1, 0.3, 1);
  CHECK_FALSE(noisy.deterministic());
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    ReasoningChain c;
    const auto n = uniform_index(rng, 4);
    for (std::size_t s = 0; s < n; ++s)
      c.steps.push_back(Step(1 + uniform_index(rng, 3), uniform_index(rng, 2) ? "a" : "q"));
    const double r = noisy.evaluate(t, c);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
  }
}

TEST_CASE("counting wrapper") {
  SyntheticOracleEnv env({{"t", ReasoningChain{{{"a"}}}}});
  CountingEnv counter(env);
  const TaskInput t{"t", {}, std::nullopt};
  counter.evaluate(t, ReasoningChain{});
  counter.evaluate(t, ReasoningChain{});
  CHECK(counter.count() == 2);
  counter.reset();
  CHECK(counter.count() == 0);
}

TEST_CASE("task vocabulary") {
  const TaskInput t{"t", {"b", "a", "b"}, std::nullopt};
  CHECK(task_vocabulary(t, {"a", "z"}) == std::vector<Token>{"b", "a", "z"});
}

TEST_CASE("synthetic task generator") {
  SyntheticTaskConfig cfg;
  const auto tasks = generate_synthetic_tasks(30, cfg, 3);
  REQUIRE(tasks.size() == 30);
  CHECK(generate_synthetic_tasks(30, cfg, 3) == tasks);
  std::set<std::string> ids;
  for (const auto& rec : tasks) {
    ids.insert(rec.input.id);
    REQUIRE(rec.target.has_value());
    const auto flat = rec.target->flatten();
    CHECK(flat.size() == cfg.words_per_task);
    CHECK(rec.target->num_steps() >= cfg.min_steps);
    CHECK(rec.target->num_steps() <= cfg.max_steps);
    // Every task word appears exactly once in the target.
    std::multiset<Token> a(flat.begin(), flat.end()), b(rec.input.text.begin(), rec.input.text.end());
    CHECK(a == b);
    CHECK_FALSE(rec.initial_chain == *rec.target);
  }
  CHECK(ids.size() == 30);

  const auto reorder = generate_reorder_tasks(10, 4, 3, 0, 5);
  for (const auto& rec : reorder) {
    REQUIRE(rec.target.has_value());
    CHECK(rec.initial_chain.num_steps() == 4);
    auto x = rec.initial_chain.flatten(), y = rec.target->flatten();
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    CHECK(x == y);
  }
}

TEST_CASE("collect transitions") {
  SyntheticTaskConfig gen;
  const auto tasks = generate_synthetic_tasks(5, gen, 4);
  auto env = SyntheticOracleEnv::from_tasks(tasks);

  CollectConfig one;
  one.episodes = 1;
  one.steps_per_episode = 3;
  const auto small = collect_transitions(env, tasks, one);
  REQUIRE(small.transitions.size() == 3);
  CHECK(small.transitions[0].state.chain == tasks[0].initial_chain);
  for (std::size_t i = 0; i + 1 < 3; ++i)
    CHECK(small.transitions[i].next_chain == small.transitions[i + 1].state.chain);

  CollectConfig big;
  big.episodes = 50;
  big.steps_per_episode = 10;
  big.seed = 8;
  const auto r = collect_transitions(env, tasks, big);
  CHECK(r.transitions.size() == 500);
  CHECK(r.skipped == 0);
  for (const auto& t : r.transitions) {
    CHECK(check_transition(t).empty());
    CHECK(kind_of(t.action) != OpKind::NoOp);
    const double before = env.evaluate(t.state.task, t.state.chain);
    CHECK(t.reward == env.evaluate(t.state.task, t.next_chain));
    CHECK(t.reward_delta == doctest::Approx(t.reward - before).epsilon(1e-15));
  }
  CHECK(collect_transitions(env, tasks, big).transitions == r.transitions);

  CollectConfig guided;
  guided.policy = CollectPolicy::PlannerGuided;
  guided.guide = [](const MDPState&, Rng&) -> EditAction { return TokenAdd{0, 0, "x"}; };
  guided.steps_per_episode = 2;
  const auto g = collect_transitions(env, tasks, guided);
  REQUIRE(g.transitions.size() == 2);
  CHECK(std::get<TokenAdd>(g.transitions[1].action).token == "x");
}

TEST_CASE("value iteration hand cases") {
  auto single = one_action_mdp({{1.0}}, {1.0}, 0.5);
  auto vi = value_iteration(single, 1e-12);
  CHECK(std::abs(vi.values[0] - 2.0) < 1e-11);

  auto zero = one_action_mdp({{0.0, 1.0}, {1.0, 0.0}}, {0.0, 0.0}, 0.9);
  vi = value_iteration(zero);
  CHECK(vi.values == Vec{0.0, 0.0});

  auto chain = one_action_mdp({{0.0, 1.0}, {0.0, 1.0}}, {0.0, 1.0}, 0.5);
  vi = value_iteration(chain, 1e-12);
  CHECK(std::abs(vi.values[1] - 2.0) < 1e-11);
  CHECK(std::abs(vi.values[0] - 1.0) < 1e-11);
  for (std::size_t i = 1; i < vi.residuals.size(); ++i)
    CHECK(vi.residuals[i] <= vi.residuals[i - 1]);
}

TEST_CASE("policy value against a linear solve") {
  const std::vector<std::vector<double>> P{{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};
  const std::vector<double> R{1.0, 0.0, 0.5};
  const auto m = one_action_mdp(P, R, 0.9);
  const auto v = policy_value(m, Policy{0, 0, 0}, 1e-13);
  const auto exact = solve_policy_system(P, R, 0.9);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(v[i] - exact[i]) < 1e-11);

  // Symmetric two-state MDP under a policy that treats both states alike.
  TabularMdp sym;
  sym.n_states = 2;
  sym.n_actions = 2;
  sym.transitions = {0.3, 0.7, 0.6, 0.4, 0.7, 0.3, 0.4, 0.6};
  sym.rewards = {0.2, 0.8, 0.2, 0.8};
  sym.gamma = 0.8;
  const auto vs = policy_value(sym, Policy{1, 1});
  CHECK(std::abs(vs[0] - vs[1]) < 1e-9);
}

TEST_CASE("optimal policy value matches value iteration") {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const auto m = random_mdp(2 + uniform_index(rng, 5), 1 + uniform_index(rng, 3), 0.9, rng);
    CHECK_NOTHROW(m.validate());
    const double tol = 1e-10;
    const auto vi = value_iteration(m, tol);
    const auto pv = policy_value(m, vi.policy, tol);
    for (std::size_t s = 0; s < m.n_states; ++s) CHECK(std::abs(pv[s] - vi.values[s]) <= 2 * tol);
    // Greedy policy: no action improves the one-step lookahead.
    for (std::size_t s = 0; s < m.n_states; ++s) {
      for (std::size_t a = 0; a < m.n_actions; ++a) {
        double q = m.r(s, a);
        for (std::size_t n = 0; n < m.n_states; ++n) q += m.gamma * m.p(s, a, n) * vi.values[n];
        double qs = m.r(s, vi.policy[s]);
        for (std::size_t n = 0; n < m.n_states; ++n)
          qs += m.gamma * m.p(s, vi.policy[s], n) * vi.values[n];
        CHECK(q <= qs + 1e-9);
      }
    }
  }
}

TEST_CASE("perturbation stays within delta") {
  Rng rng(13);
  const auto m = random_mdp(5, 3, 0.9, rng);
  CHECK(perturb_mdp(m, 0.0, rng).transitions == m.transitions);
  for (int i = 0; i < 100; ++i) {
    const double delta = 0.02 + 0.3 * uniform01(rng);
    const auto p = perturb_mdp(m, delta, rng);
    CHECK(max_row_l1_distance(m, p) <= delta + 1e-9);
    CHECK(p.rewards == m.rewards);
    CHECK_NOTHROW(p.validate());
    for (double v : p.transitions) CHECK(v >= 0.0);
  }
  CHECK_THROWS_AS(perturb_mdp(m, 3.0, rng), DomainError);
}

TEST_CASE("mdp validation and json") {
  auto bad = one_action_mdp({{0.5, 0.4}, {0.5, 0.5}}, {0.0, 0.0}, 0.5);
  CHECK_THROWS_AS(bad.validate(), DomainError);
  auto bad_gamma = one_action_mdp({{1.0}}, {0.0}, 1.0);
  CHECK_THROWS_AS(bad_gamma.validate(), DomainError);
  auto bad_reward = one_action_mdp({{1.0}}, {1.5}, 0.5);
  CHECK_THROWS_AS(bad_reward.validate(), DomainError);

  Rng rng(14);
  const auto m = random_mdp(3, 2, 0.7, rng);
  const auto back = mdp_from_json(mdp_to_json(m));
  CHECK(back.transitions == m.transitions);
  CHECK(back.rewards == m.rewards);
  CHECK(back.gamma == m.gamma);
  CHECK(mdp_to_json(m)["P"].size() == 3);
}
