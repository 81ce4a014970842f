#include "doctest.h"

#include <cmath>
#include <limits>

#include "tap/errors.hpp"
#include "tap/neural.hpp"

using namespace tap;

namespace {

MlpParams fixed_net() {
  MlpParams p;
  p.activation = Activation::Tanh;
  DenseLayer l1{Tensor2(2, 2), {0.1, -0.1}};
  l1.weight.data = {0.5, -0.3, 0.2, 0.8};
  DenseLayer l2{Tensor2(1, 2), {0.05}};
  l2.weight.data = {1.0, -2.0};
  p.layers = {l1, l2};
  return p;
}

}  // namespace

TEST_CASE("mlp forward special cases") {
  Rng rng(1);
  auto net = init_mlp({3, 4, 2}, Activation::Tanh, rng);
  auto zero = zeros_like(net);
  const auto out = mlp_forward(zero, std::vector<double>{0.3, -1.0, 2.0});
  CHECK(out == Vec{0.0, 0.0});

  MlpParams ident;
  DenseLayer l{Tensor2(3, 3), {0, 0, 0}};
  for (int i = 0; i < 3; ++i) l.weight(i, i) = 1.0;
  ident.layers = {l};
  const Vec x{1.5, -2.0, 0.25};
  CHECK(mlp_forward(ident, x) == x);
  CHECK_THROWS_AS(mlp_forward(ident, Vec{1.0}), ShapeError);
}

TEST_CASE("mlp forward matches extended precision evaluation") {
  // 1.0 * tanh(0.5 + 0.1) - 2.0 * tanh(0.2 - 0.1) + 0.05, done in long double.
  const long double expected = std::tanh(0.6L) - 2.0L * std::tanh(0.1L) + 0.05L;
  const auto out = mlp_forward(fixed_net(), Vec{1.0, 0.0});
  REQUIRE(out.size() == 1);
  CHECK(std::abs(out[0] - static_cast<double>(expected)) < 1e-15);
}

TEST_CASE("mlp backward analytic forms") {
  auto net = fixed_net();
  auto grads = zeros_like(net);
  const auto dx = mlp_backward(net, Vec{1.0, 0.0}, Vec{0.0}, grads);
  CHECK(dx == Vec{0.0, 0.0});
  CHECK(grads == zeros_like(net));

  MlpParams lin;
  DenseLayer l{Tensor2(2, 3), {0.0, 0.0}};
  l.weight.data = {1, 2, 3, 4, 5, 6};
  lin.layers = {l};
  auto g = zeros_like(lin);
  const auto din = mlp_backward(lin, Vec{0.1, 0.2, 0.3}, Vec{1.0, -1.0}, g);
  CHECK(din == Vec{1.0 - 4.0, 2.0 - 5.0, 3.0 - 6.0});
}

TEST_CASE("mlp gradient matches finite differences") {
  for (auto act : {Activation::Tanh, Activation::ReLU}) {
    Rng rng(21);
    auto net = init_mlp({4, 6, 3}, act, rng);
    const Vec x{0.3, -0.7, 1.1, 0.05};
    const Vec up{0.4, -1.2, 0.9};
    ParamList params;
    net.collect("net", params);
    auto f = [&](std::span<const double> p) {
      assign(params, p);
      const auto y = mlp_forward(net, x);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += up[i] * y[i];
      return s;
    };
    auto g = [&](std::span<const double> p) {
      assign(params, p);
      auto grads = zeros_like(net);
      mlp_backward(net, x, up, grads);
      ParamList gl;
      grads.collect("net", gl);
      return flatten(gl);
    };
    const auto p0 = flatten(params);
    CHECK(grad_check(f, g, p0) < 1e-4);
  }
}

TEST_CASE("grad_check reference functions") {
  auto sq = [](std::span<const double> p) {
    double s = 0;
    for (double v : p) s += v * v;
    return s;
  };
  auto dsq = [](std::span<const double> p) {
    Vec g(p.begin(), p.end());
    for (auto& v : g) v *= 2;
    return g;
  };
  const Vec p{0.3, -2.0, 5.0};
  CHECK(grad_check(sq, dsq, p) < 1e-8);
  auto cst = [](std::span<const double>) { return 4.0; };
  auto dcst = [](std::span<const double> p) { return Vec(p.size(), 0.0); };
  CHECK(grad_check(cst, dcst, p) == 0.0);
  auto bad = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(grad_check(bad, dcst, p), NumericsError);
  CHECK_THROWS_AS(grad_check(sq, dsq, p, 0.5), DomainError);
}

TEST_CASE("attention gradient matches finite differences") {
  Rng rng(8);
  auto att = init_attention(4, 2, rng);
  Tensor2 x(3, 4);
  for (auto& v : x.data) v = standard_normal(rng);
  Tensor2 up(3, 4);
  for (auto& v : up.data) v = standard_normal(rng);
  ParamList params;
  att.collect("att", params);
  auto contract = [&](const Tensor2& y) {
    double s = 0;
    for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * up.data[i];
    return s;
  };
  auto f = [&](std::span<const double> p) {
    assign(params, p);
    return contract(attention_forward(att, x));
  };
  auto g = [&](std::span<const double> p) {
    assign(params, p);
    AttentionTrace tr;
    attention_forward(att, x, &tr);
    auto grads = zeros_like(att);
    attention_backward(att, x, up, grads, tr);
    ParamList gl;
    grads.collect("att", gl);
    return flatten(gl);
  };
  CHECK(grad_check(f, g, flatten(params)) < 1e-4);

  // Input gradient against a finite difference on X.
  AttentionTrace tr;
  attention_forward(att, x, &tr);
  auto grads = zeros_like(att);
  const auto dx = attention_backward(att, x, up, grads, tr);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    Tensor2 xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    const double num = (contract(attention_forward(att, xp)) -
                        contract(attention_forward(att, xm))) / (2 * eps);
    CHECK(std::abs(num - dx.data[i]) < 1e-7 * std::max(1.0, std::abs(num)));
  }
}

TEST_CASE("softmax values") {
  auto p = softmax_with_temperature(Vec{1.0, 1.0}, 0.1);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  const double e = std::exp(1.0L);
  p = softmax_with_temperature(Vec{2.0, 1.0}, 1.0);
  CHECK(std::abs(p[0] - e / (e + 1)) < 1e-15);
  CHECK(std::abs(p[1] - 1 / (e + 1)) < 1e-15);
  p = softmax_with_temperature(Vec{10.0, 0.0}, 0.01);
  CHECK(p[0] > 1 - 1e-12);
  CHECK_THROWS_AS(softmax_with_temperature(Vec{1.0}, 0.0), DomainError);
  CHECK_THROWS_AS(softmax_with_temperature(Vec{1.0}, -1.0), DomainError);
  CHECK_THROWS_AS(softmax_with_temperature(Vec{std::numeric_limits<double>::infinity()}, 1.0),
                  DomainError);
}

TEST_CASE("softmax is a distribution at extreme magnitudes") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    Vec v(1 + uniform_index(rng, 8));
    for (auto& x : v) x = (uniform01(rng) * 2 - 1) * 1e6;
    const auto p = softmax_with_temperature(v, 0.1);
    double s = 0;
    for (double q : p) {
      CHECK(q >= 0.0);
      s += q;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
    const auto vmax = std::max_element(v.begin(), v.end()) - v.begin();
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == vmax);
  }
  const auto p = softmax_with_temperature(Vec{0.3, 0.1, 0.2}, 1.0);
  CHECK(p[0] > p[2]);
  CHECK(p[2] > p[1]);
}

TEST_CASE("optimizer steps") {
  Vec p{1.0};
  Vec g{1.0};
  ParamList params{view_of("p", p)};
  ParamList grads{view_of("p", g)};
  Optimizer sgd({OptimizerKind::SGD, 0.1});
  sgd.step(params, grads);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-15));

  p = {1.0};
  Optimizer adam({OptimizerKind::Adam, 1e-3});
  adam.step(params, grads);
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  CHECK(std::abs((1.0 - p[0]) - 1e-3 / (1.0 + 1e-8)) < 1e-15);

  Vec zero{0.0};
  ParamList zgrads{view_of("p", zero)};
  adam.step(params, zgrads);
  CHECK(adam.steps_taken() == 2);
  // Zero gradient still moves Adam through its first moment; SGD stays put.
  Optimizer sgd2({OptimizerKind::SGD, 0.1});
  const double b2 = p[0];
  sgd2.step(params, zgrads);
  CHECK(p[0] == b2);
  CHECK(sgd2.steps_taken() == 1);

  Vec nan{std::numeric_limits<double>::quiet_NaN()};
  ParamList nan_grads{view_of("layer.weight", nan)};
  ParamList named{view_of("layer.weight", p)};
  const double keep = p[0];
  try {
    sgd.step(named, nan_grads);
    FAIL("expected NumericsError");
  } catch (const NumericsError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
  CHECK(p[0] == keep);
}

TEST_CASE("initialisation") {
  Rng a(3), b(3), c(4);
  const auto n1 = init_mlp({5, 7, 2}, Activation::Tanh, a);
  const auto n2 = init_mlp({5, 7, 2}, Activation::Tanh, b);
  const auto n3 = init_mlp({5, 7, 2}, Activation::Tanh, c);
  CHECK(n1 == n2);
  CHECK_FALSE(n1 == n3);
  for (const auto& l : n1.layers)
    for (double v : l.bias) CHECK(v == 0.0);
  CHECK(n1.input_dim() == 5);
  CHECK(n1.output_dim() == 2);

  Rng r(10);
  Tensor2 w(100, 100);
  xavier_uniform(w, r);
  const double bound = std::sqrt(6.0 / 200.0);
  double mean = 0, sq = 0;
  for (double v : w.data) {
    CHECK(std::abs(v) <= bound);
    mean += v;
    sq += v * v;
  }
  mean /= w.data.size();
  const double var = sq / w.data.size() - mean * mean;
  CHECK(std::abs(var / (bound * bound / 3.0) - 1.0) < 0.05);
}

TEST_CASE("param views") {
  Tensor2 t(2, 3);
  Vec v{1, 2};
  ParamList list{view_of("t", t), view_of("v", v)};
  CHECK(param_count(list) == 8);
  Vec flat{1, 2, 3, 4, 5, 6, 7, 8};
  assign(list, flat);
  CHECK(t(1, 2) == 6);
  CHECK(v[1] == 8);
  CHECK(flatten(list) == flat);
}
