#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tap/random.hpp"

namespace tap {

using Vec = std::vector<double>;

/// Row-major dense matrix of doubles.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

/// Mutable view of one named parameter array, used by optimizers,
/// checkpoints and gradient checks.
struct ParamView {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<double> values;
};
using ParamList = std::vector<ParamView>;

ParamView view_of(std::string name, Tensor2& t);
ParamView view_of(std::string name, Vec& v);
/// Total scalar count across views.
std::size_t param_count(const ParamList& params);
/// Concatenation of all values, in list order.
Vec flatten(const ParamList& params);
void assign(const ParamList& params, std::span<const double> flat);

enum class Activation { Tanh, ReLU };

struct DenseLayer {
  Tensor2 weight;  // out x in
  Vec bias;        // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Hidden layers apply `activation`; the final layer is linear.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::Tanh;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void collect(const std::string& prefix, ParamList& out);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Pre- and post-activation values of every layer, kept for the backward pass.
struct MlpTrace {
  std::vector<Vec> inputs;  // input to each layer
  std::vector<Vec> pre;     // pre-activation of each layer
};

Vec mlp_forward(const MlpParams& params, std::span<const double> input,
                MlpTrace* trace = nullptr);

/// Reverse-mode pass. Accumulates dL/dparams into `grads` (same shapes as
/// `params`) and returns dL/dinput. Recomputes the forward pass when `trace`
/// is null.
Vec mlp_backward(const MlpParams& params, std::span<const double> input,
                 std::span<const double> upstream, MlpParams& grads,
                 const MlpTrace* trace = nullptr);

/// Same architecture, all values zero.
MlpParams zeros_like(const MlpParams& params);

/// Xavier-uniform weights, zero biases. `dims` = {in, hidden..., out}.
MlpParams init_mlp(const std::vector<std::size_t>& dims, Activation act,
                   Rng& rng);
/// Fills with uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void xavier_uniform(Tensor2& t, Rng& rng);

/// Single multi-head self-attention block with a residual connection:
/// Y = X + concat_h(softmax(Q_h K_h^T / sqrt(d_h)) V_h) Wo^T, where
/// Q = X Wq^T etc. X is L x d.
struct AttentionParams {
  std::size_t n_heads = 1;
  Tensor2 wq, wk, wv, wo;  // d x d each

  void collect(const std::string& prefix, ParamList& out);
  friend bool operator==(const AttentionParams&, const AttentionParams&) = default;
};

struct AttentionTrace {
  Tensor2 q, k, v, heads;       // L x d
  std::vector<Tensor2> weights;  // per head, L x L
};

AttentionParams init_attention(std::size_t dim, std::size_t n_heads, Rng& rng);
AttentionParams zeros_like(const AttentionParams& params);
Tensor2 attention_forward(const AttentionParams& params, const Tensor2& x,
                          AttentionTrace* trace = nullptr);
/// Accumulates parameter gradients; returns dL/dX.
Tensor2 attention_backward(const AttentionParams& params, const Tensor2& x,
                           const Tensor2& upstream, AttentionParams& grads,
                           const AttentionTrace& trace);

/// p_k = exp(v_k / tau) / sum_j exp(v_j / tau), max-subtracted. Throws
/// DomainError for tau <= 0 or non-finite values.
Vec softmax_with_temperature(std::span<const double> values, double tau);

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

enum class OptimizerKind { SGD, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers are created on the first step and shaped like the
/// parameters passed then.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  /// p <- p - lr * g (SGD) or the bias-corrected Adam update. Throws
  /// NumericsError naming the parameter if a gradient is non-finite, before
  /// anything is modified.
  void step(const ParamList& params, const ParamList& grads);

  std::uint64_t steps_taken() const { return steps_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::uint64_t steps_ = 0;
  std::vector<Vec> m_;
  std::vector<Vec> v_;
};

/// Worst per-coordinate relative error between `analytic_grad(p)` and the
/// central difference (f(p + eps e_i) - f(p - eps e_i)) / (2 eps), with
/// denominator max(|analytic|, |numeric|, 1e-8). Throws NumericsError if f
/// is non-finite and DomainError unless eps is in (0, 1e-2].
double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<Vec(std::span<const double>)>& analytic_grad,
                  std::span<const double> params, double eps = 1e-5);

}  // namespace tap
