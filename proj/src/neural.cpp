#include "tap/neural.hpp"

#include <algorithm>
#include <cmath>

#include "tap/errors.hpp"

namespace tap {
namespace {

double activate(Activation act, double x) {
  return act == Activation::Tanh ? std::tanh(x) : (x > 0.0 ? x : 0.0);
}

/// Derivative expressed through the pre-activation value.
double activate_grad(Activation act, double pre) {
  if (act == Activation::Tanh) {
    const double t = std::tanh(pre);
    return 1.0 - t * t;
  }
  return pre > 0.0 ? 1.0 : 0.0;
}

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

ParamView view_of(std::string name, Tensor2& t) {
  return {std::move(name), t.rows, t.cols, std::span<double>(t.data)};
}

ParamView view_of(std::string name, Vec& v) {
  return {std::move(name), v.size(), 1, std::span<double>(v)};
}

std::size_t param_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.values.size();
  return n;
}

Vec flatten(const ParamList& params) {
  Vec out;
  out.reserve(param_count(params));
  for (const auto& p : params) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

void assign(const ParamList& params, std::span<const double> flat) {
  check_shape(flat.size() == param_count(params), "assign: size mismatch");
  std::size_t off = 0;
  for (const auto& p : params) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.values.size(),
                p.values.begin());
    off += p.values.size();
  }
}

std::size_t MlpParams::input_dim() const {
  return layers.empty() ? 0 : layers.front().weight.cols;
}

std::size_t MlpParams::output_dim() const {
  return layers.empty() ? 0 : layers.back().weight.rows;
}

void MlpParams::collect(const std::string& prefix, ParamList& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + ".layer" + std::to_string(i);
    out.push_back(view_of(base + ".weight", layers[i].weight));
    out.push_back(view_of(base + ".bias", layers[i].bias));
  }
}

Vec mlp_forward(const MlpParams& params, std::span<const double> input,
                MlpTrace* trace) {
  check_shape(!params.layers.empty(), "mlp_forward: no layers");
  check_shape(input.size() == params.input_dim(),
              "mlp_forward: input length " + std::to_string(input.size()) +
                  " != " + std::to_string(params.input_dim()));
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
  }
  Vec x(input.begin(), input.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    check_shape(layer.weight.cols == x.size(), "mlp_forward: layer " +
                                                   std::to_string(l) +
                                                   " does not chain");
    Vec y(layer.weight.rows);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      const double* w = &layer.weight.data[r * layer.weight.cols];
      double acc = layer.bias[r];
      for (std::size_t c = 0; c < x.size(); ++c) acc += w[c] * x[c];
      y[r] = acc;
    }
    if (trace) {
      trace->inputs.push_back(x);
      trace->pre.push_back(y);
    }
    if (l + 1 < params.layers.size()) {
      for (double& v : y) v = activate(params.activation, v);
    }
    x = std::move(y);
  }
  return x;
}

Vec mlp_backward(const MlpParams& params, std::span<const double> input,
                 std::span<const double> upstream, MlpParams& grads,
                 const MlpTrace* trace) {
  MlpTrace local;
  if (!trace) {
    mlp_forward(params, input, &local);
    trace = &local;
  }
  check_shape(upstream.size() == params.output_dim(),
              "mlp_backward: upstream length mismatch");
  check_shape(grads.layers.size() == params.layers.size(),
              "mlp_backward: gradient container shape mismatch");
  Vec delta(upstream.begin(), upstream.end());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& g = grads.layers[l];
    if (l + 1 < params.layers.size()) {
      const Vec& pre = trace->pre[l];
      for (std::size_t r = 0; r < delta.size(); ++r) {
        delta[r] *= activate_grad(params.activation, pre[r]);
      }
    }
    const Vec& x = trace->inputs[l];
    Vec dx(layer.weight.cols, 0.0);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      const double d = delta[r];
      g.bias[r] += d;
      if (d == 0.0) continue;
      const double* w = &layer.weight.data[r * layer.weight.cols];
      double* gw = &g.weight.data[r * layer.weight.cols];
      for (std::size_t c = 0; c < layer.weight.cols; ++c) {
        gw[c] += d * x[c];
        dx[c] += d * w[c];
      }
    }
    delta = std::move(dx);
  }
  return delta;
}

MlpParams zeros_like(const MlpParams& params) {
  MlpParams out;
  out.activation = params.activation;
  for (const auto& l : params.layers) {
    out.layers.push_back({Tensor2(l.weight.rows, l.weight.cols),
                          Vec(l.bias.size(), 0.0)});
  }
  return out;
}

void xavier_uniform(Tensor2& t, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * a;
}

MlpParams init_mlp(const std::vector<std::size_t>& dims, Activation act,
                   Rng& rng) {
  if (dims.size() < 2) throw ShapeError("init_mlp: need at least two dims");
  MlpParams out;
  out.activation = act;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer layer{Tensor2(dims[i + 1], dims[i]), Vec(dims[i + 1], 0.0)};
    xavier_uniform(layer.weight, rng);
    out.layers.push_back(std::move(layer));
  }
  return out;
}

void AttentionParams::collect(const std::string& prefix, ParamList& out) {
  out.push_back(view_of(prefix + ".wq", wq));
  out.push_back(view_of(prefix + ".wk", wk));
  out.push_back(view_of(prefix + ".wv", wv));
  out.push_back(view_of(prefix + ".wo", wo));
}

AttentionParams init_attention(std::size_t dim, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || dim % n_heads != 0) {
    throw ShapeError("init_attention: dim " + std::to_string(dim) +
                     " not divisible by n_heads " + std::to_string(n_heads));
  }
  AttentionParams p{n_heads, Tensor2(dim, dim), Tensor2(dim, dim),
                    Tensor2(dim, dim), Tensor2(dim, dim)};
  for (Tensor2* t : {&p.wq, &p.wk, &p.wv, &p.wo}) xavier_uniform(*t, rng);
  return p;
}

AttentionParams zeros_like(const AttentionParams& params) {
  const std::size_t d = params.wq.rows;
  return {params.n_heads, Tensor2(d, d), Tensor2(d, d), Tensor2(d, d),
          Tensor2(d, d)};
}

namespace {

/// out = x W^T for x (L x d_in), W (d_out x d_in).
Tensor2 matmul_t(const Tensor2& x, const Tensor2& w) {
  Tensor2 out(x.rows, w.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* xi = &x.data[i * x.cols];
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double* wo = &w.data[o * w.cols];
      double acc = 0.0;
      for (std::size_t c = 0; c < x.cols; ++c) acc += xi[c] * wo[c];
      out(i, o) = acc;
    }
  }
  return out;
}

/// Backward of out = x W^T: gW += dout^T x, returns dx = dout W.
Tensor2 matmul_t_backward(const Tensor2& x, const Tensor2& w,
                          const Tensor2& dout, Tensor2& gw) {
  Tensor2 dx(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double* xi = &x.data[i * x.cols];
    double* dxi = &dx.data[i * x.cols];
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double d = dout(i, o);
      if (d == 0.0) continue;
      const double* wo = &w.data[o * w.cols];
      double* go = &gw.data[o * w.cols];
      for (std::size_t c = 0; c < x.cols; ++c) {
        go[c] += d * xi[c];
        dxi[c] += d * wo[c];
      }
    }
  }
  return dx;
}

}  // namespace

Tensor2 attention_forward(const AttentionParams& params, const Tensor2& x,
                          AttentionTrace* trace) {
  const std::size_t L = x.rows;
  const std::size_t d = x.cols;
  check_shape(params.wq.rows == d && params.wq.cols == d,
              "attention_forward: width mismatch");
  const std::size_t dh = d / params.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionTrace local;
  AttentionTrace& tr = trace ? *trace : local;
  tr.q = matmul_t(x, params.wq);
  tr.k = matmul_t(x, params.wk);
  tr.v = matmul_t(x, params.wv);
  tr.heads = Tensor2(L, d);
  tr.weights.assign(params.n_heads, Tensor2(L, L));

  for (std::size_t h = 0; h < params.n_heads; ++h) {
    const std::size_t off = h * dh;
    Tensor2& a = tr.weights[h];
    for (std::size_t i = 0; i < L; ++i) {
      double mx = -INFINITY;
      for (std::size_t j = 0; j < L; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += tr.q(i, off + c) * tr.k(j, off + c);
        a(i, j) = s * scale;
        mx = std::max(mx, a(i, j));
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        a(i, j) = std::exp(a(i, j) - mx);
        sum += a(i, j);
      }
      for (std::size_t j = 0; j < L; ++j) a(i, j) /= sum;
      for (std::size_t j = 0; j < L; ++j) {
        const double w = a(i, j);
        for (std::size_t c = 0; c < dh; ++c) tr.heads(i, off + c) += w * tr.v(j, off + c);
      }
    }
  }
  Tensor2 y = matmul_t(tr.heads, params.wo);
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += x.data[i];
  return y;
}

Tensor2 attention_backward(const AttentionParams& params, const Tensor2& x,
                           const Tensor2& upstream, AttentionParams& grads,
                           const AttentionTrace& tr) {
  const std::size_t L = x.rows;
  const std::size_t d = x.cols;
  const std::size_t dh = d / params.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor2 dheads = matmul_t_backward(tr.heads, params.wo, upstream, grads.wo);
  Tensor2 dq(L, d), dk(L, d), dv(L, d);
  Vec da(L);
  for (std::size_t h = 0; h < params.n_heads; ++h) {
    const std::size_t off = h * dh;
    const Tensor2& a = tr.weights[h];
    for (std::size_t i = 0; i < L; ++i) {
      // dA_ij = dH_i . V_j ; dV_j += A_ij dH_i
      double dot = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) {
          s += dheads(i, off + c) * tr.v(j, off + c);
          dv(j, off + c) += a(i, j) * dheads(i, off + c);
        }
        da[j] = s;
        dot += s * a(i, j);
      }
      for (std::size_t j = 0; j < L; ++j) {
        const double ds = a(i, j) * (da[j] - dot) * scale;
        if (ds == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) {
          dq(i, off + c) += ds * tr.k(j, off + c);
          dk(j, off + c) += ds * tr.q(i, off + c);
        }
      }
    }
  }
  Tensor2 dx = upstream;
  for (auto [w, g, dout] :
       {std::tuple{&params.wq, &grads.wq, &dq}, std::tuple{&params.wk, &grads.wk, &dk},
        std::tuple{&params.wv, &grads.wv, &dv}}) {
    Tensor2 part = matmul_t_backward(x, *w, *dout, *g);
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += part.data[i];
  }
  return dx;
}

Vec softmax_with_temperature(std::span<const double> values, double tau) {
  if (!(tau > 0.0)) {
    throw DomainError("softmax_with_temperature: tau must be > 0, got " +
                      std::to_string(tau));
  }
  if (values.empty()) return {};
  double mx = -INFINITY;
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("softmax_with_temperature: non-finite input");
    mx = std::max(mx, v);
  }
  Vec p(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    p[i] = std::exp((values[i] - mx) / tau);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.learning_rate >= 0.0)) {
    throw DomainError("optimizer: learning rate must be non-negative");
  }
}

void Optimizer::step(const ParamList& params, const ParamList& grads) {
  check_shape(params.size() == grads.size(), "optimizer: param/grad count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    check_shape(params[i].values.size() == grads[i].values.size(),
                "optimizer: shape mismatch at " + params[i].name);
    for (double g : grads[i].values) {
      if (!std::isfinite(g)) {
        throw NumericsError("optimizer: non-finite gradient in " + params[i].name);
      }
    }
  }
  ++steps_;
  const double lr = cfg_.learning_rate;
  if (cfg_.kind == OptimizerKind::SGD) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].values;
      auto g = grads[i].values;
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr * g[j];
    }
    return;
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.values.size(), 0.0);
      v_.emplace_back(p.values.size(), 0.0);
    }
  }
  check_shape(m_.size() == params.size(), "optimizer: parameter set changed");
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    auto g = grads[i].values;
    Vec& m = m_[i];
    Vec& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  const std::function<Vec(std::span<const double>)>& analytic_grad,
                  std::span<const double> params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw DomainError("grad_check: eps must be in (0, 1e-2]");
  }
  const Vec analytic = analytic_grad(params);
  check_shape(analytic.size() == params.size(), "grad_check: gradient length mismatch");
  Vec p(params.begin(), params.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + eps;
    const double fp = f(p);
    p[i] = orig - eps;
    const double fm = f(p);
    p[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericsError("grad_check: non-finite objective at coordinate " +
                          std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace tap
