#include "tap/world_model.hpp"

#include <unordered_map>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tap/errors.hpp"
#include "tap/random.hpp"

namespace tap {

void ArchConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model: " + what);
  };
  require(d >= 1, "d must be >= 1");
  require(d_emb >= 2, "d_emb must be >= 2");
  require(hash_buckets >= 2, "hash_buckets must be >= 2");
  require(n_heads >= 1 && d_emb % n_heads == 0,
          "d_emb must be divisible by n_heads");
  require(encoder_hidden >= 1 && transition_hidden >= 1 && reward_hidden >= 1,
          "hidden widths must be >= 1");
  require(kind_dim >= 1 && action_token_dim >= 1, "action widths must be >= 1");
  require(action_token_buckets >= 2, "action_token_buckets must be >= 2");
}

ParamList WorldModel::encoder_params() {
  ParamList out;
  out.push_back(view_of("encoder.token_embedding", encoder.token_embedding));
  out.push_back(view_of("encoder.segment_embedding", encoder.segment_embedding));
  if (encoder.attention) encoder.attention->collect("encoder.attention", out);
  encoder.projector.collect("encoder.projector", out);
  return out;
}

ParamList WorldModel::dynamics_params() {
  ParamList out;
  out.push_back(view_of("transition.kind_embedding", transition.kind_embedding));
  out.push_back(view_of("transition.token_embedding", transition.token_embedding));
  transition.core.collect("transition.core", out);
  reward.head.collect("reward.head", out);
  return out;
}

ParamList WorldModel::params() {
  ParamList out = encoder_params();
  ParamList rest = dynamics_params();
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

namespace {

void lookup_init(Tensor2& t, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(1 + t.cols));
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * a;
}

}  // namespace

WorldModel init_world_model(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng(mix_seed(seed, 0x77));
  WorldModel m;
  m.arch = arch;
  m.encoder.token_embedding = Tensor2(arch.hash_buckets, arch.d_emb);
  lookup_init(m.encoder.token_embedding, rng);
  m.encoder.segment_embedding = Tensor2(kNumSegments, arch.d_emb);
  lookup_init(m.encoder.segment_embedding, rng);
  if (arch.pooling == Pooling::AttentionThenMean) {
    m.encoder.attention = init_attention(arch.d_emb, arch.n_heads, rng);
  }
  m.encoder.projector =
      init_mlp({arch.d_emb, arch.encoder_hidden, arch.d}, arch.activation, rng);
  m.transition.kind_embedding = Tensor2(kNumOpKinds, arch.kind_dim);
  lookup_init(m.transition.kind_embedding, rng);
  m.transition.token_embedding =
      Tensor2(arch.action_token_buckets, arch.action_token_dim);
  lookup_init(m.transition.token_embedding, rng);
  m.transition.core = init_mlp(
      {arch.d + arch.action_dim(), arch.transition_hidden, arch.d},
      arch.activation, rng);
  m.reward.head = init_mlp({arch.d, arch.reward_hidden, 1}, arch.activation, rng);
  return m;
}

WorldModel zeros_like(const WorldModel& model) {
  WorldModel g;
  g.arch = model.arch;
  const auto& e = model.encoder;
  g.encoder.token_embedding = Tensor2(e.token_embedding.rows, e.token_embedding.cols);
  g.encoder.segment_embedding = Tensor2(e.segment_embedding.rows, e.segment_embedding.cols);
  if (e.attention) g.encoder.attention = zeros_like(*e.attention);
  g.encoder.projector = zeros_like(e.projector);
  const auto& t = model.transition;
  g.transition.kind_embedding = Tensor2(t.kind_embedding.rows, t.kind_embedding.cols);
  g.transition.token_embedding =
      Tensor2(t.token_embedding.rows, t.token_embedding.cols);
  g.transition.core = zeros_like(t.core);
  g.reward.head = zeros_like(model.reward.head);
  return g;
}

// --- encoder ----------------------------------------------------------------

std::vector<Token> encoder_tokens(const MDPState& state) {
  std::vector<Token> out = state.task.text;
  out.emplace_back(kSeparatorToken);
  for (std::size_t s = 0; s < state.chain.steps.size(); ++s) {
    if (s > 0) out.emplace_back(kStepToken);
    const auto& step = state.chain.steps[s];
    out.insert(out.end(), step.begin(), step.end());
  }
  return out;
}

std::size_t token_bucket(std::string_view token, std::size_t buckets) {
  return static_cast<std::size_t>(stable_hash(token.data(), token.size()) %
                                  buckets);
}

double positional_encoding(std::size_t position, std::size_t channel,
                           std::size_t width) {
  const double pair = static_cast<double>(channel / 2 * 2);
  const double angle = static_cast<double>(position) /
                       std::pow(10000.0, pair / static_cast<double>(width));
  return channel % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

Vec encode(const WorldModel& model, const MDPState& state, EncodeTrace* trace) {
  const ArchConfig& arch = model.arch;
  EncodeTrace local;
  EncodeTrace& tr = trace ? *trace : local;
  const auto tokens = encoder_tokens(state);
  const std::size_t L = tokens.size();
  const std::size_t w = arch.d_emb;
  const std::size_t task_len = state.task.text.size();
  // Chain tokens are matched against the task text as multisets, so a task
  // word repeated in the chain matches once and its extra copies do not.
  std::unordered_map<std::string_view, std::size_t> unmatched;
  for (const auto& t : state.task.text) ++unmatched[t];
  tr.buckets.resize(L);
  tr.segments.resize(L);
  tr.input = Tensor2(L, w);
  for (std::size_t i = 0; i < L; ++i) {
    tr.buckets[i] = token_bucket(tokens[i], arch.hash_buckets);
    if (i < task_len) {
      tr.segments[i] = kSegmentTask;
    } else if (tokens[i] == kSeparatorToken || tokens[i] == kStepToken) {
      tr.segments[i] = kSegmentStructure;
    } else if (auto it = unmatched.find(tokens[i]); it != unmatched.end() && it->second > 0) {
      --it->second;
      tr.segments[i] = kSegmentMatched;
    } else {
      tr.segments[i] = kSegmentUnmatched;
    }
    const auto row = model.encoder.token_embedding.row(tr.buckets[i]);
    const auto seg = model.encoder.segment_embedding.row(tr.segments[i]);
    for (std::size_t c = 0; c < w; ++c) {
      tr.input(i, c) = row[c] + seg[c] + positional_encoding(i, c, w);
    }
  }
  if (model.encoder.attention) {
    tr.mixed = attention_forward(*model.encoder.attention, tr.input, &tr.attention);
  } else {
    tr.mixed = tr.input;
  }
  tr.pooled.assign(w, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t c = 0; c < w; ++c) tr.pooled[c] += tr.mixed(i, c);
  }
  for (double& v : tr.pooled) v /= static_cast<double>(L);
  return mlp_forward(model.encoder.projector, tr.pooled, &tr.projector);
}

void encode_backward(const WorldModel& model, const EncodeTrace& tr,
                     std::span<const double> dz, WorldModel& grads) {
  const Vec dpooled = mlp_backward(model.encoder.projector, tr.pooled, dz,
                                   grads.encoder.projector, &tr.projector);
  const std::size_t L = tr.buckets.size();
  const std::size_t w = model.arch.d_emb;
  Tensor2 dmixed(L, w);
  const double inv = 1.0 / static_cast<double>(L);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t c = 0; c < w; ++c) dmixed(i, c) = dpooled[c] * inv;
  }
  Tensor2 dinput = model.encoder.attention
                       ? attention_backward(*model.encoder.attention, tr.input,
                                            dmixed, *grads.encoder.attention,
                                            tr.attention)
                       : std::move(dmixed);
  for (std::size_t i = 0; i < L; ++i) {
    auto g = grads.encoder.token_embedding.row(tr.buckets[i]);
    auto gs = grads.encoder.segment_embedding.row(tr.segments[i]);
    for (std::size_t c = 0; c < w; ++c) {
      g[c] += dinput(i, c);
      gs[c] += dinput(i, c);
    }
  }
}

// --- transition -------------------------------------------------------------

ActionFeatures featurize(const EditAction& action, const ReasoningChain& chain,
                         const ArchConfig& arch) {
  ActionFeatures f;
  f.kind = kind_of(action);
  const double n_steps = static_cast<double>(std::max<std::size_t>(chain.num_steps(), 1));
  const double total = static_cast<double>(chain.token_count());
  auto bucket = [&](const Token& t) { return token_bucket(t, arch.action_token_buckets); };
  auto step_len = [&](std::size_t s) {
    return s < chain.num_steps() ? chain.steps[s].size() : std::size_t{0};
  };
  auto token_at = [&](std::size_t s, std::size_t p) -> const Token* {
    if (s >= chain.num_steps() || p >= chain.steps[s].size()) return nullptr;
    return &chain.steps[s][p];
  };
  auto& num = f.numeric;

  switch (f.kind) {
    case OpKind::NoOp:
      break;
    case OpKind::Add: {
      const auto& a = std::get<TokenAdd>(action);
      f.added.push_back(bucket(a.token));
      num = {a.step / n_steps, a.position / (step_len(a.step) + 1.0),
             1.0 / (total + 1.0), 0.0, 0.0, 0.0};
      break;
    }
    case OpKind::Delete: {
      const auto& a = std::get<TokenDelete>(action);
      if (const Token* t = token_at(a.step, a.position)) f.removed.push_back(bucket(*t));
      num = {a.step / n_steps,
             a.position / static_cast<double>(std::max<std::size_t>(step_len(a.step), 1)),
             0.0, 1.0 / std::max(total, 1.0), 0.0, 0.0};
      break;
    }
    case OpKind::Replace: {
      const auto& a = std::get<TokenReplace>(action);
      f.added.push_back(bucket(a.token));
      if (const Token* t = token_at(a.step, a.position)) f.removed.push_back(bucket(*t));
      num = {a.step / n_steps,
             a.position / static_cast<double>(std::max<std::size_t>(step_len(a.step), 1)),
             1.0 / std::max(total, 1.0), 1.0 / std::max(total, 1.0), 0.0, 0.0};
      break;
    }
    case OpKind::Reorder: {
      const auto& a = std::get<StepReorder>(action);
      num = {a.from / n_steps, a.to / n_steps, 0.0, 0.0, 0.0, 0.0};
      break;
    }
    case OpKind::Split: {
      const auto& a = std::get<StepSplit>(action);
      num = {a.step / n_steps,
             a.position / static_cast<double>(std::max<std::size_t>(step_len(a.step), 1)),
             0.0, 0.0, 0.0, 0.0};
      break;
    }
    case OpKind::Merge: {
      const auto& a = std::get<StepMerge>(action);
      num = {a.step / n_steps, 0.0, 0.0, 0.0, 0.0, 0.0};
      break;
    }
    case OpKind::AddExample: {
      const auto& a = std::get<AddExample>(action);
      for (const auto& t : a.fragment.flatten()) f.added.push_back(bucket(t));
      const double k = static_cast<double>(f.added.size());
      num = {a.position / (n_steps + 1.0), 0.0, k / (total + k + 1.0), 0.0, 0.0, 0.0};
      break;
    }
    case OpKind::InstructionEdit: {
      const auto& a = std::get<InstructionEdit>(action);
      for (const auto& t : a.replacement) f.added.push_back(bucket(t));
      if (a.step < chain.num_steps()) {
        for (const auto& t : chain.steps[a.step]) f.removed.push_back(bucket(t));
      }
      num = {a.step / n_steps, 0.0,
             static_cast<double>(f.added.size()) / (total + 1.0),
             static_cast<double>(f.removed.size()) / std::max(total, 1.0), 0.0, 0.0};
      break;
    }
    case OpKind::FormatChange: {
      const auto& a = std::get<FormatChange>(action);
      f.added.push_back(bucket("<format:" + a.template_id + ">"));
      break;
    }
  }

  // How often the touched tokens already occur in the chain: an added token
  // that is already present and a removed token with remaining copies are
  // the cases a bag-of-tokens latent cannot tell apart on its own.
  auto occurrences = [&](const Token& t) {
    double n = 0.0;
    for (const auto& step : chain.steps) n += static_cast<double>(std::count(step.begin(), step.end(), t));
    return n;
  };
  auto saturate = [](double n) { return n / (n + 1.0); };
  auto added_tokens = [&]() -> std::vector<Token> {
    if (const auto* a = std::get_if<TokenAdd>(&action)) return {a->token};
    if (const auto* a = std::get_if<TokenReplace>(&action)) return {a->token};
    if (const auto* a = std::get_if<AddExample>(&action)) return a->fragment.flatten();
    if (const auto* a = std::get_if<InstructionEdit>(&action)) return a->replacement;
    return {};
  }();
  auto removed_tokens = [&]() -> std::vector<Token> {
    if (const auto* a = std::get_if<TokenDelete>(&action)) {
      if (const Token* t = token_at(a->step, a->position)) return {*t};
    }
    if (const auto* a = std::get_if<TokenReplace>(&action)) {
      if (const Token* t = token_at(a->step, a->position)) return {*t};
    }
    if (const auto* a = std::get_if<InstructionEdit>(&action)) {
      if (a->step < chain.num_steps()) return chain.steps[a->step];
    }
    return {};
  }();
  if (!added_tokens.empty()) {
    double acc = 0.0;
    for (const auto& t : added_tokens) acc += saturate(occurrences(t));
    num[4] = acc / static_cast<double>(added_tokens.size());
  }
  if (!removed_tokens.empty()) {
    double acc = 0.0;
    for (const auto& t : removed_tokens) acc += saturate(std::max(occurrences(t) - 1.0, 0.0));
    num[5] = acc / static_cast<double>(removed_tokens.size());
  }
  return f;
}

namespace {

void add_mean_rows(const Tensor2& table, const std::vector<std::size_t>& rows,
                   double* out) {
  if (rows.empty()) return;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    const auto row = table.row(r);
    for (std::size_t c = 0; c < table.cols; ++c) out[c] += row[c] * inv;
  }
}

void scatter_mean_rows(Tensor2& table, const std::vector<std::size_t>& rows,
                       const double* grad) {
  if (rows.empty()) return;
  const double inv = 1.0 / static_cast<double>(rows.size());
  for (std::size_t r : rows) {
    auto row = table.row(r);
    for (std::size_t c = 0; c < table.cols; ++c) row[c] += grad[c] * inv;
  }
}

}  // namespace

Vec embed_action(const WorldModel& model, const ActionFeatures& f) {
  const ArchConfig& arch = model.arch;
  Vec e(arch.action_dim(), 0.0);
  const auto kind_row = model.transition.kind_embedding.row(static_cast<std::size_t>(f.kind));
  std::copy(kind_row.begin(), kind_row.end(), e.begin());
  std::size_t off = arch.kind_dim;
  add_mean_rows(model.transition.token_embedding, f.added, e.data() + off);
  off += arch.action_token_dim;
  add_mean_rows(model.transition.token_embedding, f.removed, e.data() + off);
  off += arch.action_token_dim;
  std::copy(f.numeric.begin(), f.numeric.end(), e.begin() + static_cast<std::ptrdiff_t>(off));
  return e;
}

namespace {

Vec core_input(std::span<const double> z, const Vec& embedding) {
  Vec in(z.begin(), z.end());
  in.insert(in.end(), embedding.begin(), embedding.end());
  return in;
}

void check_latent(const WorldModel& model, std::span<const double> z,
                  const char* where) {
  if (z.size() != model.arch.d) {
    throw ShapeError(std::string(where) + ": latent length " +
                     std::to_string(z.size()) + " != d " +
                     std::to_string(model.arch.d));
  }
}

}  // namespace

Vec predict_transition(const WorldModel& model, std::span<const double> z,
                       const ActionFeatures& features) {
  check_latent(model, z, "predict_transition");
  // NoOp leaves the chain unchanged, so its latent transition is the identity.
  if (features.kind == OpKind::NoOp) return Vec(z.begin(), z.end());
  const Vec in = core_input(z, embed_action(model, features));
  Vec out = mlp_forward(model.transition.core, in);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += z[i];
  return out;
}

Vec predict_transition(const WorldModel& model, std::span<const double> z,
                       const EditAction& action, const ReasoningChain& chain) {
  return predict_transition(model, z, featurize(action, chain, model.arch));
}

double predict_reward(const WorldModel& model, std::span<const double> z) {
  check_latent(model, z, "predict_reward");
  return logistic(mlp_forward(model.reward.head, z)[0]);
}

// --- losses -------------------------------------------------------------------

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("training: " + what);
  };
  require(lambda_dyn >= 0.0 && lambda_rew >= 0.0, "loss weights must be >= 0");
  require(lambda_dyn > 0.0 || lambda_rew > 0.0, "loss weights cannot both be 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate),
          "learning_rate must be finite and >= 0");
  require(holdout_fraction >= 0.0 && holdout_fraction <= 0.5,
          "holdout_fraction must be in [0, 0.5]");
}

namespace {

double reward_target_value(const Transition& t, RewardTarget target) {
  return target == RewardTarget::Absolute ? t.reward : (t.reward_delta + 1.0) / 2.0;
}

/// Cached encodings for a frozen encoder.
struct FrozenEncodings {
  std::vector<Vec> z;
  std::vector<Vec> z_next;
};

struct SampleLoss {
  double dyn = 0.0;
  double rew = 0.0;
};

/// Loss of one transition; when `grads` is non-null, accumulates gradients
/// scaled by (lambda / batch).
SampleLoss sample_loss(const WorldModel& model, const Transition& t,
                       const TrainConfig& cfg, double inv_batch,
                       WorldModel* grads, const Vec* frozen_target,
                       const Vec* cached_z, const Vec* cached_zn) {
  const bool need_grad = grads != nullptr;
  const bool enc_grad = need_grad && cfg.train_encoder && !cached_z;
  EncodeTrace tr_s, tr_n;
  const Vec z = cached_z ? *cached_z : encode(model, t.state, enc_grad ? &tr_s : nullptr);
  const MDPState next = t.next_state();
  const Vec zn = cached_zn ? *cached_zn : encode(model, next, enc_grad ? &tr_n : nullptr);
  const Vec& target = frozen_target ? *frozen_target : zn;

  const ActionFeatures feats = featurize(t.action, t.state.chain, model.arch);
  const bool identity = feats.kind == OpKind::NoOp;
  const Vec emb = embed_action(model, feats);
  const Vec in = core_input(z, emb);
  MlpTrace core_tr;
  const std::size_t d = model.arch.d;
  Vec pred = identity ? Vec(d, 0.0)
                      : mlp_forward(model.transition.core, in, need_grad ? &core_tr : nullptr);
  Vec err(d);
  SampleLoss loss;
  for (std::size_t i = 0; i < d; ++i) {
    pred[i] += z[i];
    err[i] = pred[i] - target[i];
    loss.dyn += err[i] * err[i];
  }

  MlpTrace head_tr;
  const double logit = mlp_forward(model.reward.head, zn, need_grad ? &head_tr : nullptr)[0];
  const double r = logistic(logit);
  const double y = reward_target_value(t, cfg.reward_target);
  loss.rew = (r - y) * (r - y);
  const bool source_term = cfg.reward_on_source && cfg.reward_target == RewardTarget::Absolute;
  MlpTrace src_tr;
  double r_src = 0.0, y_src = 0.0;
  if (source_term) {
    r_src = logistic(mlp_forward(model.reward.head, z, need_grad ? &src_tr : nullptr)[0]);
    y_src = t.reward - t.reward_delta;
    loss.rew = 0.5 * (loss.rew + (r_src - y_src) * (r_src - y_src));
  }
  if (!need_grad) return loss;

  const double wd = cfg.lambda_dyn * inv_batch;
  const double wr = cfg.lambda_rew * inv_batch;

  // Dynamics term.
  Vec dpred(d);
  for (std::size_t i = 0; i < d; ++i) dpred[i] = 2.0 * wd * err[i];
  Vec dz = dpred;
  if (!identity) {
    const Vec din = mlp_backward(model.transition.core, in, dpred,
                                 grads->transition.core, &core_tr);
    for (std::size_t i = 0; i < d; ++i) dz[i] += din[i];
    const double* demb = din.data() + d;
    auto krow = grads->transition.kind_embedding.row(static_cast<std::size_t>(feats.kind));
    for (std::size_t c = 0; c < model.arch.kind_dim; ++c) krow[c] += demb[c];
    scatter_mean_rows(grads->transition.token_embedding, feats.added,
                      demb + model.arch.kind_dim);
    scatter_mean_rows(grads->transition.token_embedding, feats.removed,
                      demb + model.arch.kind_dim + model.arch.action_token_dim);
  }

  // Reward term.
  const double rew_scale = source_term ? 0.5 : 1.0;
  if (source_term) {
    const double dsrc = rew_scale * wr * 2.0 * (r_src - y_src) * r_src * (1.0 - r_src);
    const Vec dz_src = mlp_backward(model.reward.head, z, Vec{dsrc}, grads->reward.head, &src_tr);
    for (std::size_t i = 0; i < d; ++i) dz[i] += dz_src[i];
  }
  const double dlogit = rew_scale * wr * 2.0 * (r - y) * r * (1.0 - r);
  const Vec dzn_rew = mlp_backward(model.reward.head, zn, Vec{dlogit},
                                   grads->reward.head, &head_tr);
  if (enc_grad) {
    Vec dzn = dzn_rew;
    if (!cfg.target_stop_gradient && !frozen_target) {
      for (std::size_t i = 0; i < d; ++i) dzn[i] -= dpred[i];
    }
    encode_backward(model, tr_s, dz, *grads);
    encode_backward(model, tr_n, dzn, *grads);
  }
  return loss;
}

LossBreakdown batch_loss(const WorldModel& model,
                         std::span<const Transition* const> batch,
                         const TrainConfig& cfg, WorldModel* grads,
                         const std::vector<Vec>* frozen_targets,
                         const FrozenEncodings* cache,
                         std::span<const std::size_t> cache_index) {
  if (batch.empty()) throw DomainError("loss: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Vec* ft = frozen_targets ? &(*frozen_targets)[i] : nullptr;
    const Vec* cz = cache ? &cache->z[cache_index[i]] : nullptr;
    const Vec* czn = cache ? &cache->z_next[cache_index[i]] : nullptr;
    const SampleLoss s = sample_loss(model, *batch[i], cfg, inv, grads, ft, cz, czn);
    out.dynamics += s.dyn;
    out.reward += s.rew;
  }
  out.dynamics *= inv;
  out.reward *= inv;
  out.total = cfg.lambda_dyn * out.dynamics + cfg.lambda_rew * out.reward;
  return out;
}

std::vector<const Transition*> pointers(std::span<const Transition> batch) {
  std::vector<const Transition*> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(&t);
  return out;
}

}  // namespace

double dynamics_loss(const WorldModel& model, std::span<const Transition> batch) {
  TrainConfig cfg;
  return batch_loss(model, pointers(batch), cfg, nullptr, nullptr, nullptr, {})
      .dynamics;
}

double reward_loss(const WorldModel& model, std::span<const Transition> batch,
                   RewardTarget target, bool on_source) {
  TrainConfig cfg;
  cfg.reward_target = target;
  cfg.reward_on_source = on_source;
  return batch_loss(model, pointers(batch), cfg, nullptr, nullptr, nullptr, {})
      .reward;
}

LossBreakdown total_loss(const WorldModel& model,
                         std::span<const Transition> batch,
                         const TrainConfig& cfg) {
  return batch_loss(model, pointers(batch), cfg, nullptr, nullptr, nullptr, {});
}

LossGrad total_loss_with_grad(const WorldModel& model,
                              std::span<const Transition> batch,
                              const TrainConfig& cfg,
                              const std::vector<Vec>* frozen_targets) {
  if (frozen_targets && frozen_targets->size() != batch.size()) {
    throw ShapeError("total_loss_with_grad: one frozen target per transition");
  }
  LossGrad out{{}, zeros_like(model)};
  out.loss = batch_loss(model, pointers(batch), cfg, &out.grads, frozen_targets,
                        nullptr, {});
  return out;
}

// --- training -----------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double holdout_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, 0x5711));
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
  const auto n_hold = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(n)));
  std::vector<std::size_t> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
  return {rest, hold};
}

TrainResult train(std::span<const Transition> dataset, const ArchConfig& arch,
                  const TrainConfig& cfg, const WorldModel* initial) {
  cfg.validate();
  TrainResult result{initial ? *initial : init_world_model(arch, cfg.seed), {}};
  WorldModel& model = result.model;
  if (initial && !(initial->arch == arch)) {
    throw ConfigError("train: initial model architecture differs from config");
  }
  auto [train_idx, hold_idx] = split_indices(dataset.size(), cfg.holdout_fraction, cfg.seed);
  if (train_idx.size() < cfg.batch_size) {
    throw ConfigError("train: " + std::to_string(train_idx.size()) +
                      " training transitions after holdout, batch_size is " +
                      std::to_string(cfg.batch_size));
  }
  result.history.train_size = train_idx.size();
  result.history.holdout_size = hold_idx.size();

  std::optional<FrozenEncodings> cache;
  if (!cfg.train_encoder) {
    cache.emplace();
    cache->z.reserve(dataset.size());
    cache->z_next.reserve(dataset.size());
    for (const auto& t : dataset) {
      cache->z.push_back(encode(model, t.state));
      cache->z_next.push_back(encode(model, t.next_state()));
    }
  }
  const FrozenEncodings* cache_ptr = cache ? &*cache : nullptr;

  Optimizer opt({cfg.optimizer, cfg.learning_rate});
  Rng rng(mix_seed(cfg.seed, 0xba7c4));
  WorldModel grads = zeros_like(model);
  ParamList params = cfg.train_encoder ? model.params() : model.dynamics_params();
  ParamList grad_views = cfg.train_encoder ? grads.params() : grads.dynamics_params();

  std::vector<const Transition*> batch;
  std::vector<std::size_t> batch_index;
  auto evaluate = [&](const std::vector<std::size_t>& idx) {
    std::vector<const Transition*> all;
    for (std::size_t i : idx) all.push_back(&dataset[i]);
    return batch_loss(model, all, cfg, nullptr, nullptr, cache_ptr, idx);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i) {
      std::swap(train_idx[i - 1], train_idx[uniform_index(rng, i)]);
    }
    double weighted = 0.0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch_size);
      batch.clear();
      batch_index.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&dataset[train_idx[i]]);
        batch_index.push_back(train_idx[i]);
      }
      for (auto& g : grad_views) std::fill(g.values.begin(), g.values.end(), 0.0);
      const LossBreakdown loss =
          batch_loss(model, batch, cfg, &grads, nullptr, cache_ptr, batch_index);
      if (!std::isfinite(loss.total)) {
        std::string where = cfg.checkpoint_path && epoch > 1
                                ? "; last good checkpoint: " + cfg.checkpoint_path->string()
                                : "; no checkpoint written";
        throw NumericsError("train: non-finite loss at epoch " +
                            std::to_string(epoch) + where);
      }
      opt.step(params, grad_views);
      weighted += loss.total * static_cast<double>(end - start);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = weighted / static_cast<double>(train_idx.size());
    if (!hold_idx.empty()) {
      rec.holdout = evaluate(hold_idx);
      rec.has_holdout = true;
    }
    result.history.epochs.push_back(rec);
    if (cfg.checkpoint_path) save_checkpoint(model, *cfg.checkpoint_path);
  }
  return result;
}

}  // namespace tap
