#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tap/actions.hpp"
#include "tap/chain.hpp"
#include "tap/neural.hpp"
#include "tap/transition.hpp"

namespace tap {

enum class Pooling { Mean, AttentionThenMean };

/// Architecture of the encoder, transition model and reward head.
struct ArchConfig {
  std::size_t d = 32;               // latent width
  std::size_t d_emb = 16;           // token embedding width
  std::size_t hash_buckets = 4096;  // encoder token buckets
  Pooling pooling = Pooling::AttentionThenMean;
  std::size_t n_heads = 2;
  std::size_t encoder_hidden = 64;
  std::size_t transition_hidden = 64;
  std::size_t reward_hidden = 32;
  std::size_t kind_dim = 8;               // per op-kind embedding width
  std::size_t action_token_dim = 8;       // added/removed token embedding width
  std::size_t action_token_buckets = 512;
  Activation activation = Activation::Tanh;

  /// Width of embed(a): kind + added tokens + removed tokens + 6 numeric.
  std::size_t action_dim() const { return kind_dim + 2 * action_token_dim + 6; }
  /// Throws ConfigError on invalid dimensions.
  void validate() const;

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Segment rows of the encoder input. Chain tokens matched to a task word
/// (as multisets) are kept apart from unmatched ones, an exact-match signal
/// in the style of reading-comprehension encoders.
inline constexpr std::size_t kSegmentTask = 0;
inline constexpr std::size_t kSegmentStructure = 1;  // separator and step markers
inline constexpr std::size_t kSegmentUnmatched = 2;
inline constexpr std::size_t kSegmentMatched = 3;
inline constexpr std::size_t kNumSegments = 4;

struct EncoderParams {
  Tensor2 token_embedding;    // hash_buckets x d_emb
  Tensor2 segment_embedding;  // kNumSegments x d_emb
  std::optional<AttentionParams> attention;
  MlpParams projector;  // d_emb -> encoder_hidden -> d

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

struct TransitionParams {
  Tensor2 kind_embedding;   // kNumOpKinds x kind_dim
  Tensor2 token_embedding;  // action_token_buckets x action_token_dim
  MlpParams core;           // d + action_dim -> transition_hidden -> d

  friend bool operator==(const TransitionParams&, const TransitionParams&) = default;
};

struct RewardParams {
  MlpParams head;  // d -> reward_hidden -> 1, squashed by logistic

  friend bool operator==(const RewardParams&, const RewardParams&) = default;
};

struct WorldModel {
  ArchConfig arch;
  EncoderParams encoder;
  TransitionParams transition;
  RewardParams reward;

  /// Every parameter array in a fixed order (encoder, transition, reward).
  ParamList params();
  ParamList encoder_params();
  ParamList dynamics_params();  // transition + reward

  friend bool operator==(const WorldModel&, const WorldModel&) = default;
};

/// Deterministic given seed; Xavier-uniform weights, zero biases. Embedding
/// tables are lookups and use fan_in = 1.
WorldModel init_world_model(const ArchConfig& arch, std::uint64_t seed);
/// Same shapes, all zeros (gradient container).
WorldModel zeros_like(const WorldModel& model);

// --- encoder h_phi -------------------------------------------------------

inline constexpr std::string_view kSeparatorToken = "<sep>";
inline constexpr std::string_view kStepToken = "<step>";

/// Task tokens, the separator, then chain tokens with a step marker between
/// consecutive steps.
std::vector<Token> encoder_tokens(const MDPState& state);
std::size_t token_bucket(std::string_view token, std::size_t buckets);
/// Standard sinusoidal table value for (position, channel).
double positional_encoding(std::size_t position, std::size_t channel,
                           std::size_t width);

struct EncodeTrace {
  std::vector<std::size_t> buckets;
  std::vector<std::size_t> segments;
  Tensor2 input;  // embeddings + positions, L x d_emb
  AttentionTrace attention;
  Tensor2 mixed;  // after attention (== input for Mean pooling)
  Vec pooled;
  MlpTrace projector;
};

Vec encode(const WorldModel& model, const MDPState& state,
           EncodeTrace* trace = nullptr);
/// Accumulates encoder gradients for upstream dL/dz.
void encode_backward(const WorldModel& model, const EncodeTrace& trace,
                     std::span<const double> dz, WorldModel& grads);

// --- transition T_theta ---------------------------------------------------

/// Discrete-plus-numeric description of an action in the context of the
/// chain it is applied to.
struct ActionFeatures {
  OpKind kind = OpKind::NoOp;
  std::vector<std::size_t> added;    // action-token buckets of inserted tokens
  std::vector<std::size_t> removed;  // action-token buckets of removed tokens
  std::array<double, 6> numeric{};   // normalised indices, sizes, token occurrences
};

ActionFeatures featurize(const EditAction& action, const ReasoningChain& chain,
                         const ArchConfig& arch);
/// embed(a): kind row, mean added-token row, mean removed-token row, numeric.
Vec embed_action(const WorldModel& model, const ActionFeatures& features);

/// z' = z + core(concat(z, embed(a))), and z' = z for NoOp. `chain` is the chain the action is
/// applied to (supplies index normalisation and touched tokens).
Vec predict_transition(const WorldModel& model, std::span<const double> z,
                       const EditAction& action, const ReasoningChain& chain);
Vec predict_transition(const WorldModel& model, std::span<const double> z,
                       const ActionFeatures& features);

// --- reward head R_psi ----------------------------------------------------

double predict_reward(const WorldModel& model, std::span<const double> z);

// --- losses and training --------------------------------------------------

enum class RewardTarget { Absolute, Delta };

struct TrainConfig {
  double lambda_dyn = 1.0;
  double lambda_rew = 1.0;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;
  /// Treat h_phi(s') as a constant in the dynamics loss.
  bool target_stop_gradient = true;
  /// When false only transition and reward parameters are updated.
  bool train_encoder = true;
  /// Delta targets are mapped to [0, 1] as (delta + 1) / 2.
  RewardTarget reward_target = RewardTarget::Absolute;
  /// With absolute targets, also fit R(h(s)) to the quality of the source
  /// chain (reward - reward_delta); the reward term becomes the mean of the
  /// two squared errors. Start-of-episode chains are never a next state, so
  /// without this the head never sees them.
  bool reward_on_source = true;
  /// If set, a checkpoint is written here after every epoch.
  std::optional<std::filesystem::path> checkpoint_path;

  void validate() const;
};

struct LossBreakdown {
  double dynamics = 0.0;
  double reward = 0.0;
  double total = 0.0;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// Mean over the batch of ||h(s') - T(h(s), a)||^2.
double dynamics_loss(const WorldModel& model, std::span<const Transition> batch);
/// Mean over the batch of (R(h(s')) - target)^2, target per cfg.reward_target,
/// averaged with the source-state error when `on_source` applies.
double reward_loss(const WorldModel& model, std::span<const Transition> batch,
                   RewardTarget target = RewardTarget::Absolute,
                   bool on_source = true);
/// lambda_dyn * dynamics + lambda_rew * reward.
LossBreakdown total_loss(const WorldModel& model,
                         std::span<const Transition> batch,
                         const TrainConfig& cfg);

/// Loss plus its gradient with respect to every parameter of `model`.
/// With cfg.target_stop_gradient the h(s') target receives no dynamics
/// gradient. `frozen_targets`, if given, replaces h(s') in the dynamics term
/// (one vector per transition).
struct LossGrad {
  LossBreakdown loss;
  WorldModel grads;
};
LossGrad total_loss_with_grad(const WorldModel& model,
                              std::span<const Transition> batch,
                              const TrainConfig& cfg,
                              const std::vector<Vec>* frozen_targets = nullptr);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  LossBreakdown holdout;
  bool has_holdout = false;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;

  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;
};

struct TrainResult {
  WorldModel model;
  TrainingHistory history;
};

/// Shuffled minibatch training of the total loss. Starts from
/// init_world_model(arch, cfg.seed) unless `initial` is given. Throws
/// NumericsError (naming the last good checkpoint if any) on a non-finite
/// loss and ConfigError if the training split is smaller than one batch.
TrainResult train(std::span<const Transition> dataset, const ArchConfig& arch,
                  const TrainConfig& cfg, const WorldModel* initial = nullptr);

/// Deterministic holdout split used by train(): returns (train, holdout)
/// index lists.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double holdout_fraction, std::uint64_t seed);

// --- checkpoints ----------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 2;

/// Binary file: "TAPW", u32 version, u32 metadata length + UTF-8 JSON
/// (architecture plus `extra_metadata`), u32 section count, then per section
/// u32 name length, name, u64 rows, u64 cols, rows*cols f64, u32 CRC32 of the
/// data bytes. All integers and floats little-endian.
void save_checkpoint(const WorldModel& model, const std::filesystem::path& path,
                     const std::string& extra_metadata_json = "{}");
/// Throws VersionError on a version mismatch and ParseError (with byte
/// offset) on truncation, bad magic, CRC failure or shape mismatch.
WorldModel load_checkpoint(const std::filesystem::path& path);
/// Metadata block of a checkpoint, as JSON text.
std::string read_checkpoint_metadata(const std::filesystem::path& path);

}  // namespace tap
