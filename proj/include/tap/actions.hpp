#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tap/chain.hpp"
#include "tap/random.hpp"

namespace tap {

enum class Scale { Token, Step, Structure, NoOp };

/// Operation kinds across all scales. The numeric value indexes the learned
/// action-kind embedding, so the order is part of the checkpoint format.
enum class OpKind {
  NoOp = 0,
  Add,
  Delete,
  Replace,
  Reorder,
  Split,
  Merge,
  AddExample,
  InstructionEdit,
  FormatChange,
};
inline constexpr std::size_t kNumOpKinds = 10;

struct NoOpEdit {
  friend bool operator==(const NoOpEdit&, const NoOpEdit&) = default;
};

/// Inserts `token` before `position` in step `step`. On the empty chain,
/// Add(0, 0, t) creates the first step.
struct TokenAdd {
  std::size_t step = 0;
  std::size_t position = 0;
  Token token;
  friend bool operator==(const TokenAdd&, const TokenAdd&) = default;
};

/// Removes one token; a step left empty is removed.
struct TokenDelete {
  std::size_t step = 0;
  std::size_t position = 0;
  friend bool operator==(const TokenDelete&, const TokenDelete&) = default;
};

struct TokenReplace {
  std::size_t step = 0;
  std::size_t position = 0;
  Token token;
  friend bool operator==(const TokenReplace&, const TokenReplace&) = default;
};

/// Moves step `from` so that it ends up at index `to`.
struct StepReorder {
  std::size_t from = 0;
  std::size_t to = 0;
  friend bool operator==(const StepReorder&, const StepReorder&) = default;
};

/// Cuts a step into [0, position) and [position, len).
struct StepSplit {
  std::size_t step = 0;
  std::size_t position = 0;
  friend bool operator==(const StepSplit&, const StepSplit&) = default;
};

/// Concatenates step `step` with step `step + 1`.
struct StepMerge {
  std::size_t step = 0;
  friend bool operator==(const StepMerge&, const StepMerge&) = default;
};

/// Inserts the fragment's steps before step index `position`.
struct AddExample {
  ReasoningChain fragment;
  std::size_t position = 0;
  friend bool operator==(const AddExample&, const AddExample&) = default;
};

/// Replaces one whole step.
struct InstructionEdit {
  std::size_t step = 0;
  Step replacement;
  friend bool operator==(const InstructionEdit&, const InstructionEdit&) = default;
};

/// Rewrites every step through a named template (see format_templates()).
struct FormatChange {
  std::string template_id;
  friend bool operator==(const FormatChange&, const FormatChange&) = default;
};

using EditAction =
    std::variant<NoOpEdit, TokenAdd, TokenDelete, TokenReplace, StepReorder,
                 StepSplit, StepMerge, AddExample, InstructionEdit, FormatChange>;

Scale scale_of(const EditAction& action);
OpKind kind_of(const EditAction& action);
std::string_view scale_name(Scale scale);
std::string_view kind_name(OpKind kind);
/// Compact human-readable form, e.g. "token/add(0,2,foo)".
std::string describe(const EditAction& action);

/// Template ids understood by FormatChange:
///   "identity"  leaves every step unchanged;
///   "numbered"  step k (1-based) becomes ["Step", "k:", tokens...];
///   "bullet"    every step becomes ["-", tokens...].
/// "numbered" and "bullet" first strip any existing numbered or bullet prefix,
/// so switching between them does not stack prefixes.
const std::vector<std::string>& format_templates();
bool is_known_template(std::string_view id);

/// Pure: returns the edited chain. Throws BoundsError (message names scale,
/// op, index and limit), DegenerateSplitError, InvalidTokenError, or
/// DomainError for an unknown template.
ReasoningChain apply_edit(const ReasoningChain& chain, const EditAction& action);

/// Content available to structure-level actions plus enumeration limits.
struct EnumConfig {
  std::size_t max_enumeration = 100000;
  std::size_t max_tokens = 4096;
  std::vector<ReasoningChain> example_fragments;
  std::vector<Step> instruction_steps;
  std::vector<std::string> templates = format_templates();
};

/// Every legal action for `chain`: NoOp first, then token, step and structure
/// actions ordered by op kind, indices and vocabulary order. Throws
/// CapacityError if the count exceeds cfg.max_enumeration.
std::vector<EditAction> enumerate_actions(const ReasoningChain& chain,
                                          const std::vector<Token>& vocab,
                                          const EnumConfig& cfg = {});

/// Number of legal instantiations per op kind (NoOp counts as 1).
std::array<std::size_t, kNumOpKinds> legal_action_counts(
    const ReasoningChain& chain, const std::vector<Token>& vocab,
    const EnumConfig& cfg = {});

struct ScaleWeights {
  double token = 0.5;
  double step = 0.3;
  double structure = 0.2;
};

/// One draw of the two-level sampler: a scale by `weights` (renormalised over
/// scales that have a legal action), then an op kind uniformly among the
/// legal kinds of that scale, then an instantiation uniformly. Returns NoOp
/// if no scale has a legal action.
EditAction sample_action(const ReasoningChain& chain,
                         const std::vector<Token>& vocab,
                         const ScaleWeights& weights, Rng& rng,
                         const EnumConfig& cfg = {});

/// `k` candidates; the first is always NoOp, the rest are sample_action draws.
/// Duplicates are allowed.
std::vector<EditAction> sample_candidates(const ReasoningChain& chain,
                                          std::size_t k,
                                          const std::vector<Token>& vocab,
                                          const ScaleWeights& weights, Rng& rng,
                                          const EnumConfig& cfg = {});

}  // namespace tap
