#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tap {

using Token = std::string;
using Step = std::vector<Token>;

/// Ordered list of steps, each an ordered list of whitespace-free tokens.
/// The empty chain is the degenerate start state.
struct ReasoningChain {
  std::vector<Step> steps;

  std::size_t num_steps() const { return steps.size(); }
  std::size_t token_count() const;
  bool empty() const { return steps.empty(); }
  /// All tokens in order, step boundaries dropped.
  std::vector<Token> flatten() const;

  friend bool operator==(const ReasoningChain&, const ReasoningChain&) = default;
};

struct TaskInput {
  std::string id;
  std::vector<Token> text;
  std::optional<std::string> expected_answer;

  friend bool operator==(const TaskInput&, const TaskInput&) = default;
};

struct MDPState {
  TaskInput task;
  ReasoningChain chain;

  friend bool operator==(const MDPState&, const MDPState&) = default;
};

/// A task together with the chain an episode starts from and, for synthetic
/// environments, the hidden target chain.
struct TaskRecord {
  TaskInput input;
  ReasoningChain initial_chain;
  std::optional<ReasoningChain> target;

  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

inline constexpr std::string_view kDefaultDelimiter = "\n";

/// Splits on ASCII whitespace, dropping empty pieces.
std::vector<Token> tokenize(std::string_view text);

/// Splits `text` into steps on `delimiter`, whitespace-tokenizes each step and
/// drops steps with no tokens. Throws DomainError on an empty delimiter.
ReasoningChain parse_chain(std::string_view text,
                           std::string_view delimiter = kDefaultDelimiter);

/// Joins tokens with a single space and steps with `delimiter`. Throws
/// InvalidTokenError if a token contains the delimiter.
std::string render_chain(const ReasoningChain& chain,
                         std::string_view delimiter = kDefaultDelimiter);

/// True if `token` is non-empty and contains no whitespace.
bool is_valid_token(std::string_view token);

}  // namespace tap
