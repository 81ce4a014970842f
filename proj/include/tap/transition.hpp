#pragma once

#include <cstdint>
#include <string>

#include "tap/actions.hpp"
#include "tap/chain.hpp"

namespace tap {

/// Where a transition came from.
struct TransitionMeta {
  std::uint64_t seed = 0;
  std::uint64_t episode = 0;
  std::uint64_t step = 0;
  std::string policy;

  friend bool operator==(const TransitionMeta&, const TransitionMeta&) = default;
};

/// One (s, a, s', r) row. `reward` is the absolute quality of next_chain;
/// `reward_delta` is reward minus the quality of state.chain.
struct Transition {
  MDPState state;
  EditAction action;
  ReasoningChain next_chain;
  double reward = 0.0;
  double reward_delta = 0.0;
  TransitionMeta meta;

  MDPState next_state() const { return {state.task, next_chain}; }

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Empty string if `t` satisfies the structural invariants (next_chain is
/// apply_edit(state.chain, action), reward in [0, 1], reward_delta in
/// [-1, 1]); otherwise a description of the first violation.
std::string check_transition(const Transition& t);

}  // namespace tap
