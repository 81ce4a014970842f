#include "tap/transition.hpp"

#include <cmath>

#include "tap/errors.hpp"

namespace tap {

std::string check_transition(const Transition& t) {
  if (!(t.reward >= 0.0 && t.reward <= 1.0)) {
    return "reward " + std::to_string(t.reward) + " outside [0, 1]";
  }
  if (!(t.reward_delta >= -1.0 && t.reward_delta <= 1.0)) {
    return "reward_delta " + std::to_string(t.reward_delta) + " outside [-1, 1]";
  }
  try {
    if (!(apply_edit(t.state.chain, t.action) == t.next_chain)) {
      return "next_chain differs from apply_edit(chain, " + describe(t.action) + ")";
    }
  } catch (const Error& e) {
    return std::string("action does not apply: ") + e.what();
  }
  return {};
}

}  // namespace tap
