#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tap/actions.hpp"
#include "tap/chain.hpp"
#include "tap/errors.hpp"
#include "tap/transition.hpp"
#include "tap/world_model.hpp"

namespace tap {

using Json = nlohmann::json;

// Domain-type encoders. Decoders throw ParseError (position 0) on missing or
// mistyped fields; line-oriented callers rethrow with the line number.

Json chain_to_json(const ReasoningChain& chain);
ReasoningChain chain_from_json(const Json& j);

Json task_to_json(const TaskInput& task);
TaskInput task_from_json(const Json& j);

/// {"id", "text", "expected_answer"?, "initial_chain", "target_chain"?}; the
/// chains are arrays of token arrays.
Json task_record_to_json(const TaskRecord& record);
TaskRecord task_record_from_json(const Json& j);

/// {"scale": "token", "op": "add", "step": 0, "position": 1, "token": "x"}
Json action_to_json(const EditAction& action);
EditAction action_from_json(const Json& j);

Json transition_to_json(const Transition& t);
Transition transition_from_json(const Json& j);

// Config sections. Decoders start from defaults, override present keys and
// throw ConfigError naming the section on unknown keys or bad values.

Json arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(const Json& j);

Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

Json history_to_json(const TrainingHistory& history);
TrainingHistory history_from_json(const Json& j);

/// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void reject_unknown_keys(const Json& j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view section);

/// Reads `key` into `out` when present; a wrong type throws ConfigError
/// naming section.key.
template <class T>
void read_config_value(const Json& j, const char* key, T& out,
                       std::string_view section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(section) + "." + key + ": wrong type");
  }
}

}  // namespace tap
