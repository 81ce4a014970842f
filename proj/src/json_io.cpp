#include "tap/json_io.hpp"

#include <algorithm>

#include "tap/errors.hpp"

namespace tap {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string("missing field '") + key + "'", 0);
  }
  return j.at(key);
}

template <class T>
T get(const Json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("field '") + key + "': " + e.what(), 0);
  }
}

std::size_t get_index(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number_unsigned()) {
    throw ParseError(std::string("field '") + key + "' must be a non-negative integer", 0);
  }
  return v.get<std::size_t>();
}

Step step_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("step must be an array of tokens", 0);
  Step s;
  for (const auto& t : j) {
    if (!t.is_string()) throw ParseError("token must be a string", 0);
    s.push_back(t.get<std::string>());
  }
  return s;
}

const char* pooling_name(Pooling p) {
  return p == Pooling::Mean ? "mean" : "attention_then_mean";
}

const char* activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

}  // namespace

void reject_unknown_keys(const Json& j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view section) {
  if (!j.is_object()) {
    throw ConfigError(std::string(section) + ": expected an object");
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(section) + ": unknown key '" + key + "'");
    }
  }
}

Json chain_to_json(const ReasoningChain& chain) {
  Json j = Json::array();
  for (const auto& s : chain.steps) j.push_back(s);
  return j;
}

ReasoningChain chain_from_json(const Json& j) {
  if (!j.is_array()) throw ParseError("chain must be an array of steps", 0);
  ReasoningChain c;
  for (const auto& s : j) c.steps.push_back(step_from_json(s));
  return c;
}

Json task_to_json(const TaskInput& task) {
  Json j = {{"id", task.id}, {"text", task.text}};
  if (task.expected_answer) j["expected_answer"] = *task.expected_answer;
  return j;
}

TaskInput task_from_json(const Json& j) {
  TaskInput t;
  t.id = get<std::string>(j, "id");
  const Json& text = field(j, "text");
  // Task files may carry raw text; datasets store the token list.
  t.text = text.is_string() ? tokenize(text.get<std::string>()) : step_from_json(text);
  if (j.contains("expected_answer") && !j.at("expected_answer").is_null()) {
    t.expected_answer = get<std::string>(j, "expected_answer");
  }
  return t;
}

Json task_record_to_json(const TaskRecord& r) {
  Json j = task_to_json(r.input);
  j["initial_chain"] = chain_to_json(r.initial_chain);
  if (r.target) j["target_chain"] = chain_to_json(*r.target);
  return j;
}

TaskRecord task_record_from_json(const Json& j) {
  TaskRecord r;
  r.input = task_from_json(j);
  auto read_chain = [](const Json& v) {
    return v.is_string() ? parse_chain(v.get<std::string>()) : chain_from_json(v);
  };
  if (j.contains("initial_chain")) r.initial_chain = read_chain(j.at("initial_chain"));
  if (j.contains("target_chain") && !j.at("target_chain").is_null()) {
    r.target = read_chain(j.at("target_chain"));
  }
  return r;
}

Json action_to_json(const EditAction& action) {
  Json j = {{"scale", scale_name(scale_of(action))},
            {"op", kind_name(kind_of(action))}};
  std::visit(Overloaded{
                 [](const NoOpEdit&) {},
                 [&](const TokenAdd& a) {
                   j["step"] = a.step;
                   j["position"] = a.position;
                   j["token"] = a.token;
                 },
                 [&](const TokenDelete& a) {
                   j["step"] = a.step;
                   j["position"] = a.position;
                 },
                 [&](const TokenReplace& a) {
                   j["step"] = a.step;
                   j["position"] = a.position;
                   j["token"] = a.token;
                 },
                 [&](const StepReorder& a) {
                   j["from"] = a.from;
                   j["to"] = a.to;
                 },
                 [&](const StepSplit& a) {
                   j["step"] = a.step;
                   j["position"] = a.position;
                 },
                 [&](const StepMerge& a) { j["step"] = a.step; },
                 [&](const AddExample& a) {
                   j["fragment"] = chain_to_json(a.fragment);
                   j["position"] = a.position;
                 },
                 [&](const InstructionEdit& a) {
                   j["step"] = a.step;
                   j["replacement"] = a.replacement;
                 },
                 [&](const FormatChange& a) { j["template"] = a.template_id; },
             },
             action);
  return j;
}

EditAction action_from_json(const Json& j) {
  const auto op = get<std::string>(j, "op");
  if (op == "noop") return NoOpEdit{};
  if (op == "add") {
    return TokenAdd{get_index(j, "step"), get_index(j, "position"),
                    get<std::string>(j, "token")};
  }
  if (op == "delete") return TokenDelete{get_index(j, "step"), get_index(j, "position")};
  if (op == "replace") {
    return TokenReplace{get_index(j, "step"), get_index(j, "position"),
                        get<std::string>(j, "token")};
  }
  if (op == "reorder") return StepReorder{get_index(j, "from"), get_index(j, "to")};
  if (op == "split") return StepSplit{get_index(j, "step"), get_index(j, "position")};
  if (op == "merge") return StepMerge{get_index(j, "step")};
  if (op == "add_example") {
    return AddExample{chain_from_json(field(j, "fragment")), get_index(j, "position")};
  }
  if (op == "instruction_edit") {
    return InstructionEdit{get_index(j, "step"), step_from_json(field(j, "replacement"))};
  }
  if (op == "format_change") return FormatChange{get<std::string>(j, "template")};
  throw ParseError("unknown action op '" + op + "'", 0);
}

Json transition_to_json(const Transition& t) {
  return {{"task", task_to_json(t.state.task)},
          {"chain", chain_to_json(t.state.chain)},
          {"action", action_to_json(t.action)},
          {"next_chain", chain_to_json(t.next_chain)},
          {"reward", t.reward},
          {"reward_delta", t.reward_delta},
          {"meta",
           {{"seed", t.meta.seed},
            {"episode", t.meta.episode},
            {"step", t.meta.step},
            {"policy", t.meta.policy}}}};
}

Transition transition_from_json(const Json& j) {
  Transition t;
  t.state.task = task_from_json(field(j, "task"));
  t.state.chain = chain_from_json(field(j, "chain"));
  t.action = action_from_json(field(j, "action"));
  t.next_chain = chain_from_json(field(j, "next_chain"));
  t.reward = get<double>(j, "reward");
  t.reward_delta = get<double>(j, "reward_delta");
  if (j.contains("meta")) {
    const Json& m = j.at("meta");
    t.meta.seed = get<std::uint64_t>(m, "seed");
    t.meta.episode = get<std::uint64_t>(m, "episode");
    t.meta.step = get<std::uint64_t>(m, "step");
    t.meta.policy = get<std::string>(m, "policy");
  }
  return t;
}

Json arch_to_json(const ArchConfig& a) {
  return {{"d", a.d},
          {"d_emb", a.d_emb},
          {"hash_buckets", a.hash_buckets},
          {"pooling", pooling_name(a.pooling)},
          {"n_heads", a.n_heads},
          {"encoder_hidden", a.encoder_hidden},
          {"transition_hidden", a.transition_hidden},
          {"reward_hidden", a.reward_hidden},
          {"kind_dim", a.kind_dim},
          {"action_token_dim", a.action_token_dim},
          {"action_token_buckets", a.action_token_buckets},
          {"activation", activation_name(a.activation)}};
}

ArchConfig arch_from_json(const Json& j) {
  constexpr std::string_view section = "model";
  reject_unknown_keys(j,
                      {"d", "d_emb", "hash_buckets", "pooling", "n_heads",
                       "encoder_hidden", "transition_hidden", "reward_hidden",
                       "kind_dim", "action_token_dim", "action_token_buckets",
                       "activation"},
                      section);
  ArchConfig a;
  read_config_value(j, "d", a.d, section);
  read_config_value(j, "d_emb", a.d_emb, section);
  read_config_value(j, "hash_buckets", a.hash_buckets, section);
  read_config_value(j, "n_heads", a.n_heads, section);
  read_config_value(j, "encoder_hidden", a.encoder_hidden, section);
  read_config_value(j, "transition_hidden", a.transition_hidden, section);
  read_config_value(j, "reward_hidden", a.reward_hidden, section);
  read_config_value(j, "kind_dim", a.kind_dim, section);
  read_config_value(j, "action_token_dim", a.action_token_dim, section);
  read_config_value(j, "action_token_buckets", a.action_token_buckets, section);
  std::string pooling = pooling_name(a.pooling);
  read_config_value(j, "pooling", pooling, section);
  if (pooling == "mean") {
    a.pooling = Pooling::Mean;
  } else if (pooling == "attention_then_mean") {
    a.pooling = Pooling::AttentionThenMean;
  } else {
    throw ConfigError("model.pooling: unknown value '" + pooling + "'");
  }
  std::string act = activation_name(a.activation);
  read_config_value(j, "activation", act, section);
  if (act == "tanh") {
    a.activation = Activation::Tanh;
  } else if (act == "relu") {
    a.activation = Activation::ReLU;
  } else {
    throw ConfigError("model.activation: unknown value '" + act + "'");
  }
  a.validate();
  return a;
}

Json train_config_to_json(const TrainConfig& c) {
  Json j = {{"lambda_dyn", c.lambda_dyn},
            {"lambda_rew", c.lambda_rew},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"optimizer", c.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
            {"seed", c.seed},
            {"holdout_fraction", c.holdout_fraction},
            {"target_stop_gradient", c.target_stop_gradient},
            {"train_encoder", c.train_encoder},
            {"reward_target",
             c.reward_target == RewardTarget::Absolute ? "absolute" : "delta"},
            {"reward_on_source", c.reward_on_source}};
  if (c.checkpoint_path) j["checkpoint_path"] = c.checkpoint_path->string();
  return j;
}

TrainConfig train_config_from_json(const Json& j) {
  constexpr std::string_view section = "training";
  reject_unknown_keys(j,
                      {"lambda_dyn", "lambda_rew", "epochs", "batch_size",
                       "learning_rate", "optimizer", "seed", "holdout_fraction",
                       "target_stop_gradient", "train_encoder", "reward_target",
                       "reward_on_source", "checkpoint_path"},
                      section);
  TrainConfig c;
  read_config_value(j, "lambda_dyn", c.lambda_dyn, section);
  read_config_value(j, "lambda_rew", c.lambda_rew, section);
  read_config_value(j, "epochs", c.epochs, section);
  read_config_value(j, "batch_size", c.batch_size, section);
  read_config_value(j, "learning_rate", c.learning_rate, section);
  read_config_value(j, "seed", c.seed, section);
  read_config_value(j, "holdout_fraction", c.holdout_fraction, section);
  read_config_value(j, "target_stop_gradient", c.target_stop_gradient, section);
  read_config_value(j, "train_encoder", c.train_encoder, section);
  read_config_value(j, "reward_on_source", c.reward_on_source, section);
  std::string opt = "adam";
  read_config_value(j, "optimizer", opt, section);
  if (opt == "adam") {
    c.optimizer = OptimizerKind::Adam;
  } else if (opt == "sgd") {
    c.optimizer = OptimizerKind::SGD;
  } else {
    throw ConfigError("training.optimizer: unknown value '" + opt + "'");
  }
  std::string target = "absolute";
  read_config_value(j, "reward_target", target, section);
  if (target == "absolute") {
    c.reward_target = RewardTarget::Absolute;
  } else if (target == "delta") {
    c.reward_target = RewardTarget::Delta;
  } else {
    throw ConfigError("training.reward_target: unknown value '" + target + "'");
  }
  if (j.contains("checkpoint_path")) {
    std::string p;
    read_config_value(j, "checkpoint_path", p, section);
    c.checkpoint_path = p;
  }
  c.validate();
  return c;
}

Json history_to_json(const TrainingHistory& h) {
  Json epochs = Json::array();
  for (const auto& e : h.epochs) {
    Json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}};
    if (e.has_holdout) {
      row["holdout_total"] = e.holdout.total;
      row["holdout_dynamics"] = e.holdout.dynamics;
      row["holdout_reward"] = e.holdout.reward;
    }
    epochs.push_back(row);
  }
  return {{"train_size", h.train_size},
          {"holdout_size", h.holdout_size},
          {"epochs", epochs}};
}

TrainingHistory history_from_json(const Json& j) {
  TrainingHistory h;
  h.train_size = get<std::size_t>(j, "train_size");
  h.holdout_size = get<std::size_t>(j, "holdout_size");
  for (const auto& row : field(j, "epochs")) {
    EpochRecord e;
    e.epoch = get<std::size_t>(row, "epoch");
    e.train_loss = get<double>(row, "train_loss");
    if (row.contains("holdout_total")) {
      e.has_holdout = true;
      e.holdout.total = get<double>(row, "holdout_total");
      e.holdout.dynamics = get<double>(row, "holdout_dynamics");
      e.holdout.reward = get<double>(row, "holdout_reward");
    }
    h.epochs.push_back(e);
  }
  return h;
}

}  // namespace tap
