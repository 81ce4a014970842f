#include "tap/actions.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "tap/errors.hpp"

namespace tap {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void out_of_bounds(std::string_view scale, std::string_view op,
                                std::string_view what, std::size_t index,
                                std::size_t limit) {
  throw BoundsError(std::string(scale) + "/" + std::string(op) + ": " +
                    std::string(what) + " " + std::to_string(index) +
                    " out of bounds (limit " + std::to_string(limit) + ")");
}

void check_token(std::string_view op, const Token& token) {
  if (!is_valid_token(token)) {
    throw InvalidTokenError("token/" + std::string(op) + ": invalid token '" +
                            token + "'");
  }
}

bool is_step_number(const Token& t) {
  if (t.size() < 2 || t.back() != ':') return false;
  return std::all_of(t.begin(), t.end() - 1, [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  });
}

Step strip_prefix(const Step& step) {
  if (step.size() >= 2 && step[0] == "Step" && is_step_number(step[1])) {
    return Step(step.begin() + 2, step.end());
  }
  if (!step.empty() && step[0] == "-") return Step(step.begin() + 1, step.end());
  return step;
}

ReasoningChain apply_template(const ReasoningChain& chain,
                              std::string_view id) {
  if (id == "identity") return chain;
  ReasoningChain out;
  out.steps.reserve(chain.steps.size());
  for (std::size_t s = 0; s < chain.steps.size(); ++s) {
    Step body = strip_prefix(chain.steps[s]);
    Step step;
    if (id == "numbered") {
      step = {"Step", std::to_string(s + 1) + ":"};
    } else if (id == "bullet") {
      step = {"-"};
    } else {
      throw DomainError("structure/format_change: unknown template '" +
                        std::string(id) + "'");
    }
    step.insert(step.end(), body.begin(), body.end());
    out.steps.push_back(std::move(step));
  }
  return out;
}

void remove_if_empty(ReasoningChain& chain, std::size_t step) {
  if (chain.steps[step].empty()) {
    chain.steps.erase(chain.steps.begin() + static_cast<std::ptrdiff_t>(step));
  }
}

}  // namespace

Scale scale_of(const EditAction& action) {
  switch (kind_of(action)) {
    case OpKind::NoOp:
      return Scale::NoOp;
    case OpKind::Add:
    case OpKind::Delete:
    case OpKind::Replace:
      return Scale::Token;
    case OpKind::Reorder:
    case OpKind::Split:
    case OpKind::Merge:
      return Scale::Step;
    default:
      return Scale::Structure;
  }
}

OpKind kind_of(const EditAction& action) {
  // Variant alternatives are declared in OpKind order.
  return static_cast<OpKind>(action.index());
}

std::string_view scale_name(Scale scale) {
  switch (scale) {
    case Scale::Token:
      return "token";
    case Scale::Step:
      return "step";
    case Scale::Structure:
      return "structure";
    case Scale::NoOp:
      return "noop";
  }
  return "?";
}

std::string_view kind_name(OpKind kind) {
  static constexpr std::array<std::string_view, kNumOpKinds> names = {
      "noop",    "add",   "delete",      "replace",          "reorder",
      "split",   "merge", "add_example", "instruction_edit", "format_change"};
  return names[static_cast<std::size_t>(kind)];
}

std::string describe(const EditAction& action) {
  auto join = [](const Step& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + s[i];
    return out;
  };
  auto n = [](std::size_t v) { return std::to_string(v); };
  const std::string head = std::string(scale_name(scale_of(action))) + "/" +
                           std::string(kind_name(kind_of(action)));
  return head + std::visit(
                    Overloaded{
                        [](const NoOpEdit&) { return std::string(); },
                        [&](const TokenAdd& a) {
                          return "(" + n(a.step) + "," + n(a.position) + "," +
                                 a.token + ")";
                        },
                        [&](const TokenDelete& a) {
                          return "(" + n(a.step) + "," + n(a.position) + ")";
                        },
                        [&](const TokenReplace& a) {
                          return "(" + n(a.step) + "," + n(a.position) + "," +
                                 a.token + ")";
                        },
                        [&](const StepReorder& a) {
                          return "(" + n(a.from) + "," + n(a.to) + ")";
                        },
                        [&](const StepSplit& a) {
                          return "(" + n(a.step) + "," + n(a.position) + ")";
                        },
                        [&](const StepMerge& a) { return "(" + n(a.step) + ")"; },
                        [&](const AddExample& a) {
                          return "(" + n(a.position) + ",[" +
                                 render_chain(a.fragment, " | ") + "])";
                        },
                        [&](const InstructionEdit& a) {
                          return "(" + n(a.step) + ",[" + join(a.replacement) +
                                 "])";
                        },
                        [](const FormatChange& a) {
                          return "(" + a.template_id + ")";
                        },
                    },
                    action);
}

const std::vector<std::string>& format_templates() {
  static const std::vector<std::string> ids = {"identity", "numbered", "bullet"};
  return ids;
}

bool is_known_template(std::string_view id) {
  const auto& ids = format_templates();
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

ReasoningChain apply_edit(const ReasoningChain& chain,
                          const EditAction& action) {
  const std::size_t n_steps = chain.steps.size();
  auto step_len = [&](std::string_view scale, std::string_view op,
                      std::size_t s) {
    if (s >= n_steps) out_of_bounds(scale, op, "step_index", s, n_steps);
    return chain.steps[s].size();
  };

  return std::visit(
      Overloaded{
          [&](const NoOpEdit&) { return chain; },
          [&](const TokenAdd& a) {
            check_token("add", a.token);
            ReasoningChain out = chain;
            if (n_steps == 0) {
              if (a.step != 0) out_of_bounds("token", "add", "step_index", a.step, 0);
              if (a.position != 0) {
                out_of_bounds("token", "add", "token_position", a.position, 0);
              }
              out.steps.push_back({a.token});
              return out;
            }
            const std::size_t len = step_len("token", "add", a.step);
            if (a.position > len) {
              out_of_bounds("token", "add", "token_position", a.position, len);
            }
            auto& st = out.steps[a.step];
            st.insert(st.begin() + static_cast<std::ptrdiff_t>(a.position),
                      a.token);
            return out;
          },
          [&](const TokenDelete& a) {
            const std::size_t len = step_len("token", "delete", a.step);
            if (a.position >= len) {
              out_of_bounds("token", "delete", "token_position", a.position, len);
            }
            ReasoningChain out = chain;
            auto& st = out.steps[a.step];
            st.erase(st.begin() + static_cast<std::ptrdiff_t>(a.position));
            remove_if_empty(out, a.step);
            return out;
          },
          [&](const TokenReplace& a) {
            check_token("replace", a.token);
            const std::size_t len = step_len("token", "replace", a.step);
            if (a.position >= len) {
              out_of_bounds("token", "replace", "token_position", a.position,
                            len);
            }
            ReasoningChain out = chain;
            out.steps[a.step][a.position] = a.token;
            return out;
          },
          [&](const StepReorder& a) {
            if (a.from >= n_steps) {
              out_of_bounds("step", "reorder", "from_index", a.from, n_steps);
            }
            if (a.to >= n_steps) {
              out_of_bounds("step", "reorder", "to_index", a.to, n_steps);
            }
            ReasoningChain out = chain;
            Step moved = std::move(out.steps[a.from]);
            out.steps.erase(out.steps.begin() + static_cast<std::ptrdiff_t>(a.from));
            out.steps.insert(out.steps.begin() + static_cast<std::ptrdiff_t>(a.to),
                             std::move(moved));
            return out;
          },
          [&](const StepSplit& a) {
            const std::size_t len = step_len("step", "split", a.step);
            if (a.position > len) {
              out_of_bounds("step", "split", "token_position", a.position, len);
            }
            if (a.position == 0 || a.position == len) {
              throw DegenerateSplitError(
                  "step/split: position " + std::to_string(a.position) +
                  " leaves an empty step (step length " + std::to_string(len) +
                  ")");
            }
            ReasoningChain out = chain;
            const auto& src = chain.steps[a.step];
            const auto cut = static_cast<std::ptrdiff_t>(a.position);
            out.steps[a.step] = Step(src.begin(), src.begin() + cut);
            out.steps.insert(out.steps.begin() + static_cast<std::ptrdiff_t>(a.step) + 1,
                             Step(src.begin() + cut, src.end()));
            return out;
          },
          [&](const StepMerge& a) {
            if (n_steps == 0 || a.step + 1 >= n_steps) {
              out_of_bounds("step", "merge", "step_index", a.step,
                            n_steps == 0 ? 0 : n_steps - 1);
            }
            ReasoningChain out = chain;
            auto& dst = out.steps[a.step];
            const auto& next = chain.steps[a.step + 1];
            dst.insert(dst.end(), next.begin(), next.end());
            out.steps.erase(out.steps.begin() + static_cast<std::ptrdiff_t>(a.step) + 1);
            return out;
          },
          [&](const AddExample& a) {
            if (a.position > n_steps) {
              out_of_bounds("structure", "add_example", "position", a.position,
                            n_steps);
            }
            for (const auto& st : a.fragment.steps) {
              for (const auto& t : st) check_token("add_example", t);
            }
            ReasoningChain out = chain;
            std::vector<Step> frag;
            for (const auto& st : a.fragment.steps) {
              if (!st.empty()) frag.push_back(st);
            }
            out.steps.insert(out.steps.begin() + static_cast<std::ptrdiff_t>(a.position),
                             frag.begin(), frag.end());
            return out;
          },
          [&](const InstructionEdit& a) {
            if (a.step >= n_steps) {
              out_of_bounds("structure", "instruction_edit", "step_index", a.step,
                            n_steps);
            }
            for (const auto& t : a.replacement) check_token("instruction_edit", t);
            ReasoningChain out = chain;
            out.steps[a.step] = a.replacement;
            remove_if_empty(out, a.step);
            return out;
          },
          [&](const FormatChange& a) { return apply_template(chain, a.template_id); },
      },
      action);
}

namespace {

struct Legal {
  const ReasoningChain& chain;
  const std::vector<Token>& vocab;
  const EnumConfig& cfg;
  std::size_t n_tokens;

  bool add_fits() const { return n_tokens + 1 <= cfg.max_tokens; }

  std::size_t add_slots() const {
    if (!add_fits()) return 0;
    if (chain.steps.empty()) return 1;
    std::size_t slots = 0;
    for (const auto& s : chain.steps) slots += s.size() + 1;
    return slots;
  }

  std::vector<EditAction> structure(OpKind kind) const {
    std::vector<EditAction> out;
    const std::size_t n = chain.steps.size();
    if (kind == OpKind::AddExample) {
      for (const auto& frag : cfg.example_fragments) {
        if (frag.token_count() == 0 ||
            n_tokens + frag.token_count() > cfg.max_tokens) {
          continue;
        }
        for (std::size_t p = 0; p <= n; ++p) out.emplace_back(AddExample{frag, p});
      }
    } else if (kind == OpKind::InstructionEdit) {
      for (std::size_t s = 0; s < n; ++s) {
        for (const auto& instr : cfg.instruction_steps) {
          if (instr.empty()) continue;
          if (n_tokens - chain.steps[s].size() + instr.size() > cfg.max_tokens) {
            continue;
          }
          out.emplace_back(InstructionEdit{s, instr});
        }
      }
    } else if (kind == OpKind::FormatChange) {
      for (const auto& id : cfg.templates) {
        if (apply_template(chain, id).token_count() > cfg.max_tokens) continue;
        out.emplace_back(FormatChange{id});
      }
    }
    return out;
  }

  std::array<std::size_t, kNumOpKinds> counts() const {
    std::array<std::size_t, kNumOpKinds> c{};
    const std::size_t n = chain.steps.size();
    c[static_cast<std::size_t>(OpKind::NoOp)] = 1;
    c[static_cast<std::size_t>(OpKind::Add)] = add_slots() * vocab.size();
    c[static_cast<std::size_t>(OpKind::Delete)] = n_tokens;
    c[static_cast<std::size_t>(OpKind::Replace)] = n_tokens * vocab.size();
    c[static_cast<std::size_t>(OpKind::Reorder)] = n * (n > 0 ? n - 1 : 0);
    std::size_t splits = 0;
    for (const auto& s : chain.steps) splits += s.size() > 1 ? s.size() - 1 : 0;
    c[static_cast<std::size_t>(OpKind::Split)] = splits;
    c[static_cast<std::size_t>(OpKind::Merge)] = n > 0 ? n - 1 : 0;
    for (OpKind k : {OpKind::AddExample, OpKind::InstructionEdit,
                     OpKind::FormatChange}) {
      c[static_cast<std::size_t>(k)] = structure(k).size();
    }
    return c;
  }

  /// The `idx`-th instantiation of a token- or step-level kind, in
  /// enumeration order.
  EditAction nth(OpKind kind, std::size_t idx) const {
    const std::size_t V = vocab.size();
    switch (kind) {
      case OpKind::Add: {
        if (chain.steps.empty()) return TokenAdd{0, 0, vocab[idx]};
        for (std::size_t s = 0; s < chain.steps.size(); ++s) {
          const std::size_t block = (chain.steps[s].size() + 1) * V;
          if (idx < block) return TokenAdd{s, idx / V, vocab[idx % V]};
          idx -= block;
        }
        break;
      }
      case OpKind::Delete:
      case OpKind::Replace: {
        const std::size_t per = kind == OpKind::Delete ? 1 : V;
        for (std::size_t s = 0; s < chain.steps.size(); ++s) {
          const std::size_t block = chain.steps[s].size() * per;
          if (idx < block) {
            if (kind == OpKind::Delete) return TokenDelete{s, idx};
            return TokenReplace{s, idx / V, vocab[idx % V]};
          }
          idx -= block;
        }
        break;
      }
      case OpKind::Reorder: {
        const std::size_t n = chain.steps.size();
        const std::size_t from = idx / (n - 1);
        std::size_t to = idx % (n - 1);
        if (to >= from) ++to;
        return StepReorder{from, to};
      }
      case OpKind::Split: {
        for (std::size_t s = 0; s < chain.steps.size(); ++s) {
          const std::size_t len = chain.steps[s].size();
          const std::size_t block = len > 1 ? len - 1 : 0;
          if (idx < block) return StepSplit{s, idx + 1};
          idx -= block;
        }
        break;
      }
      case OpKind::Merge:
        return StepMerge{idx};
      case OpKind::NoOp:
        return NoOpEdit{};
      default:
        return structure(kind).at(idx);
    }
    throw Error("internal: action index out of range");
  }
};

constexpr std::array<OpKind, 3> kTokenKinds = {OpKind::Add, OpKind::Delete,
                                               OpKind::Replace};
constexpr std::array<OpKind, 3> kStepKinds = {OpKind::Reorder, OpKind::Split,
                                              OpKind::Merge};
constexpr std::array<OpKind, 3> kStructureKinds = {
    OpKind::AddExample, OpKind::InstructionEdit, OpKind::FormatChange};

}  // namespace

std::array<std::size_t, kNumOpKinds> legal_action_counts(
    const ReasoningChain& chain, const std::vector<Token>& vocab,
    const EnumConfig& cfg) {
  return Legal{chain, vocab, cfg, chain.token_count()}.counts();
}

std::vector<EditAction> enumerate_actions(const ReasoningChain& chain,
                                          const std::vector<Token>& vocab,
                                          const EnumConfig& cfg) {
  const Legal legal{chain, vocab, cfg, chain.token_count()};
  const auto counts = legal.counts();
  const std::size_t total = std::accumulate(counts.begin(), counts.end(),
                                            std::size_t{0});
  if (total > cfg.max_enumeration) {
    throw CapacityError("enumerate_actions: " + std::to_string(total) +
                        " actions exceed max_enumeration " +
                        std::to_string(cfg.max_enumeration));
  }
  std::vector<EditAction> out;
  out.reserve(total);
  out.emplace_back(NoOpEdit{});
  for (auto kinds : {kTokenKinds, kStepKinds}) {
    for (OpKind k : kinds) {
      for (std::size_t i = 0; i < counts[static_cast<std::size_t>(k)]; ++i) {
        out.push_back(legal.nth(k, i));
      }
    }
  }
  for (OpKind k : kStructureKinds) {
    auto acts = legal.structure(k);
    out.insert(out.end(), std::make_move_iterator(acts.begin()),
               std::make_move_iterator(acts.end()));
  }
  return out;
}

EditAction sample_action(const ReasoningChain& chain,
                         const std::vector<Token>& vocab,
                         const ScaleWeights& weights, Rng& rng,
                         const EnumConfig& cfg) {
  const Legal legal{chain, vocab, cfg, chain.token_count()};
  const auto counts = legal.counts();
  const std::array<std::array<OpKind, 3>, 3> scales = {kTokenKinds, kStepKinds,
                                                       kStructureKinds};
  const std::array<double, 3> w = {weights.token, weights.step,
                                   weights.structure};
  std::array<double, 3> eff{};
  double total = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    bool any = false;
    for (OpKind k : scales[s]) any = any || counts[static_cast<std::size_t>(k)] > 0;
    eff[s] = any ? std::max(w[s], 0.0) : 0.0;
    total += eff[s];
  }
  if (total <= 0.0) return NoOpEdit{};

  double u = uniform01(rng) * total;
  std::size_t scale = 3;
  std::size_t last_nonzero = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    if (eff[s] == 0.0) continue;
    last_nonzero = s;
    if (scale == 3 && u < eff[s]) scale = s;
    u -= eff[s];
  }
  if (scale == 3) scale = last_nonzero;  // rounding at the upper edge

  std::vector<OpKind> kinds;
  for (OpKind k : scales[scale]) {
    if (counts[static_cast<std::size_t>(k)] > 0) kinds.push_back(k);
  }
  const OpKind kind = kinds[uniform_index(rng, kinds.size())];
  return legal.nth(kind,
                   uniform_index(rng, counts[static_cast<std::size_t>(kind)]));
}

std::vector<EditAction> sample_candidates(const ReasoningChain& chain,
                                          std::size_t k,
                                          const std::vector<Token>& vocab,
                                          const ScaleWeights& weights, Rng& rng,
                                          const EnumConfig& cfg) {
  if (k == 0) throw DomainError("sample_candidates: k must be >= 1");
  std::vector<EditAction> out;
  out.reserve(k);
  out.emplace_back(NoOpEdit{});
  for (std::size_t i = 1; i < k; ++i) {
    out.push_back(sample_action(chain, vocab, weights, rng, cfg));
  }
  return out;
}

}  // namespace tap
