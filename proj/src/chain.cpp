#include "tap/chain.hpp"

#include <cctype>

#include "tap/errors.hpp"

namespace tap {
namespace {

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

}  // namespace

std::size_t ReasoningChain::token_count() const {
  std::size_t n = 0;
  for (const auto& s : steps) n += s.size();
  return n;
}

std::vector<Token> ReasoningChain::flatten() const {
  std::vector<Token> out;
  out.reserve(token_count());
  for (const auto& s : steps) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

ReasoningChain parse_chain(std::string_view text, std::string_view delimiter) {
  if (delimiter.empty()) throw DomainError("parse_chain: empty step delimiter");
  ReasoningChain chain;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(delimiter, start);
    if (end == std::string_view::npos) end = text.size();
    auto step = tokenize(text.substr(start, end - start));
    if (!step.empty()) chain.steps.push_back(std::move(step));
    if (end == text.size()) break;
    start = end + delimiter.size();
  }
  return chain;
}

std::string render_chain(const ReasoningChain& chain,
                         std::string_view delimiter) {
  std::string out;
  for (std::size_t s = 0; s < chain.steps.size(); ++s) {
    if (s > 0) out += delimiter;
    const auto& step = chain.steps[s];
    for (std::size_t t = 0; t < step.size(); ++t) {
      if (!delimiter.empty() && step[t].find(delimiter) != std::string::npos) {
        throw InvalidTokenError("render_chain: token '" + step[t] +
                                "' contains the step delimiter");
      }
      if (t > 0) out += ' ';
      out += step[t];
    }
  }
  return out;
}

bool is_valid_token(std::string_view token) {
  if (token.empty()) return false;
  for (char c : token) {
    if (is_space(c)) return false;
  }
  return true;
}

}  // namespace tap
