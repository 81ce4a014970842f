#include "doctest.h"

#include "tap/chain.hpp"
#include "tap/errors.hpp"
#include "tap/random.hpp"

using namespace tap;

namespace {

ReasoningChain random_chain(Rng& rng) {
  static const std::vector<Token> words{"a", "bb", "c3", "Total", "7.", "x+y", "=", "(4)"};
  ReasoningChain c;
  const auto steps = uniform_index(rng, 5);
  for (std::size_t s = 0; s < steps; ++s) {
    Step step;
    const auto len = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < len; ++i) step.push_back(words[uniform_index(rng, words.size())]);
    c.steps.push_back(step);
  }
  return c;
}

}  // namespace

TEST_CASE("parse splits steps and tokens") {
  auto c = parse_chain("Add 3 and 4.\nTotal is 7.", "\n");
  REQUIRE(c.num_steps() == 2);
  CHECK(c.steps[0] == Step{"Add", "3", "and", "4."});
  CHECK(c.steps[1] == Step{"Total", "is", "7."});
  CHECK(c.token_count() == 7);
}

TEST_CASE("parse edge cases") {
  CHECK(parse_chain("", "\n").empty());
  CHECK(parse_chain("a\n\nb", "\n").num_steps() == 2);
  CHECK(parse_chain("  a \t b  ", "\n").steps[0] == Step{"a", "b"});
  CHECK(parse_chain("a || b c", "||").steps == std::vector<Step>{{"a"}, {"b", "c"}});
  CHECK_THROWS_AS(parse_chain("a", ""), DomainError);
}

TEST_CASE("render joins tokens and steps") {
  ReasoningChain c{{{"a", "b"}, {"c"}}};
  CHECK(render_chain(c, "\n") == "a b\nc");
  CHECK(render_chain(ReasoningChain{}, "\n").empty());
  CHECK_THROWS_AS(render_chain(ReasoningChain{{{"a|b"}}}, "|"), InvalidTokenError);
}

TEST_CASE("parse inverts render on random chains") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_chain(rng);
    CHECK(parse_chain(render_chain(c)) == c);
  }
}

TEST_CASE("flatten and token validity") {
  ReasoningChain c{{{"a", "b"}, {"c"}}};
  CHECK(c.flatten() == std::vector<Token>{"a", "b", "c"});
  CHECK(is_valid_token("x"));
  CHECK_FALSE(is_valid_token(""));
  CHECK_FALSE(is_valid_token("a b"));
  CHECK(tokenize(" p  q\nr ") == std::vector<Token>{"p", "q", "r"});
}
