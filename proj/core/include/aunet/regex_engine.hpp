#pragma once

#include <cstdint>
#include <memory>
#include <string>

namespace aunet {

namespace detail {
struct RegexAst;
}

// Backtracking matcher over codepoint sequences with PCRE-style semantics:
// alternatives are tried left to right, quantifiers are greedy unless marked
// possessive, and the first overall success wins. Supports the subset of
// syntax the splitting patterns need: alternation, groups, (?!...), character
// classes, \p{L}, \p{N}, \s, \S, and {m,n} / ? / * / + quantifiers with an
// optional possessive '+' suffix.
class Regex {
 public:
  // Throws std::invalid_argument on syntax errors or unsupported constructs.
  explicit Regex(const std::string& pattern_utf8);

  struct Match {
    std::int64_t end = -1;   // one past the last matched codepoint, -1 if no match
    bool confirmed = true;   // the attempt never inspected positions >= n
  };

  // Attempts a match with the leftmost codepoint at index pos. n is the number
  // of codepoints available; an attempt counts as unconfirmed if any branch of
  // its computation, successful or not, probed position n or later.
  Match match_at(const char32_t* cps, std::int64_t n, std::int64_t pos) const;

 private:
  std::shared_ptr<const detail::RegexAst> root_;
};

}  // namespace aunet
