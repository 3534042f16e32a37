#include "aunet/regex_engine.hpp"

#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "aunet/unicode.hpp"

namespace aunet {

namespace detail {

namespace {
constexpr std::uint8_t kClassL = 1, kClassN = 2, kClassS = 4;
constexpr int kUnbounded = std::numeric_limits<int>::max();
}  // namespace

struct RegexAst {
  enum Kind { kCls, kSeq, kAlt, kRep, kNLook } kind = kSeq;
  // kCls
  std::vector<std::pair<char32_t, char32_t>> ranges;
  std::uint8_t named = 0;
  bool negate = false;
  // kSeq / kAlt; kRep and kNLook keep their operand in children[0]
  std::vector<std::unique_ptr<RegexAst>> children;
  // kRep
  int lo = 0, hi = 0;
  bool possessive = false;
};

namespace {

using AstPtr = std::unique_ptr<RegexAst>;

bool nullable(const RegexAst* a) {
  switch (a->kind) {
    case RegexAst::kCls:
      return false;
    case RegexAst::kSeq:
      for (auto& c : a->children)
        if (!nullable(c.get())) return false;
      return true;
    case RegexAst::kAlt:
      for (auto& c : a->children)
        if (nullable(c.get())) return true;
      return false;
    case RegexAst::kRep:
      return a->lo == 0 || nullable(a->children[0].get());
    case RegexAst::kNLook:
      return true;
  }
  return true;
}

class Parser {
 public:
  explicit Parser(std::vector<char32_t> pattern) : pat_(std::move(pattern)) {}

  AstPtr parse() {
    auto root = parse_alt();
    if (i_ != pat_.size()) fail("unbalanced ')'");
    return root;
  }

 private:
  std::vector<char32_t> pat_;
  std::size_t i_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("regex: " + what + " at offset " + std::to_string(i_));
  }
  bool done() const { return i_ == pat_.size(); }
  char32_t peek() const { return pat_[i_]; }
  char32_t take() { return pat_[i_++]; }
  bool eat(char32_t c) {
    if (done() || peek() != c) return false;
    ++i_;
    return true;
  }

  AstPtr parse_alt() {
    std::vector<AstPtr> branches;
    branches.push_back(parse_seq());
    while (eat(U'|')) branches.push_back(parse_seq());
    if (branches.size() == 1) return std::move(branches[0]);
    auto alt = std::make_unique<RegexAst>();
    alt->kind = RegexAst::kAlt;
    alt->children = std::move(branches);
    return alt;
  }

  AstPtr parse_seq() {
    auto seq = std::make_unique<RegexAst>();
    seq->kind = RegexAst::kSeq;
    while (!done() && peek() != U'|' && peek() != U')') seq->children.push_back(parse_quantified());
    if (seq->children.size() == 1) return std::move(seq->children[0]);
    return seq;
  }

  AstPtr parse_quantified() {
    auto atom = parse_atom();
    int lo, hi;
    if (eat(U'?')) {
      lo = 0, hi = 1;
    } else if (eat(U'*')) {
      lo = 0, hi = kUnbounded;
    } else if (eat(U'+')) {
      lo = 1, hi = kUnbounded;
    } else if (!done() && peek() == U'{') {
      std::size_t mark = i_;
      if (!parse_counts(lo, hi)) {
        i_ = mark;  // '{' without a count is a literal; nothing consumed
        return atom;
      }
    } else {
      return atom;
    }
    auto rep = std::make_unique<RegexAst>();
    rep->kind = RegexAst::kRep;
    rep->lo = lo;
    rep->hi = hi;
    rep->children.push_back(std::move(atom));
    if (eat(U'+'))
      rep->possessive = true;
    else if (!done() && peek() == U'?')
      fail("lazy quantifiers are not supported");
    if (nullable(rep->children[0].get())) fail("cannot repeat a pattern that can match empty");
    if (lo > hi) fail("quantifier minimum exceeds maximum");
    return rep;
  }

  bool parse_counts(int& lo, int& hi) {
    ++i_;  // '{'
    if (done() || peek() < U'0' || peek() > U'9') return false;
    lo = parse_int();
    if (eat(U'}')) {
      hi = lo;
      return true;
    }
    if (!eat(U',')) return false;
    if (eat(U'}')) {
      hi = kUnbounded;
      return true;
    }
    if (done() || peek() < U'0' || peek() > U'9') return false;
    hi = parse_int();
    return eat(U'}');
  }

  int parse_int() {
    long v = 0;
    while (!done() && peek() >= U'0' && peek() <= U'9') {
      v = v * 10 + (take() - U'0');
      if (v > 1000000) fail("quantifier count too large");
    }
    return static_cast<int>(v);
  }

  AstPtr parse_atom() {
    if (done()) fail("pattern ended unexpectedly");
    char32_t c = take();
    switch (c) {
      case U'(': {
        bool nlook = false;
        if (eat(U'?')) {
          if (eat(U'!'))
            nlook = true;
          else if (!eat(U':'))
            fail("unsupported group modifier");
        }
        auto inner = parse_alt();
        if (!eat(U')')) fail("missing ')'");
        if (!nlook) return inner;
        auto look = std::make_unique<RegexAst>();
        look->kind = RegexAst::kNLook;
        look->children.push_back(std::move(inner));
        return look;
      }
      case U'[':
        return parse_class();
      case U'\\':
        return parse_escape(false);
      case U'.': {
        auto a = std::make_unique<RegexAst>();
        a->kind = RegexAst::kCls;
        a->negate = true;
        a->ranges.emplace_back(U'\n', U'\n');
        return a;
      }
      case U')':
      case U'|':
      case U'?':
      case U'*':
      case U'+':
        fail("nothing to repeat");
      default: {
        auto a = std::make_unique<RegexAst>();
        a->kind = RegexAst::kCls;
        a->ranges.emplace_back(c, c);
        return a;
      }
    }
  }

  // Resolved escape: either a named class bit or a literal codepoint.
  struct Escaped {
    std::uint8_t named = 0;
    bool negate = false;
    char32_t cp = 0;
  };

  Escaped read_escape(bool in_class) {
    if (done()) fail("pattern ended after '\\'");
    char32_t c = take();
    switch (c) {
      case U's':
        return {kClassS, false, 0};
      case U'S':
        if (in_class) fail("\\S inside a character class is not supported");
        return {kClassS, true, 0};
      case U'p': {
        if (!eat(U'{')) fail("expected '{' after \\p");
        std::u32string name;
        while (!done() && peek() != U'}') name.push_back(take());
        if (!eat(U'}')) fail("missing '}' in \\p");
        if (name == U"L") return {kClassL, false, 0};
        if (name == U"N") return {kClassN, false, 0};
        fail("unsupported property in \\p");
      }
      case U'n':
        return {0, false, U'\n'};
      case U'r':
        return {0, false, U'\r'};
      case U't':
        return {0, false, U'\t'};
      case U'f':
        return {0, false, U'\f'};
      case U'v':
        return {0, false, U'\v'};
      default:
        if ((c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z') || (c >= U'0' && c <= U'9'))
          fail("unsupported escape");
        return {0, false, c};
    }
  }

  AstPtr parse_escape(bool in_class) {
    Escaped e = read_escape(in_class);
    auto a = std::make_unique<RegexAst>();
    a->kind = RegexAst::kCls;
    if (e.named) {
      a->named = e.named;
      a->negate = e.negate;
    } else {
      a->ranges.emplace_back(e.cp, e.cp);
    }
    return a;
  }

  AstPtr parse_class() {
    auto a = std::make_unique<RegexAst>();
    a->kind = RegexAst::kCls;
    if (eat(U'^')) a->negate = true;
    bool any = false;
    while (true) {
      if (done()) fail("missing ']'");
      if (peek() == U']') {
        ++i_;
        break;
      }
      char32_t c = take();
      if (c == U'\\') {
        Escaped e = read_escape(true);
        if (e.named) {
          a->named |= e.named;
          any = true;
          continue;
        }
        c = e.cp;
      }
      // Range if a plain '-' follows with something other than ']'.
      if (!done() && peek() == U'-' && i_ + 1 < pat_.size() && pat_[i_ + 1] != U']') {
        ++i_;
        char32_t hi = take();
        if (hi == U'\\') {
          Escaped e = read_escape(true);
          if (e.named) fail("named class cannot bound a range");
          hi = e.cp;
        }
        if (hi < c) fail("inverted range in character class");
        a->ranges.emplace_back(c, hi);
      } else {
        a->ranges.emplace_back(c, c);
      }
      any = true;
    }
    if (!any) fail("empty character class");
    return a;
  }
};

struct Matcher {
  const char32_t* cps;
  std::int64_t n;
  bool touched = false;
  std::int64_t end = -1;

  struct Cont {
    enum Kind { kSeq, kRep, kStop } kind;
    const RegexAst* ast;
    std::size_t idx;  // next child for kSeq, completed count for kRep
    const Cont* next;
    std::int64_t* capture;  // kStop
  };

  static bool cls_match(const RegexAst* a, char32_t c) {
    bool hit = false;
    for (auto& r : a->ranges)
      if (c >= r.first && c <= r.second) {
        hit = true;
        break;
      }
    if (!hit && a->named) {
      if ((a->named & kClassL) && is_letter(c))
        hit = true;
      else if ((a->named & kClassN) && is_number(c))
        hit = true;
      else if ((a->named & kClassS) && is_space(c))
        hit = true;
    }
    return a->negate ? !hit : hit;
  }

  bool run_cont(const Cont* k, std::int64_t pos) {
    if (!k) {
      end = pos;
      return true;
    }
    switch (k->kind) {
      case Cont::kStop:
        *k->capture = pos;
        return true;
      case Cont::kSeq: {
        const auto& ch = k->ast->children;
        if (k->idx == ch.size()) return run_cont(k->next, pos);
        Cont kk{Cont::kSeq, k->ast, k->idx + 1, k->next, nullptr};
        return match_node(ch[k->idx].get(), pos, &kk);
      }
      case Cont::kRep:
        return match_rep(k->ast, pos, k->idx, k->next);
    }
    return false;
  }

  bool match_rep(const RegexAst* a, std::int64_t pos, std::size_t done, const Cont* k) {
    if (done < static_cast<std::size_t>(a->hi)) {
      Cont kk{Cont::kRep, a, done + 1, k, nullptr};
      if (match_node(a->children[0].get(), pos, &kk)) return true;
    }
    if (done >= static_cast<std::size_t>(a->lo)) return run_cont(k, pos);
    return false;
  }

  bool match_node(const RegexAst* a, std::int64_t pos, const Cont* k) {
    switch (a->kind) {
      case RegexAst::kCls: {
        if (pos >= n) {
          touched = true;
          return false;
        }
        if (!cls_match(a, cps[pos])) return false;
        return run_cont(k, pos + 1);
      }
      case RegexAst::kSeq: {
        Cont kk{Cont::kSeq, a, 0, k, nullptr};
        return run_cont(&kk, pos);
      }
      case RegexAst::kAlt: {
        for (auto& c : a->children)
          if (match_node(c.get(), pos, k)) return true;
        return false;
      }
      case RegexAst::kRep: {
        if (!a->possessive) return match_rep(a, pos, 0, k);
        std::int64_t cap = -1;
        Cont stop{Cont::kStop, nullptr, 0, nullptr, &cap};
        if (!match_rep(a, pos, 0, &stop)) return false;
        return run_cont(k, cap);
      }
      case RegexAst::kNLook: {
        std::int64_t cap = -1;
        Cont stop{Cont::kStop, nullptr, 0, nullptr, &cap};
        if (match_node(a->children[0].get(), pos, &stop)) return false;
        return run_cont(k, pos);
      }
    }
    return false;
  }
};

std::vector<char32_t> decode_pattern(const std::string& pattern) {
  std::vector<char32_t> out;
  const auto* p = reinterpret_cast<const unsigned char*>(pattern.data());
  std::size_t i = 0;
  while (i < pattern.size()) {
    Utf8Result r = utf8_decode(p + i, pattern.size() - i);
    if (r.state != Utf8State::ok)
      throw std::invalid_argument("regex: pattern is not valid UTF-8 at byte " + std::to_string(i));
    out.push_back(r.cp);
    i += r.len;
  }
  return out;
}

}  // namespace

}  // namespace detail

Regex::Regex(const std::string& pattern_utf8)
    : root_(detail::Parser(detail::decode_pattern(pattern_utf8)).parse()) {}

Regex::Match Regex::match_at(const char32_t* cps, std::int64_t n, std::int64_t pos) const {
  detail::Matcher m{cps, n, false, -1};
  bool ok = m.match_node(root_.get(), pos, nullptr);
  Match r;
  r.end = ok ? m.end : -1;
  r.confirmed = !m.touched;
  return r;
}

}  // namespace aunet
