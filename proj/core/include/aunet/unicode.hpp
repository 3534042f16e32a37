#pragma once

#include <cstddef>
#include <cstdint>

namespace aunet {

namespace detail {
struct UnicodeRange {
  char32_t lo, hi;
};
extern const UnicodeRange kLetterRanges[];
extern const UnicodeRange kNumberRanges[];
extern const UnicodeRange kSpaceRanges[];
extern const std::size_t kLetterRangesCount;
extern const std::size_t kNumberRangesCount;
extern const std::size_t kSpaceRangesCount;
}  // namespace detail

// Codepoints above U+10FFFF stand in for bytes that cannot be part of any
// valid UTF-8 sequence; every class test is false for them.
constexpr char32_t kOpaqueBase = 0x110000;

bool is_letter(char32_t cp);
bool is_number(char32_t cp);
bool is_space(char32_t cp);

enum class Utf8State { ok, invalid, incomplete };

struct Utf8Result {
  Utf8State state;
  char32_t cp;  // valid only when state == ok
  int len;      // bytes consumed when state == ok, bytes seen when incomplete
};

// Strict decoder: rejects overlong forms, surrogates and values past
// U+10FFFF. n must be >= 1. An invalid result consumes exactly one byte;
// incomplete means the n available bytes are a proper prefix of some valid
// sequence.
Utf8Result utf8_decode(const unsigned char* p, std::size_t n);

}  // namespace aunet
