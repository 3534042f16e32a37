#include "aunet/unicode.hpp"

#include <algorithm>

namespace aunet {

namespace {

bool in_ranges(const detail::UnicodeRange* r, std::size_t n, char32_t cp) {
  auto it = std::upper_bound(r, r + n, cp,
                             [](char32_t c, const detail::UnicodeRange& x) { return c < x.lo; });
  return it != r && cp <= (it - 1)->hi;
}

}  // namespace

bool is_letter(char32_t cp) {
  return in_ranges(detail::kLetterRanges, detail::kLetterRangesCount, cp);
}
bool is_number(char32_t cp) {
  return in_ranges(detail::kNumberRanges, detail::kNumberRangesCount, cp);
}
bool is_space(char32_t cp) {
  return in_ranges(detail::kSpaceRanges, detail::kSpaceRangesCount, cp);
}

Utf8Result utf8_decode(const unsigned char* p, std::size_t n) {
  const unsigned b0 = p[0];
  if (b0 < 0x80) return {Utf8State::ok, b0, 1};

  int need;
  unsigned lo1, hi1;
  if (b0 >= 0xC2 && b0 <= 0xDF) {
    need = 2, lo1 = 0x80, hi1 = 0xBF;
  } else if (b0 == 0xE0) {
    need = 3, lo1 = 0xA0, hi1 = 0xBF;
  } else if ((b0 >= 0xE1 && b0 <= 0xEC) || b0 == 0xEE || b0 == 0xEF) {
    need = 3, lo1 = 0x80, hi1 = 0xBF;
  } else if (b0 == 0xED) {
    need = 3, lo1 = 0x80, hi1 = 0x9F;
  } else if (b0 == 0xF0) {
    need = 4, lo1 = 0x90, hi1 = 0xBF;
  } else if (b0 >= 0xF1 && b0 <= 0xF3) {
    need = 4, lo1 = 0x80, hi1 = 0xBF;
  } else if (b0 == 0xF4) {
    need = 4, lo1 = 0x80, hi1 = 0x8F;
  } else {
    return {Utf8State::invalid, 0, 1};
  }

  char32_t cp = b0 & (0xFFu >> (need + 1));
  for (int i = 1; i < need; ++i) {
    if (static_cast<std::size_t>(i) >= n) return {Utf8State::incomplete, 0, static_cast<int>(n)};
    const unsigned b = p[i];
    const unsigned lo = i == 1 ? lo1 : 0x80, hi = i == 1 ? hi1 : 0xBF;
    if (b < lo || b > hi) return {Utf8State::invalid, 0, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  return {Utf8State::ok, cp, need};
}

}  // namespace aunet
