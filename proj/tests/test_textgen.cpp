#include "aunet/textgen.hpp"

#include <array>
#include <string>

#include "aunet/splitter.hpp"
#include "doctest.h"

using namespace aunet;

TEST_SUITE_BEGIN("textgen");

TEST_CASE("exact size and determinism") {
  auto a = synth_corpus(4096, 7);
  auto b = synth_corpus(4096, 7);
  auto c = synth_corpus(4096, 8);
  CHECK(a.size() == 4096);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(synth_corpus(1, 7).size() == 1);
  CHECK(synth_corpus(0, 7).empty());
}

TEST_CASE("english style is printable ascii prose") {
  auto bytes = synth_corpus(65536, 11);
  std::array<std::int64_t, 256> hist{};
  for (auto b : bytes) ++hist[b];
  for (int b = 0; b < 256; ++b) {
    const bool ok = b == '\n' || (b >= 0x20 && b < 0x7f);
    if (!ok) CHECK(hist[b] == 0);
  }
  // Roughly word-shaped: spaces common, capitals present, some digits.
  CHECK(hist[' '] > 8000);
  std::int64_t upper = 0, digit = 0;
  for (int b = 'A'; b <= 'Z'; ++b) upper += hist[b];
  for (int b = '0'; b <= '9'; ++b) digit += hist[b];
  CHECK(upper > 500);
  CHECK(digit > 100);
  CHECK(hist['.'] > 500);
  CHECK(hist['\n'] > 200);
}

TEST_CASE("mixed style adds non-ascii and exotic whitespace") {
  auto bytes = synth_corpus(262144, 3, TextStyle::mixed);
  std::int64_t non_ascii = 0, cr = 0, tab = 0;
  for (auto b : bytes) {
    if (b >= 0x80) ++non_ascii;
    if (b == '\r') ++cr;
    if (b == '\t') ++tab;
  }
  CHECK(non_ascii > 1000);
  CHECK(cr > 20);
  CHECK(tab > 20);
}

TEST_CASE("splitter digests both styles") {
  SplitterConfig cfg;
  for (auto style : {TextStyle::english, TextStyle::mixed}) {
    auto bytes = synth_corpus(32768, 5, style);
    std::string text(bytes.begin(), bytes.end());
    auto bounds = split_stage1(text, cfg);
    auto map = build_hierarchy(bounds, text, cfg);
    map.validate(static_cast<std::int64_t>(text.size()));
    const double bpu = measure_compression(text, cfg);
    CHECK(bpu > 3.0);
    CHECK(bpu < 8.0);
  }
}

TEST_SUITE_END();
