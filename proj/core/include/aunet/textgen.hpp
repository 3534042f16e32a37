#pragma once

#include <cstdint>
#include <vector>

namespace aunet {

enum class TextStyle {
  english,  // plain sentences, occasional numbers
  mixed,    // adds accented words, other scripts, punctuation clusters, CRLF
};

// Deterministic synthetic prose: Zipf-weighted words in short sentence
// templates with paragraphs. Entropy sits well under two bits per byte, so a
// small model trained on it has headroom to show real compression.
std::vector<std::uint8_t> synth_corpus(std::size_t n_bytes, std::uint64_t seed,
                                       TextStyle style = TextStyle::english);

}  // namespace aunet
