#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aunet/regex_engine.hpp"

namespace aunet {

// Six alternatives over codepoints: space-optional letter runs, short digit
// runs, space-optional punctuation runs with trailing newlines, whitespace up
// to a newline, whitespace not followed by more text, and plain whitespace.
extern const char* const kDefaultStage1Regex;

struct SplitterConfig {
  std::string stage1_regex = kDefaultStage1Regex;
  std::vector<int> group_sizes = {2, 4};  // words per segment at stages 3, 4, ...
  std::string sentence_end_bytes = ".!?\n";

  bool operator==(const SplitterConfig&) const = default;
};

// Pooling positions per stage. boundaries[i] lists, strictly increasing, the
// byte index of the last byte of every stage-(i+2) segment.
struct SegmentMap {
  std::vector<std::vector<std::int64_t>> boundaries;

  int n_levels() const { return static_cast<int>(boundaries.size()); }
  // Boundaries feeding stage s >= 2.
  const std::vector<std::int64_t>& stage(int s) const;
  // Checks monotonicity, the subset chain between stages, and the final-byte
  // bound; throws std::logic_error naming the violated property.
  void validate(std::int64_t n_bytes) const;
};

// Byte index of the last byte of every pattern match, in order. A trailing
// match cut short by end of input still yields its boundary, so a non-empty
// input always ends with a boundary at the last byte.
std::vector<std::int64_t> split_stage1(const std::string& bytes, const SplitterConfig& cfg);

// Stage s > 2 keeps every group_sizes[s-3]-th stage-2 boundary, restarting
// the count after any segment containing a sentence_end byte; sentence-end
// boundaries are always kept.
SegmentMap build_hierarchy(const std::vector<std::int64_t>& stage1_boundaries,
                           const std::string& bytes, const SplitterConfig& cfg);

// Bytes per unit: with external token counts, bytes / sum(counts); otherwise
// bytes per stage-2 segment.
double measure_compression(const std::string& corpus, const SplitterConfig& cfg,
                           const std::vector<std::int64_t>* tokenizer_lengths = nullptr);

// Grouping counter for one deeper stage, shared between batch hierarchy
// construction and streaming decode so the two can never disagree.
class GroupCounter {
 public:
  explicit GroupCounter(int group_size);
  // Advances past one stage-2 boundary; true if this stage keeps it.
  bool push(bool segment_has_sentence_end);

 private:
  int g_;
  int count_ = 0;
};

// Incremental splitter: bytes go in one at a time, stage-2 boundaries come
// out once no continuation of the input could extend or alter their match.
class StreamSplitter {
 public:
  explicit StreamSplitter(const SplitterConfig& cfg);

  // Returns byte indices of newly confirmed boundaries, ascending.
  std::vector<std::int64_t> push(unsigned char byte);
  std::int64_t bytes_seen() const { return n_bytes_; }

 private:
  Regex re_;
  std::vector<char32_t> cps_;
  std::vector<std::int64_t> cp_end_byte_;
  std::string pending_;
  std::int64_t n_bytes_ = 0;
  std::int64_t cursor_ = 0;  // codepoint index where the next match will start
};

}  // namespace aunet
