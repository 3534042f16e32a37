#include "aunet/splitter.hpp"

#include <algorithm>
#include <stdexcept>

#include "aunet/unicode.hpp"

namespace aunet {

const char* const kDefaultStage1Regex =
    R"( ?\p{L}{1,16}|\p{N}{1,3}| ?[^\s\p{L}\p{N}]{1,3}+[\r\n]*|\s*[\r\n]|\s+(?!\S)|\s+)";

namespace {

struct CpSeq {
  std::vector<char32_t> cps;
  std::vector<std::int64_t> end_byte;  // last byte of each codepoint
  std::int64_t pending = 0;            // trailing bytes forming a valid prefix
};

// Bytes that can never complete a codepoint become opaque symbols; a trailing
// proper prefix of a valid sequence stays undecoded.
CpSeq decode_cps(const std::string& bytes) {
  CpSeq out;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  std::size_t i = 0;
  while (i < bytes.size()) {
    Utf8Result r = utf8_decode(p + i, bytes.size() - i);
    if (r.state == Utf8State::ok) {
      out.cps.push_back(r.cp);
      out.end_byte.push_back(static_cast<std::int64_t>(i) + r.len - 1);
      i += r.len;
    } else if (r.state == Utf8State::invalid) {
      out.cps.push_back(kOpaqueBase + p[i]);
      out.end_byte.push_back(static_cast<std::int64_t>(i));
      ++i;
    } else {
      out.pending = static_cast<std::int64_t>(bytes.size() - i);
      break;
    }
  }
  return out;
}

void check_group_sizes(const SplitterConfig& cfg) {
  int prev = 0;
  for (int g : cfg.group_sizes) {
    if (g <= 0) throw std::invalid_argument("splitter: group size must be positive, got " +
                                            std::to_string(g));
    if (g < prev)
      throw std::invalid_argument("splitter: group sizes must be non-decreasing");
    prev = g;
  }
}

}  // namespace

const std::vector<std::int64_t>& SegmentMap::stage(int s) const {
  if (s < 2 || s - 2 >= n_levels())
    throw std::out_of_range("SegmentMap: no boundaries for stage " + std::to_string(s));
  return boundaries[s - 2];
}

void SegmentMap::validate(std::int64_t n_bytes) const {
  for (std::size_t level = 0; level < boundaries.size(); ++level) {
    const auto& b = boundaries[level];
    for (std::size_t i = 0; i < b.size(); ++i) {
      if (b[i] < 0 || b[i] > n_bytes - 1)
        throw std::logic_error("SegmentMap: boundary " + std::to_string(b[i]) +
                               " outside byte range at stage " + std::to_string(level + 2));
      if (i && b[i] <= b[i - 1])
        throw std::logic_error("SegmentMap: boundaries not strictly increasing at stage " +
                               std::to_string(level + 2));
    }
    if (level && !std::includes(boundaries[level - 1].begin(), boundaries[level - 1].end(),
                                b.begin(), b.end()))
      throw std::logic_error("SegmentMap: stage " + std::to_string(level + 2) +
                             " boundaries are not a subset of stage " + std::to_string(level + 1));
  }
}

std::vector<std::int64_t> split_stage1(const std::string& bytes, const SplitterConfig& cfg) {
  if (bytes.empty()) return {};
  Regex re(cfg.stage1_regex);
  CpSeq seq = decode_cps(bytes);
  const std::int64_t n_cps = static_cast<std::int64_t>(seq.cps.size());

  std::vector<std::int64_t> bounds;
  bool last_confirmed = true;
  std::int64_t pos = 0;
  while (pos < n_cps) {
    Regex::Match m = re.match_at(seq.cps.data(), n_cps, pos);
    if (m.end <= pos)
      throw std::runtime_error("splitter: pattern failed to advance at codepoint " +
                               std::to_string(pos));
    bounds.push_back(seq.end_byte[m.end - 1]);
    last_confirmed = m.confirmed;
    pos = m.end;
  }
  if (seq.pending > 0) {
    // The undecoded tail belongs to the in-progress segment.
    const std::int64_t last = static_cast<std::int64_t>(bytes.size()) - 1;
    if (!bounds.empty() && !last_confirmed)
      bounds.back() = last;
    else
      bounds.push_back(last);
  }
  return bounds;
}

GroupCounter::GroupCounter(int group_size) : g_(group_size) {
  if (group_size <= 0)
    throw std::invalid_argument("splitter: group size must be positive, got " +
                                std::to_string(group_size));
}

bool GroupCounter::push(bool segment_has_sentence_end) {
  if (segment_has_sentence_end) {
    count_ = 0;
    return true;
  }
  if (++count_ == g_) {
    count_ = 0;
    return true;
  }
  return false;
}

SegmentMap build_hierarchy(const std::vector<std::int64_t>& stage1_boundaries,
                           const std::string& bytes, const SplitterConfig& cfg) {
  check_group_sizes(cfg);
  SegmentMap map;
  map.boundaries.push_back(stage1_boundaries);

  for (int g : cfg.group_sizes) {
    GroupCounter counter(g);
    std::vector<std::int64_t> kept;
    std::int64_t seg_start = 0;
    for (std::int64_t b : stage1_boundaries) {
      bool sentence_end = false;
      for (std::int64_t i = seg_start; i <= b; ++i)
        if (cfg.sentence_end_bytes.find(bytes[i]) != std::string::npos) {
          sentence_end = true;
          break;
        }
      if (counter.push(sentence_end)) kept.push_back(b);
      seg_start = b + 1;
    }
    map.boundaries.push_back(std::move(kept));
  }
  map.validate(static_cast<std::int64_t>(bytes.size()));
  return map;
}

double measure_compression(const std::string& corpus, const SplitterConfig& cfg,
                           const std::vector<std::int64_t>* tokenizer_lengths) {
  if (corpus.empty()) throw std::invalid_argument("measure_compression: empty corpus");
  double units;
  if (tokenizer_lengths) {
    std::int64_t total = 0;
    for (auto c : *tokenizer_lengths) total += c;
    if (total <= 0)
      throw std::invalid_argument("measure_compression: token counts sum to " +
                                  std::to_string(total));
    units = static_cast<double>(total);
  } else {
    units = static_cast<double>(split_stage1(corpus, cfg).size());
  }
  return static_cast<double>(corpus.size()) / units;
}

StreamSplitter::StreamSplitter(const SplitterConfig& cfg) : re_(cfg.stage1_regex) {}

std::vector<std::int64_t> StreamSplitter::push(unsigned char byte) {
  pending_.push_back(static_cast<char>(byte));
  ++n_bytes_;
  const std::int64_t first_byte = n_bytes_ - static_cast<std::int64_t>(pending_.size());
  // Drain every byte that now resolves to a codepoint or proves invalid.
  std::size_t used = 0;
  while (used < pending_.size()) {
    const auto* p = reinterpret_cast<const unsigned char*>(pending_.data()) + used;
    Utf8Result r = utf8_decode(p, pending_.size() - used);
    if (r.state == Utf8State::incomplete) break;
    if (r.state == Utf8State::ok) {
      cps_.push_back(r.cp);
      used += r.len;
    } else {
      cps_.push_back(kOpaqueBase + *p);
      used += 1;
    }
    cp_end_byte_.push_back(first_byte + static_cast<std::int64_t>(used) - 1);
  }
  pending_.erase(0, used);

  std::vector<std::int64_t> out;
  const std::int64_t n_cps = static_cast<std::int64_t>(cps_.size());
  while (cursor_ < n_cps) {
    Regex::Match m = re_.match_at(cps_.data(), n_cps, cursor_);
    if (!m.confirmed) break;
    if (m.end <= cursor_)
      throw std::runtime_error("splitter: pattern failed to advance at codepoint " +
                               std::to_string(cursor_));
    out.push_back(cp_end_byte_[m.end - 1]);
    cursor_ = m.end;
  }
  return out;
}

}  // namespace aunet
