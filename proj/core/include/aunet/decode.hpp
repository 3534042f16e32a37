#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "aunet/hierarchy.hpp"

namespace aunet {

// Attention cache for one transformer layer: rotated keys and values for every
// row fed so far, overwritten in place when a row is recomputed.
template <typename T>
struct LayerCache {
  std::vector<T> k, v;  // [len x dim], flattened
};

// One tower's caches plus its final-layer output rows. Contracting outputs
// double as pooling sources and skip connections, refinement outputs as the
// coarse rows consumed by the next finer stage.
template <typename T>
struct TowerCache {
  std::vector<LayerCache<T>> layers;
  std::vector<T> out;  // [len x dim], flattened
  std::int64_t len = 0;
};

// Byte-at-a-time decoding against an immutable model. Stage 1 advances every
// step; a deeper stage advances only when the streaming splitter confirms one
// of its boundaries. A boundary may confirm several bytes after the byte it
// sits on, so the stage-1 refinement rows past the newest boundary are
// recomputed once it lands; coarser stages are created in the same step as
// their boundary and never revisited.
template <typename T>
class Decoder {
 public:
  explicit Decoder(const AUNetModel<T>& m);

  // Appends one byte and returns the next-byte logits.
  std::vector<T> step(std::int64_t byte_id);

  std::int64_t n_bytes() const { return static_cast<std::int64_t>(bytes_.size()); }
  // Cached rows at stage s: bytes seen for s = 1, boundaries kept after
  // max_len capping for s >= 2.
  std::int64_t stage_len(int s) const;
  // Kept boundaries for stage s >= 2, in the next finer stage's index space
  // (byte positions for stage 2, stage-2 row indices for stage 3, ...).
  const std::vector<std::int64_t>& stage_bounds(int s) const;

 private:
  void push_tower_row(TowerCache<T>& tc, const StageWeights<T>& w, std::int64_t j, const T* x0);
  void pool_into(const TowerCache<T>& fine, std::int64_t df, std::int64_t prev,
                 std::int64_t bound, const Tensor<T>& proj, std::vector<T>& out);
  void add_upsample(int s, std::int64_t j, T* x);
  const std::vector<std::int64_t>& bounds_of(int s) const {
    return s == 2 ? b2_ : s == 3 ? b3_ : b4_;
  }

  const AUNetModel<T>* m_;
  StreamSplitter split_;
  std::optional<GroupCounter> c3_, c4_;
  std::vector<std::uint8_t> bytes_;
  std::vector<std::int64_t> b2_, b3_, b4_;
  std::vector<TowerCache<T>> down_, up_;
  // scratch rows, reused across steps
  std::vector<T> cur_, xn_, qr_, att_, hrow_, hn_, fa_, fb_, tmp_, wbuf_, px_, sb_, ub_, nr_;
};

// Feeds the prompt through a fresh decoder and appends n sampled bytes.
// temperature <= 0 is greedy (argmax, smallest byte id on ties); otherwise
// bytes are drawn from softmax(logits / temperature) with one generator
// seeded up front. Only byte ids 0..255 are ever emitted.
template <typename T>
std::vector<std::uint8_t> generate(const AUNetModel<T>& m, const std::vector<std::uint8_t>& prompt,
                                   std::int64_t n, double temperature = 0.0,
                                   std::uint64_t seed = 0);

}  // namespace aunet
