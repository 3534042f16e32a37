#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aunet/hierarchy.hpp"

namespace aunet {

// Document separator and padding byte; 0x00 is reserved for it.
inline constexpr std::uint8_t kSepByte = 0;
inline constexpr int kIgnoreTarget = -1;

struct TrainConfig {
  double lr_max = 1e-3;
  std::int64_t bsz = 8192;  // bytes per optimizer step
  std::int64_t total_steps = 1000;
  double warmup_fraction = 0.10;
  double lr_min_fraction = 0.01;
  double weight_decay = 0.1;
  double grad_clip = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::int64_t seq_len = 512;
  std::int64_t eval_interval = 200;
  std::int64_t checkpoint_interval = 0;  // 0 = only after the final step
  double heldout_fraction = 0.02;        // final slice of the corpus, fixed

  void validate() const;  // throws std::invalid_argument
  bool operator==(const TrainConfig&) const = default;
};

// Linear warmup to lr_max over warmup_fraction of the run, then cosine decay
// to lr_min_fraction * lr_max at total_steps.
double cosine_lr(std::int64_t step, const TrainConfig& cfg);

// Every document followed by the separator byte.
std::vector<std::uint8_t> join_docs(const std::vector<std::vector<std::uint8_t>>& docs);

struct PackedBatch {
  std::int64_t rows = 0;
  std::int64_t seq = 0;
  std::vector<std::uint8_t> bytes;  // rows * seq, padded with kSepByte
  std::vector<int> targets;         // rows * seq; kIgnoreTarget where masked
  std::vector<SegmentMap> segmaps;  // per row, over that row's padded bytes
  std::int64_t real_bytes = 0;      // excludes padding
  std::int64_t live_targets = 0;
};

// Next-byte targets for one row: the final position, padding, and positions a
// stage cap truncated away are masked out.
std::vector<int> row_targets(const std::uint8_t* row, std::int64_t real_len, std::int64_t seq,
                             const SegmentMap& segmap, const AUNetConfig& cfg);

// Chops a byte stream into fixed rows and serves them in a seeded shuffled
// order, reshuffling each epoch. The stream must cover at least one batch.
class Packer {
 public:
  Packer(std::vector<std::uint8_t> stream, const AUNetConfig& cfg, std::int64_t seq,
         std::int64_t rows_per_batch, std::uint64_t seed);

  PackedBatch next();
  std::int64_t n_rows() const { return n_rows_; }

 private:
  void refill();

  std::vector<std::uint8_t> stream_;
  AUNetConfig cfg_;
  std::int64_t seq_ = 0;
  std::int64_t rows_per_batch_ = 0;
  std::int64_t n_rows_ = 0;
  std::mt19937_64 rng_;
  std::deque<std::int64_t> order_;
};

// Decoupled weight decay, global-norm gradient clipping, bias-corrected
// moments kept in double. Empty grads count as zero.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor<T>>> params, const TrainConfig& cfg);

  void step(double lr);  // throws std::runtime_error on a non-finite gradient

  double last_grad_norm() const { return norm_; }
  double last_clip_scale() const { return clip_; }
  std::int64_t steps_done() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<std::vector<double>> m_, v_;
  TrainConfig cfg_;
  std::int64_t t_ = 0;
  double norm_ = 0;
  double clip_ = 1;
};

// Mean cross-entropy of next-byte prediction in bits, over unmasked positions
// of consecutive seq-sized rows.
template <typename T>
double bits_per_byte(const AUNetModel<T>& m, const std::vector<std::uint8_t>& bytes,
                     std::int64_t seq);

struct TrainResult {
  std::int64_t steps = 0;
  double final_loss = 0;  // nats per byte, last step
  double final_bpb = 0;   // last held-out evaluation
};

struct TrainCallbacks {
  std::function<void(const std::string&)> metrics;    // one key=value line per step
  std::function<void(std::int64_t)> checkpoint;       // called after good steps only
};

// Single-threaded training loop over a joined corpus. The final
// heldout_fraction of the corpus is never trained on and feeds the periodic
// bits-per-byte evaluation. A non-finite loss aborts before the checkpoint
// callback runs, so the last written checkpoint predates the divergence.
template <typename T>
TrainResult train(AUNetModel<T>& m, const TrainConfig& tc,
                  const std::vector<std::uint8_t>& corpus, const TrainCallbacks& cb = {});

}  // namespace aunet
