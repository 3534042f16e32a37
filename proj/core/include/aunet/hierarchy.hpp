#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "aunet/blocks.hpp"
#include "aunet/splitter.hpp"
#include "aunet/tensor.hpp"

namespace aunet {

enum class Pooling { select, average };
enum class Upsampling { simple, repeat, multilinear };

struct StageSpec {
  std::int64_t dim = 0;
  std::int64_t n_layers = 0;
  std::int64_t ffn = 0;
  std::int64_t head_dim = 64;
  std::int64_t window = 0;  // 0 = full causal; stage 1 must be finite
  std::int64_t max_len = 0;

  bool operator==(const StageSpec&) const = default;
};

struct AUNetConfig {
  int n_stages = 2;
  std::vector<StageSpec> stages;
  Pooling pooling = Pooling::select;
  Upsampling upsampling = Upsampling::multilinear;
  std::int64_t multilinear_max_positions = 16;
  std::int64_t vocab = 256;
  double norm_eps = 1e-5;
  SplitterConfig splitter;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const AUNetConfig&) const = default;
};

// Dimension ladder from a main width: D/4, D, 1.5D, 2.25D.
std::vector<std::int64_t> dim_ladder(std::int64_t main_dim, int n_stages);

// The ~1.3e9 parameter two-stage configuration (512/2048 wide, 3+25 layers).
AUNetConfig preset_1b(int n_stages = 2);

// Down-sized preset for desk-scale experiments, ~main_dim wide at stage 2.
AUNetConfig preset_small(int n_stages, std::int64_t main_dim, std::int64_t seq_len);

// Analytic parameter count from the configuration alone.
std::int64_t param_count(const AUNetConfig& cfg);

template <typename T>
struct UpsampleWeights {
  std::vector<Tensor<T>> maps;  // multilinear: P maps [dc x df]
  Tensor<T> shared;             // repeat: [dc x df]
  Tensor<T> bias;               // repeat: [P x df], added by within-segment offset
  Tensor<T> proj;               // simple: [dc x df]
  Tensor<T> init;               // [1 x dc], stands in for the missing first coarse vector
};

template <typename T>
struct AUNetModel {
  AUNetConfig cfg;
  Tensor<T> embed;                          // [vocab x d1]
  std::vector<StageWeights<T>> down;        // n_stages towers (deepest last)
  std::vector<StageWeights<T>> up;          // n_stages-1 refinement towers
  std::vector<Tensor<T>> pool_proj;         // [d_s x d_{s+1}] per contraction
  std::vector<UpsampleWeights<T>> ups;      // per expansion step
  Tensor<T> final_gain;                     // [d1]
  Tensor<T> head;                           // [d1 x vocab]
};

template <typename T>
AUNetModel<T> make_model(const AUNetConfig& cfg, std::uint64_t seed);

// Stable name -> tensor pairs; iteration order is the checkpoint layout.
template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_params(AUNetModel<T>& m);

template <typename T>
Tensor<T> pool_select(const Tensor<T>& h, const std::vector<std::int64_t>& boundaries,
                      const Tensor<T>& proj);

template <typename T>
Tensor<T> pool_average(const Tensor<T>& h, const std::vector<std::int64_t>& boundaries,
                       const Tensor<T>& proj);

// Coarse vector b fills the segment after its own: fine position t reads the
// coarse row whose boundary is the largest one <= t-1 (the learned initial
// vector when there is none), through the map for its within-segment offset.
template <typename T>
Tensor<T> upsample_multilinear(const Tensor<T>& c, const std::vector<std::int64_t>& boundaries,
                               std::int64_t s, const UpsampleWeights<T>& w);

template <typename T>
Tensor<T> upsample_repeat(const Tensor<T>& c, const std::vector<std::int64_t>& boundaries,
                          std::int64_t s, const UpsampleWeights<T>& w);

// Coarse vector b lands (projected) at fine index boundaries[b]; rows between
// boundaries stay zero.
template <typename T>
Tensor<T> upsample_simple(const Tensor<T>& c, const std::vector<std::int64_t>& boundaries,
                          std::int64_t s, const UpsampleWeights<T>& w);

// Observation points for tests: called after each contracting tower and after
// each expanding refinement (the deepest tower output counts as expanded).
// Return a replacement activation, or the input unchanged.
template <typename T>
struct ForwardHooks {
  std::function<Tensor<T>(int stage, const Tensor<T>&)> after_contract;
  std::function<Tensor<T>(int stage, const Tensor<T>&)> after_expand;
};

// Boundary lists per stage after max_len capping, in each finer level's own
// index space (byte positions for stage 2, stage-2 token positions for
// stage 3, ...). Shared between batch forward and incremental decode.
std::vector<std::vector<std::int64_t>> capped_stage_indices(const SegmentMap& segmap,
                                                            const AUNetConfig& cfg);

template <typename T>
Tensor<T> aunet_forward(const AUNetModel<T>& m, const std::vector<std::uint8_t>& bytes,
                        const SegmentMap& segmap, const ForwardHooks<T>& hooks = {});

}  // namespace aunet
