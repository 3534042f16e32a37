#pragma once

#include <cstdint>
#include <vector>

#include "aunet/tensor.hpp"

namespace aunet {

inline constexpr double kRmsNormEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;

template <typename T>
struct BlockWeights {
  Tensor<T> wq, wk, wv, wo;  // [dim x dim]
  Tensor<T> w1, w2;          // [dim x ffn]
  Tensor<T> w3;              // [ffn x dim]
  Tensor<T> g_attn, g_mlp;   // [dim]
};

// One transformer tower. window == 0 means full causal attention.
template <typename T>
struct StageWeights {
  std::vector<BlockWeights<T>> layers;
  std::int64_t head_dim = 64;
  std::int64_t window = 0;
  double eps = kRmsNormEps;
};

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockWeights<T>& w,
                        std::int64_t head_dim, std::int64_t window,
                        std::int64_t pos0 = 0, double eps = kRmsNormEps);

// pos0 offsets the rotary positions; decoding uses it to resume mid-sequence.
template <typename T>
Tensor<T> stage_forward(const Tensor<T>& x, const StageWeights<T>& w,
                        std::int64_t pos0 = 0);

}  // namespace aunet
