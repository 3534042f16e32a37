#include "aunet/blocks.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "aunet/ops.hpp"

namespace aunet {

template <typename T>
Tensor<T> block_forward(const Tensor<T>& x, const BlockWeights<T>& w,
                        std::int64_t head_dim, std::int64_t window,
                        std::int64_t pos0, double eps) {
  const std::int64_t dim = x->cols();
  if (dim % head_dim != 0)
    throw std::invalid_argument("block_forward: dim " + std::to_string(dim) +
                                " not divisible by head_dim " + std::to_string(head_dim));
  const std::int64_t n_heads = dim / head_dim;
  const std::int64_t win = window > 0 ? window : std::max<std::int64_t>(x->rows(), 1);

  Tensor<T> xn = rmsnorm(x, w.g_attn, static_cast<T>(eps));
  Tensor<T> q = rope(matmul(xn, w.wq), n_heads, static_cast<T>(kRopeBase), pos0);
  Tensor<T> k = rope(matmul(xn, w.wk), n_heads, static_cast<T>(kRopeBase), pos0);
  Tensor<T> v = matmul(xn, w.wv);
  Tensor<T> att = causal_windowed_attention(q, k, v, n_heads, win);
  Tensor<T> h = add(x, matmul(att, w.wo));

  Tensor<T> hn = rmsnorm(h, w.g_mlp, static_cast<T>(eps));
  Tensor<T> gated = silu_gate(matmul(hn, w.w1), matmul(hn, w.w2));
  return add(h, matmul(gated, w.w3));
}

template <typename T>
Tensor<T> stage_forward(const Tensor<T>& x, const StageWeights<T>& w,
                        std::int64_t pos0) {
  Tensor<T> h = x;
  for (const auto& layer : w.layers)
    h = block_forward(h, layer, w.head_dim, w.window, pos0, w.eps);
  return h;
}

#define AUNET_INSTANTIATE_BLOCKS(T)                                            \
  template Tensor<T> block_forward<T>(const Tensor<T>&, const BlockWeights<T>&, \
                                      std::int64_t, std::int64_t, std::int64_t,   \
                                      double);                                    \
  template Tensor<T> stage_forward<T>(const Tensor<T>&, const StageWeights<T>&, \
                                      std::int64_t);

AUNET_INSTANTIATE_BLOCKS(float)
AUNET_INSTANTIATE_BLOCKS(double)

}  // namespace aunet
