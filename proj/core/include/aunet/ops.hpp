#pragma once

#include <cstdint>
#include <vector>

#include "aunet/tensor.hpp"

namespace aunet {

// All ops are defined for float and double. Matrix arguments are rank 2
// unless stated otherwise; reductions run in a fixed sequential order so
// repeated runs are bit-identical.

// [m, k] x [k, n] -> [m, n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise, shapes must match exactly.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

// -> scalar.
template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);

// silu(u) * v, elementwise.
template <typename T>
Tensor<T> silu_gate(const Tensor<T>& u, const Tensor<T>& v);

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

// x: [s, d], gain: [d]. y = x * gain / sqrt(mean_row(x^2) + eps).
template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gain, T eps);

// out[i, :] = x[idx[i], :]. Backward scatter-adds, so this doubles as an
// embedding lookup with x as the table.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int64_t>& idx);

// out has out_rows rows; out[idx[i], :] += x[i, :], other rows zero.
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& x, const std::vector<std::int64_t>& idx,
                       std::int64_t out_rows);

// Vertical stack; column counts must match.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b);

// out[b, :] = mean of x rows in (bounds[b-1], bounds[b]]; the first segment
// starts at row 0. bounds must be strictly increasing and < rows(x).
template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, const std::vector<std::int64_t>& bounds);

// out[t, :] = src[src_index[t], :] * maps[map_index[t]]. Each map is
// [dc x df]; src is [r x dc]. One row-by-matrix product per output row.
template <typename T>
Tensor<T> indexed_linear(const Tensor<T>& src, const std::vector<Tensor<T>>& maps,
                         const std::vector<std::int64_t>& src_index,
                         const std::vector<std::int64_t>& map_index);

// Rotary positions applied per head to interleaved pairs. Row i uses absolute
// position pos0 + i; pair t of a head rotates by (pos0 + i) * base^(-2t/hd).
template <typename T>
Tensor<T> rope(const Tensor<T>& x, std::int64_t n_heads, T base, std::int64_t pos0);

// Fused multi-head attention. Query i attends keys [max(0, i - window + 1), i];
// pass window >= s for unbounded causal attention. Probabilities are
// recomputed in backward rather than stored.
template <typename T>
Tensor<T> causal_windowed_attention(const Tensor<T>& q, const Tensor<T>& k,
                                    const Tensor<T>& v, std::int64_t n_heads,
                                    std::int64_t window);

// Mean over positions whose target != ignore_index, in nats. Throws if every
// position is ignored.
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, const std::vector<int>& targets,
                               int ignore_index);

}  // namespace aunet
