#include "aunet/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

namespace aunet {

namespace {

template <typename T>
void screen(const char* op, const TensorData<T>& t) {
  if (!nan_screens_enabled()) return;
  for (T v : t.values)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string(op) + " produced a non-finite value");
}

template <typename T>
Tensor<T> op_result(std::vector<std::int64_t> shape, std::vector<Tensor<T>> parents) {
  auto out = make_tensor<T>(std::move(shape));
  if (grad_enabled()) {
    bool rg = false;
    for (auto& p : parents) rg = rg || p->requires_grad;
    if (rg) {
      out->requires_grad = true;
      out->node = std::make_shared<Node<T>>();
      out->node->parents = std::move(parents);
    }
  }
  return out;
}

void gemm_rm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, float alpha,
             const float* a, std::int64_t lda, const float* b, std::int64_t ldb, float beta,
             float* c, std::int64_t ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

void gemm_rm(bool ta, bool tb, std::int64_t m, std::int64_t n, std::int64_t k, double alpha,
             const double* a, std::int64_t lda, const double* b, std::int64_t ldb, double beta,
             double* c, std::int64_t ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
              static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

void gemv_rm(bool trans, std::int64_t m, std::int64_t n, float alpha, const float* a,
             const float* x, float beta, float* y) {
  cblas_sgemv(CblasRowMajor, trans ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), alpha, a, static_cast<int>(n), x, 1, beta, y, 1);
}

void gemv_rm(bool trans, std::int64_t m, std::int64_t n, double alpha, const double* a,
             const double* x, double beta, double* y) {
  cblas_dgemv(CblasRowMajor, trans ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), alpha, a, static_cast<int>(n), x, 1, beta, y, 1);
}

void ger_rm(std::int64_t m, std::int64_t n, float alpha, const float* x, const float* y,
            float* a) {
  cblas_sger(CblasRowMajor, static_cast<int>(m), static_cast<int>(n), alpha, x, 1, y, 1, a,
             static_cast<int>(n));
}

void ger_rm(std::int64_t m, std::int64_t n, double alpha, const double* x, const double* y,
            double* a) {
  cblas_dger(CblasRowMajor, static_cast<int>(m), static_cast<int>(n), alpha, x, 1, y, 1, a,
             static_cast<int>(n));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t->shape.size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected a rank-2 tensor, got shape " +
                                shape_str(t->shape));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a->shape) + " and " +
                                shape_str(b->shape));
  const std::int64_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto out = op_result<T>({m, n}, {a, b});
  if (m && n && k)
    gemm_rm(false, false, m, n, k, T(1), a->values.data(), k, b->values.data(), n, T(0),
            out->values.data(), n);
  if (out->node) {
    TensorData<T>* pa = a.get();
    TensorData<T>* pb = b.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pa, pb, po, m, k, n] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        if (m && k && n)
          gemm_rm(false, true, m, k, n, T(1), po->grad.data(), n, pb->values.data(), n, T(1),
                  pa->grad.data(), k);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        if (k && n && m)
          gemm_rm(true, false, k, n, m, T(1), pa->values.data(), k, po->grad.data(), n, T(1),
                  pb->grad.data(), n);
      }
    };
  }
  screen("matmul", *out);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape != b->shape)
    throw std::invalid_argument("add: shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  auto out = op_result<T>(a->shape, {a, b});
  const std::size_t n = a->values.size();
  for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
  if (out->node) {
    TensorData<T>* pa = a.get();
    TensorData<T>* pb = b.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pa, pb, po, n] {
      for (TensorData<T>* p : {pa, pb}) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) p->grad[i] += po->grad[i];
      }
    };
  }
  screen("add", *out);
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a->shape != b->shape)
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  auto out = op_result<T>(a->shape, {a, b});
  const std::size_t n = a->values.size();
  for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] * b->values[i];
  if (out->node) {
    TensorData<T>* pa = a.get();
    TensorData<T>* pb = b.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pa, pb, po, n] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) pa->grad[i] += po->grad[i] * pb->values[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) pb->grad[i] += po->grad[i] * pa->values[i];
      }
    };
  }
  screen("mul", *out);
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = op_result<T>(a->shape, {a});
  const std::size_t n = a->values.size();
  for (std::size_t i = 0; i < n; ++i) out->values[i] = a->values[i] * s;
  if (out->node) {
    TensorData<T>* pa = a.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pa, po, s, n] {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) pa->grad[i] += po->grad[i] * s;
    };
  }
  screen("scale", *out);
  return out;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  auto out = op_result<T>({}, {a});
  T acc = T(0);
  for (T v : a->values) acc += v;
  out->values[0] = acc;
  if (out->node) {
    TensorData<T>* pa = a.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pa, po] {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += po->grad[0];
    };
  }
  screen("sum_all", *out);
  return out;
}

template <typename T>
Tensor<T> silu_gate(const Tensor<T>& u, const Tensor<T>& v) {
  if (u->shape != v->shape)
    throw std::invalid_argument("silu_gate: shape mismatch " + shape_str(u->shape) + " vs " +
                                shape_str(v->shape));
  auto out = op_result<T>(u->shape, {u, v});
  const std::size_t n = u->values.size();
  for (std::size_t i = 0; i < n; ++i) {
    T x = u->values[i];
    out->values[i] = x * sigmoid(x) * v->values[i];
  }
  if (out->node) {
    TensorData<T>* pu = u.get();
    TensorData<T>* pv = v.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pu, pv, po, n] {
      if (pu->requires_grad) {
        pu->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          T x = pu->values[i];
          T s = sigmoid(x);
          pu->grad[i] += po->grad[i] * pv->values[i] * (s + x * s * (T(1) - s));
        }
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          T x = pu->values[i];
          pv->grad[i] += po->grad[i] * x * sigmoid(x);
        }
      }
    };
  }
  screen("silu_gate", *out);
  return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_rank2(x, "softmax_rows");
  const std::int64_t s = x->shape[0], d = x->shape[1];
  if (d == 0) throw std::invalid_argument("softmax_rows: zero columns");
  auto out = op_result<T>(x->shape, {x});
  for (std::int64_t i = 0; i < s; ++i) {
    const T* row = x->values.data() + i * d;
    T* orow = out->values.data() + i * d;
    T m = row[0];
    for (std::int64_t j = 1; j < d; ++j) m = std::max(m, row[j]);
    T z = T(0);
    for (std::int64_t j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - m);
      z += orow[j];
    }
    for (std::int64_t j = 0; j < d; ++j) orow[j] /= z;
  }
  if (out->node) {
    TensorData<T>* px = x.get();
    TensorData<T>* po = out.get();
    out->node->backward = [px, po, s, d] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::int64_t i = 0; i < s; ++i) {
        const T* y = po->values.data() + i * d;
        const T* gy = po->grad.data() + i * d;
        T* gx = px->grad.data() + i * d;
        T dot = T(0);
        for (std::int64_t j = 0; j < d; ++j) dot += gy[j] * y[j];
        for (std::int64_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
      }
    };
  }
  screen("softmax_rows", *out);
  return out;
}

template <typename T>
Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& gain, T eps) {
  require_rank2(x, "rmsnorm");
  const std::int64_t s = x->shape[0], d = x->shape[1];
  if (gain->shape.size() != 1 || gain->shape[0] != d)
    throw std::invalid_argument("rmsnorm: gain shape " + shape_str(gain->shape) +
                                " does not match feature dim " + std::to_string(d));
  auto out = op_result<T>(x->shape, {x, gain});
  for (std::int64_t i = 0; i < s; ++i) {
    const T* row = x->values.data() + i * d;
    T* orow = out->values.data() + i * d;
    T ms = T(0);
    for (std::int64_t j = 0; j < d; ++j) ms += row[j] * row[j];
    T r = T(1) / std::sqrt(ms / T(d) + eps);
    for (std::int64_t j = 0; j < d; ++j) orow[j] = row[j] * gain->values[j] * r;
  }
  if (out->node) {
    TensorData<T>* px = x.get();
    TensorData<T>* pg = gain.get();
    TensorData<T>* po = out.get();
    out->node->backward = [px, pg, po, s, d, eps] {
      if (px->requires_grad) px->ensure_grad();
      if (pg->requires_grad) pg->ensure_grad();
      for (std::int64_t i = 0; i < s; ++i) {
        const T* row = px->values.data() + i * d;
        const T* gy = po->grad.data() + i * d;
        T ms = T(0);
        for (std::int64_t j = 0; j < d; ++j) ms += row[j] * row[j];
        T r = T(1) / std::sqrt(ms / T(d) + eps);
        if (px->requires_grad) {
          T dot = T(0);
          for (std::int64_t j = 0; j < d; ++j) dot += gy[j] * pg->values[j] * row[j];
          T c = r * r * r * dot / T(d);
          T* gx = px->grad.data() + i * d;
          for (std::int64_t j = 0; j < d; ++j)
            gx[j] += r * gy[j] * pg->values[j] - c * row[j];
        }
        if (pg->requires_grad)
          for (std::int64_t j = 0; j < d; ++j) pg->grad[j] += gy[j] * row[j] * r;
      }
    };
  }
  screen("rmsnorm", *out);
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int64_t>& idx) {
  require_rank2(x, "gather_rows");
  const std::int64_t rows = x->shape[0], d = x->shape[1];
  for (auto i : idx)
    if (i < 0 || i >= rows)
      throw std::out_of_range("gather_rows: index " + std::to_string(i) + " out of range for " +
                              std::to_string(rows) + " rows");
  auto out = op_result<T>({static_cast<std::int64_t>(idx.size()), d}, {x});
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(x->values.data() + idx[i] * d, d, out->values.data() + i * d);
  if (out->node) {
    TensorData<T>* px = x.get();
    TensorData<T>* po = out.get();
    out->node->backward = [px, po, idx, d] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const T* g = po->grad.data() + i * d;
        T* dst = px->grad.data() + idx[i] * d;
        for (std::int64_t j = 0; j < d; ++j) dst[j] += g[j];
      }
    };
  }
  screen("gather_rows", *out);
  return out;
}

template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& x, const std::vector<std::int64_t>& idx,
                       std::int64_t out_rows) {
  require_rank2(x, "scatter_rows");
  const std::int64_t d = x->shape[1];
  if (static_cast<std::int64_t>(idx.size()) != x->shape[0])
    throw std::invalid_argument("scatter_rows: " + std::to_string(idx.size()) +
                                " indices for " + std::to_string(x->shape[0]) + " rows");
  for (auto i : idx)
    if (i < 0 || i >= out_rows)
      throw std::out_of_range("scatter_rows: index " + std::to_string(i) +
                              " out of range for " + std::to_string(out_rows) + " rows");
  auto out = op_result<T>({out_rows, d}, {x});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const T* src = x->values.data() + i * d;
    T* dst = out->values.data() + idx[i] * d;
    for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
  }
  if (out->node) {
    TensorData<T>* px = x.get();
    TensorData<T>* po = out.get();
    out->node->backward = [px, po, idx, d] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const T* g = po->grad.data() + idx[i] * d;
        T* dst = px->grad.data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) dst[j] += g[j];
      }
    };
  }
  screen("scatter_rows", *out);
  return out;
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  if (a->shape[1] != b->shape[1])
    throw std::invalid_argument("concat_rows: column mismatch " + shape_str(a->shape) + " vs " +
                                shape_str(b->shape));
  const std::int64_t ra = a->shape[0], rb = b->shape[0], d = a->shape[1];
  auto out = op_result<T>({ra + rb, d}, {a, b});
  std::copy(a->values.begin(), a->values.end(), out->values.begin());
  std::copy(b->values.begin(), b->values.end(), out->values.begin() + ra * d);
  if (out->node) {
    TensorData<T>* pa = a.get();
    TensorData<T>* pb = b.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pa, pb, po, ra, rb, d] {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::int64_t i = 0; i < ra * d; ++i) pa->grad[i] += po->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::int64_t i = 0; i < rb * d; ++i) pb->grad[i] += po->grad[ra * d + i];
      }
    };
  }
  screen("concat_rows", *out);
  return out;
}

template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, const std::vector<std::int64_t>& bounds) {
  require_rank2(x, "segment_mean");
  const std::int64_t rows = x->shape[0], d = x->shape[1];
  std::int64_t prev = -1;
  for (auto b : bounds) {
    if (b <= prev || b >= rows)
      throw std::invalid_argument("segment_mean: bad boundary " + std::to_string(b) + " for " +
                                  std::to_string(rows) + " rows");
    prev = b;
  }
  const std::int64_t nb = static_cast<std::int64_t>(bounds.size());
  auto out = op_result<T>({nb, d}, {x});
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::int64_t lo = b ? bounds[b - 1] + 1 : 0, hi = bounds[b];
    const T inv = T(1) / static_cast<T>(hi - lo + 1);
    T* dst = out->values.data() + b * d;
    for (std::int64_t i = lo; i <= hi; ++i) {
      const T* src = x->values.data() + i * d;
      for (std::int64_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    for (std::int64_t j = 0; j < d; ++j) dst[j] *= inv;
  }
  if (out->node) {
    TensorData<T>* px = x.get();
    TensorData<T>* po = out.get();
    out->node->backward = [px, po, bounds, nb, d] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (std::int64_t b = 0; b < nb; ++b) {
        const std::int64_t lo = b ? bounds[b - 1] + 1 : 0, hi = bounds[b];
        const T inv = T(1) / static_cast<T>(hi - lo + 1);
        const T* g = po->grad.data() + b * d;
        for (std::int64_t i = lo; i <= hi; ++i) {
          T* dst = px->grad.data() + i * d;
          for (std::int64_t j = 0; j < d; ++j) dst[j] += g[j] * inv;
        }
      }
    };
  }
  screen("segment_mean", *out);
  return out;
}

template <typename T>
Tensor<T> indexed_linear(const Tensor<T>& src, const std::vector<Tensor<T>>& maps,
                         const std::vector<std::int64_t>& src_index,
                         const std::vector<std::int64_t>& map_index) {
  require_rank2(src, "indexed_linear");
  if (maps.empty()) throw std::invalid_argument("indexed_linear: no maps");
  const std::int64_t dc = src->shape[1];
  const std::int64_t df = maps[0]->shape.size() == 2 ? maps[0]->shape[1] : -1;
  for (const auto& m : maps)
    if (m->shape.size() != 2 || m->shape[0] != dc || m->shape[1] != df)
      throw std::invalid_argument("indexed_linear: map shape " + shape_str(m->shape) +
                                  " does not match [" + std::to_string(dc) + " x " +
                                  std::to_string(df) + "]");
  if (src_index.size() != map_index.size())
    throw std::invalid_argument("indexed_linear: index lists differ in length");
  const std::int64_t s = static_cast<std::int64_t>(src_index.size());
  for (std::int64_t t = 0; t < s; ++t) {
    if (src_index[t] < 0 || src_index[t] >= src->shape[0])
      throw std::out_of_range("indexed_linear: source index " + std::to_string(src_index[t]) +
                              " out of range");
    if (map_index[t] < 0 || map_index[t] >= static_cast<std::int64_t>(maps.size()))
      throw std::out_of_range("indexed_linear: map index " + std::to_string(map_index[t]) +
                              " out of range");
  }
  std::vector<Tensor<T>> parents = {src};
  parents.insert(parents.end(), maps.begin(), maps.end());
  auto out = op_result<T>({s, df}, std::move(parents));
  for (std::int64_t t = 0; t < s; ++t)
    gemv_rm(true, dc, df, T(1), maps[map_index[t]]->values.data(),
            src->values.data() + src_index[t] * dc, T(0), out->values.data() + t * df);
  if (out->node) {
    TensorData<T>* ps = src.get();
    TensorData<T>* po = out.get();
    std::vector<TensorData<T>*> pm;
    for (const auto& m : maps) pm.push_back(m.get());
    out->node->backward = [ps, po, pm, src_index, map_index, s, dc, df] {
      for (std::int64_t t = 0; t < s; ++t) {
        const T* g = po->grad.data() + t * df;
        TensorData<T>* m = pm[map_index[t]];
        if (ps->requires_grad) {
          ps->ensure_grad();
          gemv_rm(false, dc, df, T(1), m->values.data(), g, T(1),
                  ps->grad.data() + src_index[t] * dc);
        }
        if (m->requires_grad) {
          m->ensure_grad();
          ger_rm(dc, df, T(1), ps->values.data() + src_index[t] * dc, g, m->grad.data());
        }
      }
    };
  }
  screen("indexed_linear", *out);
  return out;
}

template <typename T>
Tensor<T> rope(const Tensor<T>& x, std::int64_t n_heads, T base, std::int64_t pos0) {
  require_rank2(x, "rope");
  const std::int64_t s = x->shape[0], d = x->shape[1];
  if (n_heads < 1 || d % n_heads != 0)
    throw std::invalid_argument("rope: " + std::to_string(n_heads) + " heads do not divide dim " +
                                std::to_string(d));
  const std::int64_t hd = d / n_heads;
  if (hd % 2 != 0)
    throw std::invalid_argument("rope: head dim " + std::to_string(hd) + " must be even");
  auto rotate = [s, d, n_heads, hd, base, pos0](const T* in, T* dst, bool inverse) {
    for (std::int64_t i = 0; i < s; ++i) {
      const double p = static_cast<double>(pos0 + i);
      for (std::int64_t h = 0; h < n_heads; ++h) {
        const std::int64_t off = i * d + h * hd;
        for (std::int64_t t = 0; t < hd / 2; ++t) {
          const double theta =
              p * std::pow(static_cast<double>(base), -2.0 * static_cast<double>(t) / hd);
          const T c = static_cast<T>(std::cos(theta));
          const T sn = static_cast<T>(inverse ? -std::sin(theta) : std::sin(theta));
          const T a = in[off + 2 * t];
          const T b = in[off + 2 * t + 1];
          dst[off + 2 * t] += a * c - b * sn;
          dst[off + 2 * t + 1] += a * sn + b * c;
        }
      }
    }
  };
  auto out = op_result<T>(x->shape, {x});
  rotate(x->values.data(), out->values.data(), false);
  if (out->node) {
    TensorData<T>* px = x.get();
    TensorData<T>* po = out.get();
    out->node->backward = [px, po, rotate] {
      if (!px->requires_grad) return;
      px->ensure_grad();
      rotate(po->grad.data(), px->grad.data(), true);
    };
  }
  screen("rope", *out);
  return out;
}

template <typename T>
Tensor<T> causal_windowed_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                    std::int64_t n_heads, std::int64_t window) {
  require_rank2(q, "causal_windowed_attention");
  if (q->shape != k->shape || q->shape != v->shape)
    throw std::invalid_argument("causal_windowed_attention: q " + shape_str(q->shape) + ", k " +
                                shape_str(k->shape) + ", v " + shape_str(v->shape) +
                                " must match");
  const std::int64_t s = q->shape[0], d = q->shape[1];
  if (n_heads < 1 || d % n_heads != 0)
    throw std::invalid_argument("causal_windowed_attention: " + std::to_string(n_heads) +
                                " heads do not divide dim " + std::to_string(d));
  if (window < 1)
    throw std::invalid_argument("causal_windowed_attention: window must be at least 1, got " +
                                std::to_string(window));
  const std::int64_t hd = d / n_heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(hd));

  auto out = op_result<T>(q->shape, {q, k, v});
  {
    std::vector<T> buf;
    for (std::int64_t h = 0; h < n_heads; ++h) {
      const std::int64_t co = h * hd;
      for (std::int64_t i = 0; i < s; ++i) {
        const std::int64_t j0 = (i + 1 > window) ? i + 1 - window : 0;
        const std::int64_t span = i - j0 + 1;
        buf.resize(span);
        const T* qi = q->values.data() + i * d + co;
        T m = -std::numeric_limits<T>::infinity();
        for (std::int64_t j = j0; j <= i; ++j) {
          const T* kj = k->values.data() + j * d + co;
          T dot = T(0);
          for (std::int64_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
          buf[j - j0] = dot * sc;
          m = std::max(m, buf[j - j0]);
        }
        T z = T(0);
        for (std::int64_t j = 0; j < span; ++j) {
          buf[j] = std::exp(buf[j] - m);
          z += buf[j];
        }
        T* oi = out->values.data() + i * d + co;
        for (std::int64_t j = j0; j <= i; ++j) {
          const T w = buf[j - j0] / z;
          const T* vj = v->values.data() + j * d + co;
          for (std::int64_t c = 0; c < hd; ++c) oi[c] += w * vj[c];
        }
      }
    }
  }
  if (out->node) {
    TensorData<T>* pq = q.get();
    TensorData<T>* pk = k.get();
    TensorData<T>* pv = v.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pq, pk, pv, po, s, d, hd, n_heads, window, sc] {
      pq->ensure_grad();
      pk->ensure_grad();
      pv->ensure_grad();
      std::vector<T> w, dots;
      for (std::int64_t h = 0; h < n_heads; ++h) {
        const std::int64_t co = h * hd;
        for (std::int64_t i = 0; i < s; ++i) {
          const std::int64_t j0 = (i + 1 > window) ? i + 1 - window : 0;
          const std::int64_t span = i - j0 + 1;
          w.resize(span);
          dots.resize(span);
          const T* qi = pq->values.data() + i * d + co;
          T m = -std::numeric_limits<T>::infinity();
          for (std::int64_t j = j0; j <= i; ++j) {
            const T* kj = pk->values.data() + j * d + co;
            T dot = T(0);
            for (std::int64_t c = 0; c < hd; ++c) dot += qi[c] * kj[c];
            w[j - j0] = dot * sc;
            m = std::max(m, w[j - j0]);
          }
          T z = T(0);
          for (std::int64_t j = 0; j < span; ++j) {
            w[j] = std::exp(w[j] - m);
            z += w[j];
          }
          for (std::int64_t j = 0; j < span; ++j) w[j] /= z;

          const T* gi = po->grad.data() + i * d + co;
          T dsum = T(0);
          for (std::int64_t j = j0; j <= i; ++j) {
            const T* vj = pv->values.data() + j * d + co;
            T dot = T(0);
            for (std::int64_t c = 0; c < hd; ++c) dot += gi[c] * vj[c];
            dots[j - j0] = dot;
            dsum += w[j - j0] * dot;
            T* gv = pv->grad.data() + j * d + co;
            for (std::int64_t c = 0; c < hd; ++c) gv[c] += w[j - j0] * gi[c];
          }
          T* gq = pq->grad.data() + i * d + co;
          for (std::int64_t j = j0; j <= i; ++j) {
            const T ds = w[j - j0] * (dots[j - j0] - dsum) * sc;
            const T* kj = pk->values.data() + j * d + co;
            T* gk = pk->grad.data() + j * d + co;
            for (std::int64_t c = 0; c < hd; ++c) {
              gq[c] += ds * kj[c];
              gk[c] += ds * qi[c];
            }
          }
        }
      }
    };
  }
  screen("causal_windowed_attention", *out);
  return out;
}

template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& logits, const std::vector<int>& targets,
                               int ignore_index) {
  require_rank2(logits, "cross_entropy");
  const std::int64_t s = logits->shape[0], vdim = logits->shape[1];
  if (static_cast<std::int64_t>(targets.size()) != s)
    throw std::invalid_argument("cross_entropy: " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(s) + " rows");
  std::int64_t kept = 0;
  for (int t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || t >= vdim)
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) +
                              " out of range for " + std::to_string(vdim) + " classes");
    ++kept;
  }
  if (kept == 0) throw std::invalid_argument("cross_entropy: all positions ignored");

  auto out = op_result<T>({}, {logits});
  T acc = T(0);
  for (std::int64_t i = 0; i < s; ++i) {
    if (targets[i] == ignore_index) continue;
    const T* row = logits->values.data() + i * vdim;
    T m = row[0];
    for (std::int64_t j = 1; j < vdim; ++j) m = std::max(m, row[j]);
    T z = T(0);
    for (std::int64_t j = 0; j < vdim; ++j) z += std::exp(row[j] - m);
    acc += m + std::log(z) - row[targets[i]];
  }
  out->values[0] = acc / static_cast<T>(kept);
  if (out->node) {
    TensorData<T>* pl = logits.get();
    TensorData<T>* po = out.get();
    out->node->backward = [pl, po, targets, ignore_index, s, vdim, kept] {
      if (!pl->requires_grad) return;
      pl->ensure_grad();
      const T g = po->grad[0] / static_cast<T>(kept);
      for (std::int64_t i = 0; i < s; ++i) {
        if (targets[i] == ignore_index) continue;
        const T* row = pl->values.data() + i * vdim;
        T* gr = pl->grad.data() + i * vdim;
        T m = row[0];
        for (std::int64_t j = 1; j < vdim; ++j) m = std::max(m, row[j]);
        T z = T(0);
        for (std::int64_t j = 0; j < vdim; ++j) z += std::exp(row[j] - m);
        for (std::int64_t j = 0; j < vdim; ++j) {
          T p = std::exp(row[j] - m) / z;
          gr[j] += g * (p - (j == targets[i] ? T(1) : T(0)));
        }
      }
    };
  }
  screen("cross_entropy", *out);
  return out;
}

#define AUNET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                           \
  template Tensor<T> sum_all<T>(const Tensor<T>&);                                            \
  template Tensor<T> silu_gate<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                       \
  template Tensor<T> rmsnorm<T>(const Tensor<T>&, const Tensor<T>&, T);                       \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, const std::vector<std::int64_t>&);      \
  template Tensor<T> scatter_rows<T>(const Tensor<T>&, const std::vector<std::int64_t>&,     \
                                     std::int64_t);                                           \
  template Tensor<T> concat_rows<T>(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> segment_mean<T>(const Tensor<T>&, const std::vector<std::int64_t>&);     \
  template Tensor<T> indexed_linear<T>(const Tensor<T>&, const std::vector<Tensor<T>>&,       \
                                       const std::vector<std::int64_t>&,                      \
                                       const std::vector<std::int64_t>&);                     \
  template Tensor<T> rope<T>(const Tensor<T>&, std::int64_t, T, std::int64_t);                \
  template Tensor<T> causal_windowed_attention<T>(const Tensor<T>&, const Tensor<T>&,         \
                                                  const Tensor<T>&, std::int64_t,             \
                                                  std::int64_t);                              \
  template Tensor<T> cross_entropy_logits<T>(const Tensor<T>&, const std::vector<int>&, int);

AUNET_INSTANTIATE_OPS(float)
AUNET_INSTANTIATE_OPS(double)

#undef AUNET_INSTANTIATE_OPS

}  // namespace aunet
