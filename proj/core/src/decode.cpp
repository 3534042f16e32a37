#include "aunet/decode.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace aunet {

namespace {

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

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void rms_row(const T* x, const T* gain, std::int64_t d, T* out, double eps) {
  T ms = T(0);
  for (std::int64_t j = 0; j < d; ++j) ms += x[j] * x[j];
  T r = T(1) / std::sqrt(ms / T(d) + static_cast<T>(eps));
  for (std::int64_t j = 0; j < d; ++j) out[j] = x[j] * gain[j] * r;
}

template <typename T>
void rope_row(T* x, std::int64_t n_heads, std::int64_t hd, std::int64_t pos) {
  const double p = static_cast<double>(pos);
  for (std::int64_t h = 0; h < n_heads; ++h) {
    T* row = x + h * hd;
    for (std::int64_t t = 0; t < hd / 2; ++t) {
      const double theta =
          p * std::pow(kRopeBase, -2.0 * static_cast<double>(t) / hd);
      const T c = static_cast<T>(std::cos(theta));
      const T sn = static_cast<T>(std::sin(theta));
      const T a = row[2 * t];
      const T b = row[2 * t + 1];
      row[2 * t] = a * c - b * sn;
      row[2 * t + 1] = a * sn + b * c;
    }
  }
}

}  // namespace

template <typename T>
Decoder<T>::Decoder(const AUNetModel<T>& m) : m_(&m), split_(m.cfg.splitter) {
  m.cfg.validate();
  const int n = m.cfg.n_stages;
  if (static_cast<int>(m.down.size()) != n || static_cast<int>(m.up.size()) != n - 1)
    throw std::invalid_argument("decoder: model holds " + std::to_string(m.down.size()) + "+" +
                                std::to_string(m.up.size()) + " towers for " + std::to_string(n) +
                                " stages");
  down_.resize(n);
  for (int s = 0; s < n; ++s) down_[s].layers.resize(m.down[s].layers.size());
  up_.resize(n - 1);
  for (int s = 0; s + 1 < n; ++s) up_[s].layers.resize(m.up[s].layers.size());
  if (n >= 3) c3_.emplace(m.cfg.splitter.group_sizes.at(0));
  if (n >= 4) c4_.emplace(m.cfg.splitter.group_sizes.at(1));
}

template <typename T>
std::int64_t Decoder<T>::stage_len(int s) const {
  if (s < 1 || s > m_->cfg.n_stages)
    throw std::out_of_range("stage_len: stage " + std::to_string(s) + " of " +
                            std::to_string(m_->cfg.n_stages));
  if (s == 1) return n_bytes();
  return static_cast<std::int64_t>(bounds_of(s).size());
}

template <typename T>
const std::vector<std::int64_t>& Decoder<T>::stage_bounds(int s) const {
  if (s < 2 || s > m_->cfg.n_stages)
    throw std::out_of_range("stage_bounds: stage " + std::to_string(s) + " of " +
                            std::to_string(m_->cfg.n_stages));
  return bounds_of(s);
}

// Runs one input row through every layer of a tower, caching rotated keys and
// values at row j (overwriting them on a rewrite) and storing the final
// activation in tc.out.
template <typename T>
void Decoder<T>::push_tower_row(TowerCache<T>& tc, const StageWeights<T>& w, std::int64_t j,
                                const T* x0) {
  const std::int64_t d = w.layers[0].wq->shape[0];
  const std::int64_t ffn = w.layers[0].w1->shape[1];
  const std::int64_t hd = w.head_dim;
  const std::int64_t nh = d / hd;
  const T sc = T(1) / std::sqrt(static_cast<T>(hd));
  const std::int64_t win = w.window > 0 ? w.window : j + 1;
  const std::int64_t j0 = (j + 1 > win) ? j + 1 - win : 0;
  const std::int64_t span = j - j0 + 1;

  cur_.assign(x0, x0 + d);
  xn_.resize(d);
  qr_.resize(d);
  att_.resize(d);
  hrow_.resize(d);
  hn_.resize(d);
  tmp_.resize(d);
  fa_.resize(ffn);
  fb_.resize(ffn);
  wbuf_.resize(span);

  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const BlockWeights<T>& bw = w.layers[l];
    LayerCache<T>& lc = tc.layers[l];
    if (static_cast<std::int64_t>(lc.k.size()) < (j + 1) * d) {
      lc.k.resize((j + 1) * d);
      lc.v.resize((j + 1) * d);
    }
    rms_row(cur_.data(), bw.g_attn->values.data(), d, xn_.data(), w.eps);
    gemv_rm(true, d, d, T(1), bw.wq->values.data(), xn_.data(), T(0), qr_.data());
    rope_row(qr_.data(), nh, hd, j);
    T* krow = lc.k.data() + j * d;
    gemv_rm(true, d, d, T(1), bw.wk->values.data(), xn_.data(), T(0), krow);
    rope_row(krow, nh, hd, j);
    gemv_rm(true, d, d, T(1), bw.wv->values.data(), xn_.data(), T(0), lc.v.data() + j * d);

    std::fill(att_.begin(), att_.end(), T(0));
    for (std::int64_t h = 0; h < nh; ++h) {
      const std::int64_t co = h * hd;
      const T* qi = qr_.data() + co;
      T m = -std::numeric_limits<T>::infinity();
      for (std::int64_t i = j0; i <= j; ++i) {
        const T* ki = lc.k.data() + i * d + co;
        T dot = T(0);
        for (std::int64_t c = 0; c < hd; ++c) dot += qi[c] * ki[c];
        wbuf_[i - j0] = dot * sc;
        m = std::max(m, wbuf_[i - j0]);
      }
      T z = T(0);
      for (std::int64_t i = 0; i < span; ++i) {
        wbuf_[i] = std::exp(wbuf_[i] - m);
        z += wbuf_[i];
      }
      T* oi = att_.data() + co;
      for (std::int64_t i = j0; i <= j; ++i) {
        const T wgt = wbuf_[i - j0] / z;
        const T* vi = lc.v.data() + i * d + co;
        for (std::int64_t c = 0; c < hd; ++c) oi[c] += wgt * vi[c];
      }
    }

    gemv_rm(true, d, d, T(1), bw.wo->values.data(), att_.data(), T(0), tmp_.data());
    for (std::int64_t c = 0; c < d; ++c) hrow_[c] = cur_[c] + tmp_[c];
    rms_row(hrow_.data(), bw.g_mlp->values.data(), d, hn_.data(), w.eps);
    gemv_rm(true, d, ffn, T(1), bw.w1->values.data(), hn_.data(), T(0), fa_.data());
    gemv_rm(true, d, ffn, T(1), bw.w2->values.data(), hn_.data(), T(0), fb_.data());
    for (std::int64_t c = 0; c < ffn; ++c) fa_[c] = fa_[c] * sigmoid(fa_[c]) * fb_[c];
    gemv_rm(true, ffn, d, T(1), bw.w3->values.data(), fa_.data(), T(0), tmp_.data());
    for (std::int64_t c = 0; c < d; ++c) cur_[c] = hrow_[c] + tmp_[c];
  }

  if (static_cast<std::int64_t>(tc.out.size()) < (j + 1) * d) tc.out.resize((j + 1) * d);
  std::copy(cur_.begin(), cur_.end(), tc.out.begin() + j * d);
  tc.len = std::max(tc.len, j + 1);
}

template <typename T>
void Decoder<T>::pool_into(const TowerCache<T>& fine, std::int64_t df, std::int64_t prev,
                           std::int64_t bound, const Tensor<T>& proj, std::vector<T>& out) {
  const std::int64_t dc = proj->shape[1];
  out.resize(dc);
  if (m_->cfg.pooling == Pooling::select) {
    gemv_rm(true, df, dc, T(1), proj->values.data(), fine.out.data() + bound * df, T(0),
            out.data());
    return;
  }
  sb_.assign(df, T(0));
  for (std::int64_t i = prev + 1; i <= bound; ++i) {
    const T* src = fine.out.data() + i * df;
    for (std::int64_t c = 0; c < df; ++c) sb_[c] += src[c];
  }
  const T inv = T(1) / static_cast<T>(bound - prev);
  for (std::int64_t c = 0; c < df; ++c) sb_[c] *= inv;
  gemv_rm(true, df, dc, T(1), proj->values.data(), sb_.data(), T(0), out.data());
}

// Adds the expansion contribution for fine stage s, row j, into x. Fine rows
// read the coarse row whose boundary is the largest one <= j-1 (the learned
// initial vector before the first), except simple upsampling, which writes the
// projected coarse row at the boundary row itself.
template <typename T>
void Decoder<T>::add_upsample(int s, std::int64_t j, T* x) {
  const AUNetConfig& cfg = m_->cfg;
  const std::vector<std::int64_t>& bounds = bounds_of(s + 1);
  const UpsampleWeights<T>& w = m_->ups[s - 1];
  const std::vector<T>& coarse =
      s + 1 == cfg.n_stages ? down_[cfg.n_stages - 1].out : up_[s].out;
  const std::int64_t dc = cfg.stages[s].dim;
  const std::int64_t df = cfg.stages[s - 1].dim;
  ub_.resize(df);
  if (cfg.upsampling == Upsampling::simple) {
    const auto it = std::lower_bound(bounds.begin(), bounds.end(), j);
    if (it == bounds.end() || *it != j) return;
    const std::int64_t b = it - bounds.begin();
    gemv_rm(true, dc, df, T(1), w.proj->values.data(), coarse.data() + b * dc, T(0), ub_.data());
  } else {
    const std::int64_t owner =
        std::upper_bound(bounds.begin(), bounds.end(), j - 1) - bounds.begin() - 1;
    const T* src = owner >= 0 ? coarse.data() + owner * dc : w.init->values.data();
    const std::int64_t start = owner >= 0 ? bounds[owner] : -1;
    if (cfg.upsampling == Upsampling::multilinear) {
      const std::int64_t np = static_cast<std::int64_t>(w.maps.size());
      const std::int64_t mi = std::min(j - start - 1, np - 1);
      gemv_rm(true, dc, df, T(1), w.maps[mi]->values.data(), src, T(0), ub_.data());
    } else {
      const std::int64_t np = w.bias->shape[0];
      const std::int64_t mi = std::min(j - start - 1, np - 1);
      gemv_rm(true, dc, df, T(1), w.shared->values.data(), src, T(0), ub_.data());
      const T* br = w.bias->values.data() + mi * df;
      for (std::int64_t c = 0; c < df; ++c) ub_[c] += br[c];
    }
  }
  for (std::int64_t c = 0; c < df; ++c) x[c] += ub_[c];
}

template <typename T>
std::vector<T> Decoder<T>::step(std::int64_t byte_id) {
  const AUNetConfig& cfg = m_->cfg;
  if (byte_id < 0 || byte_id >= cfg.vocab)
    throw std::invalid_argument("step: byte id " + std::to_string(byte_id) + " outside vocab " +
                                std::to_string(cfg.vocab));
  if (byte_id > 255)
    throw std::invalid_argument("step: byte id " + std::to_string(byte_id) + " is not a byte");
  const std::int64_t t = n_bytes();
  if (t >= cfg.stages[0].max_len)
    throw std::invalid_argument("step: stage-1 cache is full at max_len " +
                                std::to_string(cfg.stages[0].max_len));
  const int n = cfg.n_stages;
  bytes_.push_back(static_cast<std::uint8_t>(byte_id));

  push_tower_row(down_[0], m_->down[0], t,
                 m_->embed->values.data() + byte_id * cfg.stages[0].dim);

  std::int64_t refresh = t;  // first refinement row to (re)compute this step
  const auto confirmed = split_.push(static_cast<unsigned char>(byte_id));
  if (n >= 2) {
    for (std::int64_t beta : confirmed) {
      if (stage_len(2) >= cfg.stages[1].max_len) break;
      const std::int64_t j2 = stage_len(2);
      const std::int64_t prev2 = b2_.empty() ? -1 : b2_.back();
      b2_.push_back(beta);
      pool_into(down_[0], cfg.stages[0].dim, prev2, beta, m_->pool_proj[0], px_);
      push_tower_row(down_[1], m_->down[1], j2, px_.data());

      std::int64_t j3 = -1;
      if (n >= 3) {
        bool se = false;
        for (std::int64_t i = prev2 + 1; i <= beta && !se; ++i)
          se = cfg.splitter.sentence_end_bytes.find(static_cast<char>(bytes_[i])) !=
               std::string::npos;
        const bool keep3 = c3_->push(se);
        const bool keep4 = n >= 4 && c4_->push(se);
        if (keep3 && stage_len(3) < cfg.stages[2].max_len) {
          j3 = stage_len(3);
          const std::int64_t prev3 = b3_.empty() ? -1 : b3_.back();
          b3_.push_back(j2);
          pool_into(down_[1], cfg.stages[1].dim, prev3, j2, m_->pool_proj[1], px_);
          push_tower_row(down_[2], m_->down[2], j3, px_.data());
          if (n == 4 && keep4 && stage_len(4) < cfg.stages[3].max_len) {
            const std::int64_t j4 = stage_len(4);
            const std::int64_t prev4 = b4_.empty() ? -1 : b4_.back();
            b4_.push_back(j3);
            pool_into(down_[2], cfg.stages[2].dim, prev4, j3, m_->pool_proj[2], px_);
            push_tower_row(down_[3], m_->down[3], j4, px_.data());
          }
        }
      }

      // refinement rows for the freshly created tokens, coarse to fine
      if (n == 4 && j3 >= 0) {
        const std::int64_t d3 = cfg.stages[2].dim;
        px_.assign(down_[2].out.begin() + j3 * d3, down_[2].out.begin() + (j3 + 1) * d3);
        add_upsample(3, j3, px_.data());
        push_tower_row(up_[2], m_->up[2], j3, px_.data());
      }
      if (n >= 3) {
        const std::int64_t d2 = cfg.stages[1].dim;
        px_.assign(down_[1].out.begin() + j2 * d2, down_[1].out.begin() + (j2 + 1) * d2);
        add_upsample(2, j2, px_.data());
        push_tower_row(up_[1], m_->up[1], j2, px_.data());
      }
      refresh = std::min(refresh, cfg.upsampling == Upsampling::simple ? beta : beta + 1);
    }

    for (std::int64_t j = refresh; j <= t; ++j) {
      const std::int64_t d1 = cfg.stages[0].dim;
      px_.assign(down_[0].out.begin() + j * d1, down_[0].out.begin() + (j + 1) * d1);
      add_upsample(1, j, px_.data());
      push_tower_row(up_[0], m_->up[0], j, px_.data());
    }
  }

  const std::vector<T>& fin = n == 1 ? down_[0].out : up_[0].out;
  const std::int64_t d1 = cfg.stages[0].dim;
  nr_.resize(d1);
  rms_row(fin.data() + t * d1, m_->final_gain->values.data(), d1, nr_.data(),
          m_->cfg.norm_eps);
  std::vector<T> logits(cfg.vocab);
  gemv_rm(true, d1, cfg.vocab, T(1), m_->head->values.data(), nr_.data(), T(0), logits.data());
  return logits;
}

template <typename T>
std::vector<std::uint8_t> generate(const AUNetModel<T>& m, const std::vector<std::uint8_t>& prompt,
                                   std::int64_t n, double temperature, std::uint64_t seed) {
  if (n < 0)
    throw std::invalid_argument("generate: requested " + std::to_string(n) + " bytes");
  std::vector<std::uint8_t> out = prompt;
  if (n == 0) return out;
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  Decoder<T> dec(m);
  std::vector<T> logits;
  for (std::uint8_t b : prompt) logits = dec.step(b);
  std::mt19937_64 rng(seed);
  const int hi = static_cast<int>(std::min<std::int64_t>(m.cfg.vocab, 256));
  std::vector<double> p(hi);
  for (std::int64_t i = 0; i < n; ++i) {
    int pick = 0;
    if (temperature > 0.0) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < hi; ++c)
        mx = std::max(mx, static_cast<double>(logits[c]) / temperature);
      double z = 0.0;
      for (int c = 0; c < hi; ++c) {
        p[c] = std::exp(static_cast<double>(logits[c]) / temperature - mx);
        z += p[c];
      }
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * z;
      double cum = 0.0;
      pick = hi - 1;
      for (int c = 0; c < hi; ++c) {
        cum += p[c];
        if (u <= cum) {
          pick = c;
          break;
        }
      }
    } else {
      for (int c = 1; c < hi; ++c)
        if (logits[c] > logits[pick]) pick = c;
    }
    out.push_back(static_cast<std::uint8_t>(pick));
    if (i + 1 < n) logits = dec.step(pick);
  }
  return out;
}

#define AUNET_INSTANTIATE_DECODE(T)                                                     \
  template class Decoder<T>;                                                            \
  template std::vector<std::uint8_t> generate<T>(                                       \
      const AUNetModel<T>&, const std::vector<std::uint8_t>&, std::int64_t, double,     \
      std::uint64_t);

AUNET_INSTANTIATE_DECODE(float)
AUNET_INSTANTIATE_DECODE(double)

#undef AUNET_INSTANTIATE_DECODE

}  // namespace aunet
