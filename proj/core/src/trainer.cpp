#include "aunet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "aunet/ops.hpp"

namespace aunet {

void TrainConfig::validate() const {
  if (lr_max <= 0) throw std::invalid_argument("train config: lr_max must be positive");
  if (seq_len < 2) throw std::invalid_argument("train config: seq_len must be at least 2");
  if (bsz < seq_len || bsz % seq_len != 0)
    throw std::invalid_argument("train config: bsz " + std::to_string(bsz) +
                                " must be a positive multiple of seq_len " +
                                std::to_string(seq_len));
  if (total_steps < 1) throw std::invalid_argument("train config: total_steps must be positive");
  if (!(warmup_fraction > 0 && warmup_fraction < 1))
    throw std::invalid_argument("train config: warmup_fraction must lie in (0, 1)");
  if (!(lr_min_fraction >= 0 && lr_min_fraction <= 1))
    throw std::invalid_argument("train config: lr_min_fraction must lie in [0, 1]");
  if (weight_decay < 0) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (grad_clip <= 0) throw std::invalid_argument("train config: grad_clip must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw std::invalid_argument("train config: betas must lie in [0, 1)");
  if (adam_eps <= 0) throw std::invalid_argument("train config: adam_eps must be positive");
  if (eval_interval < 1) throw std::invalid_argument("train config: eval_interval must be positive");
  if (checkpoint_interval < 0)
    throw std::invalid_argument("train config: checkpoint_interval must be >= 0");
  if (!(heldout_fraction >= 0 && heldout_fraction < 1))
    throw std::invalid_argument("train config: heldout_fraction must lie in [0, 1)");
}

double cosine_lr(std::int64_t step, const TrainConfig& cfg) {
  cfg.validate();
  if (step < 0 || step > cfg.total_steps)
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) +
                                " outside 0.." + std::to_string(cfg.total_steps));
  const double warmup = std::llround(cfg.warmup_fraction * static_cast<double>(cfg.total_steps));
  if (warmup > 0 && static_cast<double>(step) <= warmup)
    return cfg.lr_max * static_cast<double>(step) / warmup;
  const double lr_min = cfg.lr_min_fraction * cfg.lr_max;
  const double progress =
      (static_cast<double>(step) - warmup) / (static_cast<double>(cfg.total_steps) - warmup);
  return lr_min + 0.5 * (cfg.lr_max - lr_min) * (1.0 + std::cos(progress * 3.14159265358979323846));
}

std::vector<std::uint8_t> join_docs(const std::vector<std::vector<std::uint8_t>>& docs) {
  std::vector<std::uint8_t> out;
  std::size_t total = docs.size();
  for (const auto& d : docs) total += d.size();
  out.reserve(total);
  for (const auto& d : docs) {
    out.insert(out.end(), d.begin(), d.end());
    out.push_back(kSepByte);
  }
  return out;
}

namespace {

// Byte position of the last boundary that survives the per-stage caps, or the
// row end when nothing was truncated. Mirrors the capping done inside the
// forward pass, in byte space.
std::int64_t overflow_cut(const SegmentMap& segmap, const AUNetConfig& cfg,
                          std::int64_t row_len) {
  std::int64_t cut = row_len;
  std::vector<std::int64_t> prev;
  for (int l = 0; l + 2 <= cfg.n_stages; ++l) {
    const auto& raw = segmap.stage(l + 2);
    std::vector<std::int64_t> cur;
    if (l == 0) {
      cur = raw;
    } else {
      cur.reserve(raw.size());
      std::size_t j = 0;
      for (auto b : raw) {
        while (j < prev.size() && prev[j] < b) ++j;
        if (j < prev.size() && prev[j] == b) cur.push_back(b);
      }
    }
    const std::int64_t cap = cfg.stages[l + 1].max_len;
    if (static_cast<std::int64_t>(cur.size()) > cap) {
      cur.resize(cap);
      cut = std::min(cut, cur.back());
    }
    prev = std::move(cur);
  }
  return cut;
}

SegmentMap segmap_for_row(const std::uint8_t* row, std::int64_t seq, const AUNetConfig& cfg) {
  const std::string text(reinterpret_cast<const char*>(row), static_cast<std::size_t>(seq));
  return build_hierarchy(split_stage1(text, cfg.splitter), text, cfg.splitter);
}

}  // namespace

std::vector<int> row_targets(const std::uint8_t* row, std::int64_t real_len, std::int64_t seq,
                             const SegmentMap& segmap, const AUNetConfig& cfg) {
  if (real_len < 1 || real_len > seq)
    throw std::invalid_argument("row_targets: real length " + std::to_string(real_len) +
                                " outside 1.." + std::to_string(seq));
  const std::int64_t cut = overflow_cut(segmap, cfg, seq);
  std::vector<int> t(static_cast<std::size_t>(seq), kIgnoreTarget);
  for (std::int64_t i = 0; i + 1 < real_len && i <= cut; ++i)
    t[static_cast<std::size_t>(i)] = static_cast<int>(row[i + 1]);
  return t;
}

Packer::Packer(std::vector<std::uint8_t> stream, const AUNetConfig& cfg, std::int64_t seq,
               std::int64_t rows_per_batch, std::uint64_t seed)
    : stream_(std::move(stream)), cfg_(cfg), seq_(seq), rows_per_batch_(rows_per_batch),
      rng_(seed) {
  cfg_.validate();
  if (seq_ < 2) throw std::invalid_argument("pack: seq must be at least 2");
  if (seq_ > cfg_.stages[0].max_len)
    throw std::invalid_argument("pack: seq " + std::to_string(seq_) +
                                " exceeds stage-1 max_len " +
                                std::to_string(cfg_.stages[0].max_len));
  if (rows_per_batch_ < 1) throw std::invalid_argument("pack: rows_per_batch must be positive");
  const std::int64_t len = static_cast<std::int64_t>(stream_.size());
  if (len == 0) throw std::invalid_argument("pack: empty corpus");
  n_rows_ = (len + seq_ - 1) / seq_;
  if (n_rows_ < rows_per_batch_)
    throw std::invalid_argument("pack: corpus of " + std::to_string(len) + " bytes fills " +
                                std::to_string(n_rows_) + " rows, one batch needs " +
                                std::to_string(rows_per_batch_));
}

void Packer::refill() {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n_rows_));
  for (std::int64_t i = 0; i < n_rows_; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n_rows_ - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  order_.insert(order_.end(), perm.begin(), perm.end());
}

PackedBatch Packer::next() {
  while (static_cast<std::int64_t>(order_.size()) < rows_per_batch_) refill();
  PackedBatch b;
  b.rows = rows_per_batch_;
  b.seq = seq_;
  b.bytes.assign(static_cast<std::size_t>(b.rows * seq_), kSepByte);
  b.targets.reserve(static_cast<std::size_t>(b.rows * seq_));
  const std::int64_t len = static_cast<std::int64_t>(stream_.size());
  for (std::int64_t r = 0; r < b.rows; ++r) {
    const std::int64_t row_idx = order_.front();
    order_.pop_front();
    const std::int64_t start = row_idx * seq_;
    const std::int64_t real_len = std::min(seq_, len - start);
    std::copy(stream_.begin() + start, stream_.begin() + start + real_len,
              b.bytes.begin() + static_cast<std::ptrdiff_t>(r * seq_));
    const std::uint8_t* row = b.bytes.data() + r * seq_;
    b.segmaps.push_back(segmap_for_row(row, seq_, cfg_));
    auto t = row_targets(row, real_len, seq_, b.segmaps.back(), cfg_);
    for (int v : t)
      if (v != kIgnoreTarget) ++b.live_targets;
    b.targets.insert(b.targets.end(), t.begin(), t.end());
    b.real_bytes += real_len;
  }
  return b;
}

template <typename T>
AdamW<T>::AdamW(std::vector<std::pair<std::string, Tensor<T>>> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  if (params_.empty()) throw std::invalid_argument("adamw: no parameters");
  for (const auto& [name, p] : params_) {
    if (!p) throw std::invalid_argument("adamw: null parameter " + name);
    m_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(p->numel()), 0.0);
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  double sq = 0;
  for (const auto& [name, p] : params_) {
    if (p->grad.empty()) continue;
    for (T g : p->grad) {
      if (!std::isfinite(static_cast<double>(g)))
        throw std::runtime_error("adamw: non-finite gradient in " + name);
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  norm_ = std::sqrt(sq);
  clip_ = norm_ > cfg_.grad_clip ? cfg_.grad_clip / norm_ : 1.0;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].second;
    auto& m = m_[i];
    auto& v = v_[i];
    const std::size_t n = p->values.size();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = p->grad.empty() ? 0.0 : static_cast<double>(p->grad[j]) * clip_;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
      double w = static_cast<double>(p->values[j]);
      w -= lr * cfg_.weight_decay * w;
      w -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.adam_eps);
      p->values[j] = static_cast<T>(w);
    }
  }
}

template <typename T>
double bits_per_byte(const AUNetModel<T>& m, const std::vector<std::uint8_t>& bytes,
                     std::int64_t seq) {
  if (static_cast<std::int64_t>(bytes.size()) < 2)
    throw std::invalid_argument("bits_per_byte: need at least 2 bytes");
  if (seq < 2 || seq > m.cfg.stages[0].max_len)
    throw std::invalid_argument("bits_per_byte: seq " + std::to_string(seq) +
                                " outside 2..stage-1 max_len");
  NoGradGuard ng;
  double nats = 0;
  std::int64_t count = 0;
  const std::int64_t len = static_cast<std::int64_t>(bytes.size());
  for (std::int64_t start = 0; start < len; start += seq) {
    const std::int64_t row_len = std::min(seq, len - start);
    if (row_len < 2) break;
    const std::vector<std::uint8_t> row(bytes.begin() + start, bytes.begin() + start + row_len);
    const SegmentMap segmap = segmap_for_row(row.data(), row_len, m.cfg);
    const auto targets = row_targets(row.data(), row_len, row_len, segmap, m.cfg);
    std::int64_t live = 0;
    for (int t : targets)
      if (t != kIgnoreTarget) ++live;
    if (live == 0) continue;
    const Tensor<T> logits = aunet_forward(m, row, segmap);
    const Tensor<T> ce = cross_entropy_logits(logits, targets, kIgnoreTarget);
    nats += static_cast<double>(ce->values[0]) * static_cast<double>(live);
    count += live;
  }
  if (count == 0) throw std::invalid_argument("bits_per_byte: every position is masked");
  return nats / static_cast<double>(count) / std::log(2.0);
}

template <typename T>
TrainResult train(AUNetModel<T>& m, const TrainConfig& tc,
                  const std::vector<std::uint8_t>& corpus, const TrainCallbacks& cb) {
  tc.validate();
  const std::int64_t heldout_len =
      static_cast<std::int64_t>(tc.heldout_fraction * static_cast<double>(corpus.size()));
  const std::int64_t train_len = static_cast<std::int64_t>(corpus.size()) - heldout_len;
  std::vector<std::uint8_t> train_part(corpus.begin(), corpus.begin() + train_len);
  std::vector<std::uint8_t> heldout(corpus.begin() + train_len, corpus.end());

  Packer packer(std::move(train_part), m.cfg, tc.seq_len, tc.bsz / tc.seq_len, tc.seed);
  auto named = named_params(m);
  std::vector<Tensor<T>> tensors;
  for (auto& [name, p] : named) tensors.push_back(p);
  AdamW<T> opt(std::move(named), tc);

  TrainResult res;
  char line[256];
  for (std::int64_t step = 1; step <= tc.total_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    PackedBatch batch = packer.next();
    if (batch.live_targets == 0)
      throw std::runtime_error("train: batch at step " + std::to_string(step) +
                               " has no unmasked target");
    zero_grad(tensors);
    double nats = 0;
    for (std::int64_t r = 0; r < batch.rows; ++r) {
      const auto* row = batch.bytes.data() + r * batch.seq;
      const std::vector<int> targets(batch.targets.begin() + r * batch.seq,
                                     batch.targets.begin() + (r + 1) * batch.seq);
      std::int64_t live = 0;
      for (int t : targets)
        if (t != kIgnoreTarget) ++live;
      if (live == 0) continue;
      const std::vector<std::uint8_t> row_bytes(row, row + batch.seq);
      const Tensor<T> logits = aunet_forward(m, row_bytes, batch.segmaps[r]);
      const Tensor<T> ce = cross_entropy_logits(logits, targets, kIgnoreTarget);
      const T w = static_cast<T>(static_cast<double>(live) /
                                 static_cast<double>(batch.live_targets));
      backward(scale(ce, w));
      nats += static_cast<double>(ce->values[0]) * static_cast<double>(live);
    }
    const double loss = nats / static_cast<double>(batch.live_targets);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step));
    const double lr = cosine_lr(step, tc);
    opt.step(lr);

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double bps = secs > 0 ? static_cast<double>(batch.real_bytes) / secs : 0.0;
    res.steps = step;
    res.final_loss = loss;

    const bool eval_now = static_cast<std::int64_t>(heldout.size()) >= 2 &&
                          (step % tc.eval_interval == 0 || step == tc.total_steps);
    if (eval_now) res.final_bpb = bits_per_byte(m, heldout, tc.seq_len);
    if (cb.metrics) {
      int n = std::snprintf(line, sizeof line, "step=%lld loss=%.6f lr=%.6g",
                            static_cast<long long>(step), loss, lr);
      if (eval_now)
        n += std::snprintf(line + n, sizeof line - n, " bpb=%.4f", res.final_bpb);
      std::snprintf(line + n, sizeof line - n, " bytes_per_sec=%.0f", bps);
      cb.metrics(line);
    }
    if (cb.checkpoint &&
        ((tc.checkpoint_interval > 0 && step % tc.checkpoint_interval == 0) ||
         step == tc.total_steps))
      cb.checkpoint(step);
  }
  return res;
}

#define AUNET_INSTANTIATE_TRAINER(T)                                                       \
  template class AdamW<T>;                                                                 \
  template double bits_per_byte<T>(const AUNetModel<T>&, const std::vector<std::uint8_t>&, \
                                   std::int64_t);                                          \
  template TrainResult train<T>(AUNetModel<T>&, const TrainConfig&,                        \
                                const std::vector<std::uint8_t>&, const TrainCallbacks&);

AUNET_INSTANTIATE_TRAINER(float)
AUNET_INSTANTIATE_TRAINER(double)

#undef AUNET_INSTANTIATE_TRAINER

}  // namespace aunet
