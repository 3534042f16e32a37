#include "aunet/hierarchy.hpp"

#include "aunet/budget.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "aunet/ops.hpp"

namespace aunet {

void AUNetConfig::validate() const {
  if (n_stages < 1 || n_stages > 4)
    throw std::invalid_argument("config: n_stages must be 1..4, got " +
                                std::to_string(n_stages));
  if (static_cast<int>(stages.size()) != n_stages)
    throw std::invalid_argument("config: " + std::to_string(stages.size()) +
                                " stage specs for n_stages=" + std::to_string(n_stages));
  for (int s = 0; s < n_stages; ++s) {
    const StageSpec& st = stages[s];
    if (st.dim < 1 || st.n_layers < 1 || st.ffn < 1 || st.max_len < 1)
      throw std::invalid_argument("config: stage " + std::to_string(s + 1) +
                                  " has a non-positive field");
    if (st.head_dim < 2 || st.head_dim % 2 != 0 || st.dim % st.head_dim != 0)
      throw std::invalid_argument("config: stage " + std::to_string(s + 1) + " head_dim " +
                                  std::to_string(st.head_dim) + " invalid for dim " +
                                  std::to_string(st.dim));
    if (s == 0 && st.window < 1)
      throw std::invalid_argument("config: stage 1 needs a finite attention window");
    if (s > 0 && st.window != 0)
      throw std::invalid_argument("config: only stage 1 may set a window");
    if (s > 0 && st.dim < stages[s - 1].dim)
      throw std::invalid_argument("config: dims must be non-decreasing with depth");
    if (s > 0 && st.max_len > stages[s - 1].max_len)
      throw std::invalid_argument("config: max_len must be non-increasing with depth");
  }
  if (multilinear_max_positions < 1)
    throw std::invalid_argument("config: multilinear_max_positions must be positive");
  if (!(norm_eps > 0) || !std::isfinite(norm_eps))
    throw std::invalid_argument("config: norm_eps must be positive and finite");
  if (vocab < 256) throw std::invalid_argument("config: vocab must cover all bytes");
  if (static_cast<int>(splitter.group_sizes.size()) < n_stages - 2)
    throw std::invalid_argument("config: " + std::to_string(splitter.group_sizes.size()) +
                                " group sizes cannot feed " + std::to_string(n_stages) +
                                " stages");
}

std::vector<std::int64_t> dim_ladder(std::int64_t main_dim, int n_stages) {
  if (main_dim % 4 != 0)
    throw std::invalid_argument("dim_ladder: main dim must be divisible by 4");
  std::vector<std::int64_t> all = {main_dim / 4, main_dim, main_dim * 3 / 2,
                                   main_dim * 9 / 4};
  if (n_stages < 1 || n_stages > 4)
    throw std::invalid_argument("dim_ladder: n_stages must be 1..4");
  return {all.begin(), all.begin() + n_stages};
}

AUNetConfig preset_1b(int n_stages) {
  if (n_stages < 2 || n_stages > 4)
    throw std::invalid_argument("preset_1b: n_stages must be 2..4");
  static const std::int64_t layers[3][4] = {{3, 25, 0, 0}, {3, 3, 18, 0}, {3, 3, 4, 10}};
  static const std::int64_t ffns[4] = {1536, 5632, 8192, 12288};
  AUNetConfig cfg;
  cfg.n_stages = n_stages;
  auto dims = dim_ladder(2048, n_stages);
  auto contraction = contraction_factors(n_stages);
  const std::int64_t s1 = 8192;
  for (int s = 0; s < n_stages; ++s) {
    StageSpec st;
    st.dim = dims[s];
    st.n_layers = layers[n_stages - 2][s];
    st.ffn = ffns[s];
    st.head_dim = s == 0 ? 64 : 128;
    st.window = s == 0 ? 512 : 0;
    st.max_len = static_cast<std::int64_t>(std::llround(s1 / contraction[s]));
    cfg.stages.push_back(st);
  }
  cfg.validate();
  return cfg;
}

AUNetConfig preset_small(int n_stages, std::int64_t main_dim, std::int64_t seq_len) {
  AUNetConfig cfg;
  cfg.n_stages = n_stages;
  auto dims = dim_ladder(main_dim, n_stages);
  for (int s = 0; s < n_stages; ++s) {
    StageSpec st;
    st.dim = dims[s];
    st.n_layers = s == n_stages - 1 ? 4 : 2;
    st.ffn = 3 * st.dim;
    st.head_dim = std::min<std::int64_t>(32, dims[0]);
    st.window = s == 0 ? std::min<std::int64_t>(512, seq_len) : 0;
    st.max_len = std::max<std::int64_t>(1, seq_len >> (s == 0 ? 0 : s + 1));
    cfg.stages.push_back(st);
  }
  cfg.validate();
  return cfg;
}

std::int64_t param_count(const AUNetConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_stages;
  std::int64_t total = 0;
  for (int s = 0; s < n; ++s) {
    const StageSpec& st = cfg.stages[s];
    const std::int64_t per_layer = 4 * st.dim * st.dim + 3 * st.dim * st.ffn + 2 * st.dim;
    const std::int64_t towers = s == n - 1 ? 1 : 2;
    total += towers * st.n_layers * per_layer;
  }
  const std::int64_t d1 = cfg.stages[0].dim;
  total += cfg.vocab * d1;       // embedding
  total += d1 * cfg.vocab + d1;  // head and final gain
  for (int s = 0; s + 1 < n; ++s) {
    const std::int64_t df = cfg.stages[s].dim, dc = cfg.stages[s + 1].dim;
    total += df * dc;  // pooling projection
    switch (cfg.upsampling) {
      case Upsampling::multilinear:
        total += cfg.multilinear_max_positions * dc * df + dc;
        break;
      case Upsampling::repeat:
        total += dc * df + cfg.multilinear_max_positions * df + dc;
        break;
      case Upsampling::simple:
        total += dc * df;
        break;
    }
  }
  return total;
}

template <typename T>
AUNetModel<T> make_model(const AUNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  auto randt = [&](std::vector<std::int64_t> shape, double sd) {
    auto t = make_tensor<T>(std::move(shape));
    for (auto& v : t->values) v = static_cast<T>(dist(gen) * sd);
    t->requires_grad = true;
    return t;
  };
  auto fill = [&](std::vector<std::int64_t> shape, T value) {
    auto t = make_tensor<T>(std::move(shape));
    std::fill(t->values.begin(), t->values.end(), value);
    t->requires_grad = true;
    return t;
  };

  const int n = cfg.n_stages;
  std::int64_t l_total = 0;
  for (int s = 0; s < n; ++s)
    l_total += (s == n - 1 ? 1 : 2) * cfg.stages[s].n_layers;
  const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(l_total));

  auto make_tower = [&](const StageSpec& st) {
    StageWeights<T> w;
    w.head_dim = st.head_dim;
    w.window = st.window;
    w.eps = cfg.norm_eps;
    const double sd = 1.0 / std::sqrt(static_cast<double>(st.dim));
    const double sf = 1.0 / std::sqrt(static_cast<double>(st.ffn));
    for (std::int64_t l = 0; l < st.n_layers; ++l) {
      BlockWeights<T> b;
      b.wq = randt({st.dim, st.dim}, sd);
      b.wk = randt({st.dim, st.dim}, sd);
      b.wv = randt({st.dim, st.dim}, sd);
      b.wo = randt({st.dim, st.dim}, sd * out_scale);
      b.w1 = randt({st.dim, st.ffn}, sd);
      b.w2 = randt({st.dim, st.ffn}, sd);
      b.w3 = randt({st.ffn, st.dim}, sf * out_scale);
      b.g_attn = fill({st.dim}, T(1));
      b.g_mlp = fill({st.dim}, T(1));
      w.layers.push_back(std::move(b));
    }
    return w;
  };

  AUNetModel<T> m;
  m.cfg = cfg;
  const std::int64_t d1 = cfg.stages[0].dim;
  m.embed = randt({cfg.vocab, d1}, 1.0 / std::sqrt(static_cast<double>(d1)));
  for (int s = 0; s < n; ++s) m.down.push_back(make_tower(cfg.stages[s]));
  for (int s = 0; s + 1 < n; ++s) {
    const std::int64_t df = cfg.stages[s].dim, dc = cfg.stages[s + 1].dim;
    const double sdf = 1.0 / std::sqrt(static_cast<double>(df));
    const double sdc = 1.0 / std::sqrt(static_cast<double>(dc));
    m.pool_proj.push_back(randt({df, dc}, sdf));
    UpsampleWeights<T> u;
    switch (cfg.upsampling) {
      case Upsampling::multilinear:
        for (std::int64_t p = 0; p < cfg.multilinear_max_positions; ++p)
          u.maps.push_back(randt({dc, df}, sdc));
        u.init = randt({1, dc}, 1.0);
        break;
      case Upsampling::repeat:
        u.shared = randt({dc, df}, sdc);
        u.bias = fill({cfg.multilinear_max_positions, df}, T(0));
        u.init = randt({1, dc}, 1.0);
        break;
      case Upsampling::simple:
        u.proj = randt({dc, df}, sdc);
        break;
    }
    m.ups.push_back(std::move(u));
  }
  for (int s = 0; s + 1 < n; ++s) m.up.push_back(make_tower(cfg.stages[s]));
  m.final_gain = fill({d1}, T(1));
  m.head = randt({d1, cfg.vocab}, 1.0 / std::sqrt(static_cast<double>(d1)));
  return m;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> named_params(AUNetModel<T>& m) {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto tower = [&out](const std::string& prefix, StageWeights<T>& w) {
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      BlockWeights<T>& b = w.layers[l];
      const std::string base = prefix + "." + std::to_string(l) + ".";
      out.emplace_back(base + "wq", b.wq);
      out.emplace_back(base + "wk", b.wk);
      out.emplace_back(base + "wv", b.wv);
      out.emplace_back(base + "wo", b.wo);
      out.emplace_back(base + "w1", b.w1);
      out.emplace_back(base + "w2", b.w2);
      out.emplace_back(base + "w3", b.w3);
      out.emplace_back(base + "g_attn", b.g_attn);
      out.emplace_back(base + "g_mlp", b.g_mlp);
    }
  };
  out.emplace_back("embed", m.embed);
  for (std::size_t s = 0; s < m.down.size(); ++s)
    tower("down." + std::to_string(s + 1), m.down[s]);
  for (std::size_t s = 0; s < m.pool_proj.size(); ++s)
    out.emplace_back("pool." + std::to_string(s + 1), m.pool_proj[s]);
  for (std::size_t s = 0; s < m.ups.size(); ++s) {
    UpsampleWeights<T>& u = m.ups[s];
    const std::string base = "ups." + std::to_string(s + 1) + ".";
    for (std::size_t p = 0; p < u.maps.size(); ++p)
      out.emplace_back(base + "map." + std::to_string(p), u.maps[p]);
    if (u.shared) out.emplace_back(base + "shared", u.shared);
    if (u.bias) out.emplace_back(base + "bias", u.bias);
    if (u.proj) out.emplace_back(base + "proj", u.proj);
    if (u.init) out.emplace_back(base + "init", u.init);
  }
  for (std::size_t s = 0; s < m.up.size(); ++s)
    tower("up." + std::to_string(s + 1), m.up[s]);
  out.emplace_back("final_gain", m.final_gain);
  out.emplace_back("head", m.head);
  return out;
}

namespace {

void check_bounds(const std::vector<std::int64_t>& bounds, std::int64_t s, const char* op) {
  std::int64_t prev = -1;
  for (auto b : bounds) {
    if (b <= prev || b >= s)
      throw std::invalid_argument(std::string(op) + ": bad boundary " + std::to_string(b) +
                                  " for length " + std::to_string(s));
    prev = b;
  }
}

// Fine position t draws from the coarse row whose boundary is the largest one
// <= t-1 (source row 0 is the initial vector, row b+1 is coarse row b); the
// map index is the within-segment offset, clamped to the table size.
void upsample_indices(const std::vector<std::int64_t>& bounds, std::int64_t s,
                      std::int64_t n_maps, std::vector<std::int64_t>& src_idx,
                      std::vector<std::int64_t>& map_idx) {
  src_idx.resize(s);
  map_idx.resize(s);
  std::int64_t owner = -1;
  for (std::int64_t t = 0; t < s; ++t) {
    while (owner + 1 < static_cast<std::int64_t>(bounds.size()) && bounds[owner + 1] <= t - 1)
      ++owner;
    const std::int64_t start = owner >= 0 ? bounds[owner] : -1;
    src_idx[t] = owner + 1;
    map_idx[t] = std::min<std::int64_t>(t - start - 1, n_maps - 1);
  }
}

}  // namespace

template <typename T>
Tensor<T> pool_select(const Tensor<T>& h, const std::vector<std::int64_t>& boundaries,
                      const Tensor<T>& proj) {
  check_bounds(boundaries, h->rows(), "pool_select");
  return matmul(gather_rows(h, boundaries), proj);
}

template <typename T>
Tensor<T> pool_average(const Tensor<T>& h, const std::vector<std::int64_t>& boundaries,
                       const Tensor<T>& proj) {
  return matmul(segment_mean(h, boundaries), proj);
}

template <typename T>
Tensor<T> upsample_multilinear(const Tensor<T>& c, const std::vector<std::int64_t>& boundaries,
                               std::int64_t s, const UpsampleWeights<T>& w) {
  check_bounds(boundaries, s, "upsample_multilinear");
  if (c->rows() != static_cast<std::int64_t>(boundaries.size()))
    throw std::invalid_argument("upsample_multilinear: " + std::to_string(c->rows()) +
                                " coarse rows for " + std::to_string(boundaries.size()) +
                                " boundaries");
  std::vector<std::int64_t> src_idx, map_idx;
  upsample_indices(boundaries, s, static_cast<std::int64_t>(w.maps.size()), src_idx, map_idx);
  return indexed_linear(concat_rows(w.init, c), w.maps, src_idx, map_idx);
}

template <typename T>
Tensor<T> upsample_repeat(const Tensor<T>& c, const std::vector<std::int64_t>& boundaries,
                          std::int64_t s, const UpsampleWeights<T>& w) {
  check_bounds(boundaries, s, "upsample_repeat");
  if (c->rows() != static_cast<std::int64_t>(boundaries.size()))
    throw std::invalid_argument("upsample_repeat: " + std::to_string(c->rows()) +
                                " coarse rows for " + std::to_string(boundaries.size()) +
                                " boundaries");
  std::vector<std::int64_t> src_idx, map_idx;
  upsample_indices(boundaries, s, w.bias->shape[0], src_idx, map_idx);
  auto shared = indexed_linear(concat_rows(w.init, c), {w.shared}, src_idx,
                               std::vector<std::int64_t>(s, 0));
  return add(shared, gather_rows(w.bias, map_idx));
}

template <typename T>
Tensor<T> upsample_simple(const Tensor<T>& c, const std::vector<std::int64_t>& boundaries,
                          std::int64_t s, const UpsampleWeights<T>& w) {
  check_bounds(boundaries, s, "upsample_simple");
  if (c->rows() != static_cast<std::int64_t>(boundaries.size()))
    throw std::invalid_argument("upsample_simple: " + std::to_string(c->rows()) +
                                " coarse rows for " + std::to_string(boundaries.size()) +
                                " boundaries");
  return scatter_rows(matmul(c, w.proj), boundaries, s);
}

std::vector<std::vector<std::int64_t>> capped_stage_indices(const SegmentMap& segmap,
                                                            const AUNetConfig& cfg) {
  const int n_levels = cfg.n_stages - 1;
  if (segmap.n_levels() < n_levels)
    throw std::invalid_argument("forward: segment map has " +
                                std::to_string(segmap.n_levels()) + " levels, need " +
                                std::to_string(n_levels));
  // Byte-space boundaries per level, capped so deeper levels stay subsets.
  std::vector<std::vector<std::int64_t>> byte_bounds(n_levels);
  for (int l = 0; l < n_levels; ++l) {
    const auto& raw = segmap.stage(l + 2);
    if (l == 0) {
      byte_bounds[0] = raw;
    } else {
      byte_bounds[l].reserve(raw.size());
      std::size_t j = 0;
      for (auto b : raw) {
        while (j < byte_bounds[l - 1].size() && byte_bounds[l - 1][j] < b) ++j;
        if (j < byte_bounds[l - 1].size() && byte_bounds[l - 1][j] == b)
          byte_bounds[l].push_back(b);
      }
    }
    const std::int64_t cap = cfg.stages[l + 1].max_len;
    if (static_cast<std::int64_t>(byte_bounds[l].size()) > cap) byte_bounds[l].resize(cap);
  }
  // Convert each level to indices into the previous level's token sequence.
  std::vector<std::vector<std::int64_t>> idx(n_levels);
  for (int l = 0; l < n_levels; ++l) {
    if (l == 0) {
      idx[0] = byte_bounds[0];
      continue;
    }
    idx[l].reserve(byte_bounds[l].size());
    std::size_t j = 0;
    for (auto b : byte_bounds[l]) {
      while (j < byte_bounds[l - 1].size() && byte_bounds[l - 1][j] < b) ++j;
      idx[l].push_back(static_cast<std::int64_t>(j));
    }
  }
  return idx;
}

template <typename T>
Tensor<T> aunet_forward(const AUNetModel<T>& m, const std::vector<std::uint8_t>& bytes,
                        const SegmentMap& segmap, const ForwardHooks<T>& hooks) {
  const AUNetConfig& cfg = m.cfg;
  const std::int64_t s1 = static_cast<std::int64_t>(bytes.size());
  if (s1 < 1) throw std::invalid_argument("forward: empty input");
  if (s1 > cfg.stages[0].max_len)
    throw std::invalid_argument("forward: " + std::to_string(s1) +
                                " bytes exceed stage-1 max_len " +
                                std::to_string(cfg.stages[0].max_len));
  segmap.validate(s1);
  const auto idx = capped_stage_indices(segmap, cfg);
  const int n = cfg.n_stages;

  auto apply = [](const std::function<Tensor<T>(int, const Tensor<T>&)>& fn, int stage,
                  Tensor<T> t) {
    if (!fn) return t;
    Tensor<T> r = fn(stage, t);
    if (!r || r->shape != t->shape)
      throw std::logic_error("forward hook changed the activation shape");
    return r;
  };

  std::vector<std::int64_t> ids(bytes.begin(), bytes.end());
  std::vector<Tensor<T>> acts;
  Tensor<T> h = stage_forward(gather_rows(m.embed, ids), m.down[0]);
  acts.push_back(apply(hooks.after_contract, 1, h));
  for (int s = 2; s <= n; ++s) {
    const auto& bounds = idx[s - 2];
    Tensor<T> c = cfg.pooling == Pooling::select
                      ? pool_select(acts[s - 2], bounds, m.pool_proj[s - 2])
                      : pool_average(acts[s - 2], bounds, m.pool_proj[s - 2]);
    acts.push_back(apply(hooks.after_contract, s, stage_forward(c, m.down[s - 1])));
  }

  Tensor<T> r = apply(hooks.after_expand, n, acts[n - 1]);
  for (int s = n - 1; s >= 1; --s) {
    const std::int64_t fine_len = s == 1 ? s1 : static_cast<std::int64_t>(idx[s - 2].size());
    Tensor<T> u;
    switch (cfg.upsampling) {
      case Upsampling::multilinear:
        u = upsample_multilinear(r, idx[s - 1], fine_len, m.ups[s - 1]);
        break;
      case Upsampling::repeat:
        u = upsample_repeat(r, idx[s - 1], fine_len, m.ups[s - 1]);
        break;
      case Upsampling::simple:
        u = upsample_simple(r, idx[s - 1], fine_len, m.ups[s - 1]);
        break;
    }
    r = apply(hooks.after_expand, s, stage_forward(add(acts[s - 1], u), m.up[s - 1]));
  }
  return matmul(rmsnorm(r, m.final_gain, static_cast<T>(m.cfg.norm_eps)), m.head);
}

#define AUNET_INSTANTIATE_HIERARCHY(T)                                                       \
  template AUNetModel<T> make_model<T>(const AUNetConfig&, std::uint64_t);                   \
  template std::vector<std::pair<std::string, Tensor<T>>> named_params<T>(AUNetModel<T>&);   \
  template Tensor<T> pool_select<T>(const Tensor<T>&, const std::vector<std::int64_t>&,      \
                                    const Tensor<T>&);                                       \
  template Tensor<T> pool_average<T>(const Tensor<T>&, const std::vector<std::int64_t>&,     \
                                     const Tensor<T>&);                                      \
  template Tensor<T> upsample_multilinear<T>(const Tensor<T>&,                               \
                                             const std::vector<std::int64_t>&, std::int64_t, \
                                             const UpsampleWeights<T>&);                     \
  template Tensor<T> upsample_repeat<T>(const Tensor<T>&, const std::vector<std::int64_t>&,  \
                                        std::int64_t, const UpsampleWeights<T>&);            \
  template Tensor<T> upsample_simple<T>(const Tensor<T>&, const std::vector<std::int64_t>&,  \
                                        std::int64_t, const UpsampleWeights<T>&);            \
  template Tensor<T> aunet_forward<T>(const AUNetModel<T>&, const std::vector<std::uint8_t>&, \
                                      const SegmentMap&, const ForwardHooks<T>&);

AUNET_INSTANTIATE_HIERARCHY(float)
AUNET_INSTANTIATE_HIERARCHY(double)

#undef AUNET_INSTANTIATE_HIERARCHY

}  // namespace aunet
