#include "aunet/config_io.hpp"

#include <charconv>
#include <map>
#include <stdexcept>
#include <vector>

namespace aunet {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(const std::string& s, const std::string& key) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i == s.size())
      throw std::invalid_argument("config: dangling escape in value of " + key);
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 't': out += '\t'; break;
      default:
        throw std::invalid_argument(std::string("config: unknown escape \\") + s[i] +
                                    " in value of " + key);
    }
  }
  return out;
}

std::int64_t parse_i64(const std::string& v, const std::string& key) {
  std::int64_t x{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  return x;
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::uint64_t x{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw std::invalid_argument("config: bad integer '" + v + "' for " + key);
  return x;
}

double parse_f64(const std::string& v, const std::string& key) {
  double x{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw std::invalid_argument("config: bad number '" + v + "' for " + key);
  return x;
}

std::vector<int> parse_group_sizes(const std::string& v, const std::string& key) {
  std::vector<int> out;
  if (v.empty()) return out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = v.find(',', start);
    std::string piece = v.substr(start, comma - start);
    out.push_back(static_cast<int>(parse_i64(piece, key)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

const char* pooling_name(Pooling p) {
  return p == Pooling::select ? "select" : "average";
}

const char* upsampling_name(Upsampling u) {
  switch (u) {
    case Upsampling::simple: return "simple";
    case Upsampling::repeat: return "repeat";
    default: return "multilinear";
  }
}

}  // namespace

std::string print_config(const RunConfig& cfg) {
  std::string out;
  auto kv = [&out](const char* k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  auto kd = [&](const char* k, double v) { kv(k, fmt_double(v)); };
  auto ki = [&](const char* k, std::int64_t v) { kv(k, std::to_string(v)); };

  kv("precision", cfg.precision == Precision::f32 ? "single" : "double");

  const AUNetConfig& m = cfg.model;
  ki("model.n_stages", m.n_stages);
  kv("model.pooling", pooling_name(m.pooling));
  kv("model.upsampling", upsampling_name(m.upsampling));
  ki("model.multilinear_max_positions", m.multilinear_max_positions);
  ki("model.vocab", m.vocab);
  kd("model.norm_eps", m.norm_eps);
  kv("model.splitter.stage1_regex", escape(m.splitter.stage1_regex));
  {
    std::string gs;
    for (std::size_t i = 0; i < m.splitter.group_sizes.size(); ++i) {
      if (i) gs += ',';
      gs += std::to_string(m.splitter.group_sizes[i]);
    }
    kv("model.splitter.group_sizes", gs);
  }
  kv("model.splitter.sentence_end_bytes", escape(m.splitter.sentence_end_bytes));
  for (std::size_t s = 0; s < m.stages.size(); ++s) {
    const std::string p = "model.stage." + std::to_string(s + 1) + ".";
    const StageSpec& st = m.stages[s];
    kv((p + "dim").c_str(), std::to_string(st.dim));
    kv((p + "n_layers").c_str(), std::to_string(st.n_layers));
    kv((p + "ffn").c_str(), std::to_string(st.ffn));
    kv((p + "head_dim").c_str(), std::to_string(st.head_dim));
    kv((p + "window").c_str(), std::to_string(st.window));
    kv((p + "max_len").c_str(), std::to_string(st.max_len));
  }

  const TrainConfig& t = cfg.train;
  kd("train.lr_max", t.lr_max);
  ki("train.bsz", t.bsz);
  ki("train.total_steps", t.total_steps);
  kd("train.warmup_fraction", t.warmup_fraction);
  kd("train.lr_min_fraction", t.lr_min_fraction);
  kd("train.weight_decay", t.weight_decay);
  kd("train.grad_clip", t.grad_clip);
  kd("train.beta1", t.beta1);
  kd("train.beta2", t.beta2);
  kd("train.adam_eps", t.adam_eps);
  kv("train.seed", std::to_string(t.seed));
  ki("train.seq_len", t.seq_len);
  ki("train.eval_interval", t.eval_interval);
  ki("train.checkpoint_interval", t.checkpoint_interval);
  kd("train.heldout_fraction", t.heldout_fraction);
  return out;
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  AUNetConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  std::map<int, StageSpec> stage_map;
  std::map<std::string, int> seen;

  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') {
      if (pos > text.size()) break;
      continue;
    }

    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " has no '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (++seen[key] > 1)
      throw std::invalid_argument("config: duplicate key " + key + " (line " +
                                  std::to_string(line_no) + ")");

    if (key == "precision") {
      if (val == "single")
        cfg.precision = Precision::f32;
      else if (val == "double")
        cfg.precision = Precision::f64;
      else
        throw std::invalid_argument("config: precision must be single or double, got '" +
                                    val + "'");
    } else if (key == "model.n_stages") {
      m.n_stages = static_cast<int>(parse_i64(val, key));
    } else if (key == "model.pooling") {
      if (val == "select")
        m.pooling = Pooling::select;
      else if (val == "average")
        m.pooling = Pooling::average;
      else
        throw std::invalid_argument("config: unknown pooling '" + val + "'");
    } else if (key == "model.upsampling") {
      if (val == "simple")
        m.upsampling = Upsampling::simple;
      else if (val == "repeat")
        m.upsampling = Upsampling::repeat;
      else if (val == "multilinear")
        m.upsampling = Upsampling::multilinear;
      else
        throw std::invalid_argument("config: unknown upsampling '" + val + "'");
    } else if (key == "model.multilinear_max_positions") {
      m.multilinear_max_positions = parse_i64(val, key);
    } else if (key == "model.vocab") {
      m.vocab = parse_i64(val, key);
    } else if (key == "model.norm_eps") {
      m.norm_eps = parse_f64(val, key);
    } else if (key == "model.splitter.stage1_regex") {
      m.splitter.stage1_regex = unescape(val, key);
    } else if (key == "model.splitter.group_sizes") {
      m.splitter.group_sizes = parse_group_sizes(val, key);
    } else if (key == "model.splitter.sentence_end_bytes") {
      m.splitter.sentence_end_bytes = unescape(val, key);
    } else if (key.rfind("model.stage.", 0) == 0) {
      const std::string rest = key.substr(12);
      std::size_t dot = rest.find('.');
      if (dot == std::string::npos)
        throw std::invalid_argument("config: malformed stage key " + key);
      const int idx = static_cast<int>(parse_i64(rest.substr(0, dot), key));
      if (idx < 1)
        throw std::invalid_argument("config: stage index must be >= 1 in " + key);
      const std::string field = rest.substr(dot + 1);
      StageSpec& st = stage_map[idx];
      if (field == "dim")
        st.dim = parse_i64(val, key);
      else if (field == "n_layers")
        st.n_layers = parse_i64(val, key);
      else if (field == "ffn")
        st.ffn = parse_i64(val, key);
      else if (field == "head_dim")
        st.head_dim = parse_i64(val, key);
      else if (field == "window")
        st.window = parse_i64(val, key);
      else if (field == "max_len")
        st.max_len = parse_i64(val, key);
      else
        throw std::invalid_argument("config: unknown stage field '" + field + "' in " + key);
    } else if (key == "train.lr_max") {
      t.lr_max = parse_f64(val, key);
    } else if (key == "train.bsz") {
      t.bsz = parse_i64(val, key);
    } else if (key == "train.total_steps") {
      t.total_steps = parse_i64(val, key);
    } else if (key == "train.warmup_fraction") {
      t.warmup_fraction = parse_f64(val, key);
    } else if (key == "train.lr_min_fraction") {
      t.lr_min_fraction = parse_f64(val, key);
    } else if (key == "train.weight_decay") {
      t.weight_decay = parse_f64(val, key);
    } else if (key == "train.grad_clip") {
      t.grad_clip = parse_f64(val, key);
    } else if (key == "train.beta1") {
      t.beta1 = parse_f64(val, key);
    } else if (key == "train.beta2") {
      t.beta2 = parse_f64(val, key);
    } else if (key == "train.adam_eps") {
      t.adam_eps = parse_f64(val, key);
    } else if (key == "train.seed") {
      t.seed = parse_u64(val, key);
    } else if (key == "train.seq_len") {
      t.seq_len = parse_i64(val, key);
    } else if (key == "train.eval_interval") {
      t.eval_interval = parse_i64(val, key);
    } else if (key == "train.checkpoint_interval") {
      t.checkpoint_interval = parse_i64(val, key);
    } else if (key == "train.heldout_fraction") {
      t.heldout_fraction = parse_f64(val, key);
    } else {
      throw std::invalid_argument("config: unknown key " + key + " (line " +
                                  std::to_string(line_no) + ")");
    }
    if (pos > text.size()) break;
  }

  if (!stage_map.empty()) {
    int expect = 1;
    m.stages.clear();
    for (const auto& [idx, st] : stage_map) {
      if (idx != expect++)
        throw std::invalid_argument("config: stage indices must run 1.." +
                                    std::to_string(stage_map.size()) + " without gaps");
      m.stages.push_back(st);
    }
  }
  return cfg;
}

}  // namespace aunet
