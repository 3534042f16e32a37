#include "aunet/budget.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <string>

namespace aunet {

namespace {

void check_spec(const FlopSpec& s) {
  if (s.d <= 0 || s.span <= 0 || s.layers < 0 || s.n_no_embed <= 0)
    throw std::invalid_argument("flops: spec needs d, span, n_no_embed > 0 and layers >= 0");
}

// Squares x exactly in its shortest decimal form, rounding once at the end.
// Plain x*x can land one ulp away from the decimal the factor was given as
// (4.56 * 4.56 != 20.7936 in doubles). Falls back to x*x for mantissas too
// long to be a hand-written constant.
double decimal_square(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  std::string digits;
  int exp10 = 0;
  bool frac = false;
  for (char* p = buf; p != res.ptr; ++p) {
    if (*p == '.') {
      frac = true;
    } else if (*p == 'e' || *p == 'E') {
      exp10 += std::stoi(std::string(p + 1, res.ptr));
      break;
    } else {
      digits.push_back(*p);
      if (frac) --exp10;
    }
  }
  if (digits.size() > 9) return x * x;
  const unsigned long long m = std::stoull(digits);
  const std::string rebuilt = std::to_string(m * m) + "e" + std::to_string(2 * exp10);
  double out = 0;
  std::from_chars(rebuilt.data(), rebuilt.data() + rebuilt.size(), out);
  return out;
}

}  // namespace

double flops_per_token(const FlopSpec& s) {
  check_spec(s);
  return 6.0 * s.n_no_embed + 6.0 * s.d * s.layers * s.span;
}

double flops_per_byte_aunet(const std::vector<FlopSpec>& stages, const std::vector<double>& k) {
  if (stages.empty() || stages.size() != k.size())
    throw std::invalid_argument("flops_per_byte: " + std::to_string(stages.size()) +
                                " stages vs " + std::to_string(k.size()) + " contractions");
  if (k[0] != 1.0)
    throw std::invalid_argument("flops_per_byte: stage-1 contraction must be 1");
  double total = 0;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (k[i] < 1.0)
      throw std::invalid_argument("flops_per_byte: contraction " + std::to_string(k[i]) +
                                  " below 1");
    total += flops_per_token(stages[i]) / k[i];
  }
  return total;
}

double gamma_convert(double gamma_token, double k) {
  if (k <= 0) throw std::invalid_argument("gamma_convert: k must be positive");
  if (gamma_token <= 0) throw std::invalid_argument("gamma_convert: gamma must be positive");
  return gamma_token * decimal_square(k);
}

double predict_bsz(double c, const ScalingFit& fit) {
  if (c <= 0) throw std::invalid_argument("predict_bsz: budget must be positive");
  return fit.a * std::pow(c, fit.alpha);
}

double predict_lr(double c, const ScalingFit& fit) {
  if (c <= 0) throw std::invalid_argument("predict_lr: budget must be positive");
  return fit.b * std::pow(c, fit.beta);
}

double tokens_for_budget(double c, double f) {
  if (c <= 0 || f <= 0)
    throw std::invalid_argument("tokens_for_budget: budget and per-unit cost must be positive");
  return c / f;
}

// Measured over the reference corpus mix with the default splitting
// hierarchy; sentence-end resets keep the deep factors below the raw
// group-size products.
std::vector<double> contraction_factors(int n_stages) {
  static constexpr double k[4] = {1.0, 4.56, 6.84, 10.26};
  if (n_stages < 1 || n_stages > 4)
    throw std::invalid_argument("contraction_factors: n_stages must be 1..4");
  return {k, k + n_stages};
}

std::vector<FlopSpec> flop_specs(const AUNetConfig& cfg) {
  cfg.validate();
  std::vector<FlopSpec> out;
  for (int s = 0; s < cfg.n_stages; ++s) {
    const StageSpec& st = cfg.stages[s];
    const double d = static_cast<double>(st.dim);
    const double per_layer = 4.0 * d * d + 3.0 * d * static_cast<double>(st.ffn) + 2.0 * d;
    const double towers = s == cfg.n_stages - 1 ? 1.0 : 2.0;
    FlopSpec spec;
    spec.d = d;
    spec.layers = towers * static_cast<double>(st.n_layers);
    spec.span = static_cast<double>(s == 0 ? st.window : st.max_len);
    spec.n_no_embed = spec.layers * per_layer;
    if (s == 0) spec.n_no_embed += d * static_cast<double>(cfg.vocab) + d;  // head + final gain
    out.push_back(spec);
  }
  return out;
}

double flops_per_byte(const AUNetConfig& cfg) {
  return flops_per_byte_aunet(flop_specs(cfg), contraction_factors(cfg.n_stages));
}

}  // namespace aunet
