#pragma once

#include <vector>

#include "aunet/hierarchy.hpp"

namespace aunet {

// Width/depth/span summary of one stage for compute accounting. n_no_embed
// counts every parameter except the input embedding table; the output head and
// the norm gains stay in. The published per-token costs only reproduce under
// this head-inclusive convention.
struct FlopSpec {
  double d = 0;
  double layers = 0;
  double span = 0;
  double n_no_embed = 0;
};

// BSZ(C) = A C^alpha in input units per step; LR(C) = B C^beta.
struct ScalingFit {
  double a = 0;
  double alpha = 0;
  double b = 0;
  double beta = 0;
};

inline constexpr ScalingFit kAunetFit{0.66, 0.321, 6.6, -0.176};
inline constexpr ScalingFit kBpeFit{29.9, 0.231, 19.3, -0.177};

enum class UnitKind { token, byte };

// gamma: input units of training data per FLOP-per-unit of model cost, so a
// budget C = F * N closes with N = gamma * F.
struct DataModelRatio {
  double gamma = 0;
  UnitKind unit = UnitKind::token;
  double k = 1;  // bytes per token when converting between unit kinds
};

// 6 * N_no_embed + 6 * d * L * S.
double flops_per_token(const FlopSpec& s);

// Per-byte cost of a stage stack: each stage's per-position cost divided by
// its contraction factor (how many bytes share one position there).
double flops_per_byte_aunet(const std::vector<FlopSpec>& stages, const std::vector<double>& k);

// k^2 * gamma_token. k is squared through its shortest decimal form so the
// published 4.56^2 = 20.7936 comes out exactly instead of one ulp under.
double gamma_convert(double gamma_token, double k);

double predict_bsz(double c, const ScalingFit& fit);
double predict_lr(double c, const ScalingFit& fit);

// N = C / F.
double tokens_for_budget(double c, double f);

// Average bytes per position at each stage: prefix of {1, 4.56, 6.84, 10.26}.
std::vector<double> contraction_factors(int n_stages);

// Stage summaries for a model configuration: stage 1 spans its attention
// window, deeper stages their max_len; layers on the contracting and the
// expanding path count separately. Pooling projections and upsampling maps
// stay out (param_count covers them, but they run once per boundary, not per
// layer), as does the input embedding.
std::vector<FlopSpec> flop_specs(const AUNetConfig& cfg);

// flops_per_byte_aunet over flop_specs(cfg) with the standard contractions.
double flops_per_byte(const AUNetConfig& cfg);

}  // namespace aunet
