#include <cstdint>
#include <vector>

#include "aunet/blocks.hpp"
#include "aunet/ops.hpp"
#include "doctest.h"
#include "fd_check.hpp"
#include "test_util.hpp"

using aunet::Tensor;

namespace {

template <typename T>
aunet::BlockWeights<T> make_block(std::int64_t dim, std::int64_t ffn,
                                  std::uint64_t seed, bool rg = true) {
  aunet::BlockWeights<T> w;
  w.wq = randn<T>({dim, dim}, seed + 1, rg, 0.3);
  w.wk = randn<T>({dim, dim}, seed + 2, rg, 0.3);
  w.wv = randn<T>({dim, dim}, seed + 3, rg, 0.3);
  w.wo = randn<T>({dim, dim}, seed + 4, rg, 0.3);
  w.w1 = randn<T>({dim, ffn}, seed + 5, rg, 0.3);
  w.w2 = randn<T>({dim, ffn}, seed + 6, rg, 0.3);
  w.w3 = randn<T>({ffn, dim}, seed + 7, rg, 0.3);
  w.g_attn = aunet::make_tensor<T>({dim}, std::vector<T>(dim, T(1)), rg);
  w.g_mlp = aunet::make_tensor<T>({dim}, std::vector<T>(dim, T(1)), rg);
  return w;
}

template <typename T>
void collect(const aunet::BlockWeights<T>& w, std::vector<Tensor<T>>& out) {
  for (auto& t : {w.wq, w.wk, w.wv, w.wo, w.w1, w.w2, w.w3, w.g_attn, w.g_mlp})
    out.push_back(t);
}

}  // namespace

TEST_SUITE("blocks") {

TEST_CASE("zeroed output projections reduce a stage to the identity") {
  auto w = make_block<double>(8, 16, 42, false);
  std::fill(w.wo->values.begin(), w.wo->values.end(), 0.0);
  std::fill(w.w3->values.begin(), w.w3->values.end(), 0.0);
  aunet::StageWeights<double> stage;
  stage.layers = {w, w};
  stage.head_dim = 4;

  auto x = randn<double>({5, 8}, 7, false);
  auto y = aunet::stage_forward(x, stage);
  REQUIRE(y->shape == x->shape);
  for (std::size_t i = 0; i < x->values.size(); ++i) CHECK(y->values[i] == x->values[i]);
}

TEST_CASE("single position matches a hand-rolled oracle with attention = v") {
  const std::int64_t dim = 8, ffn = 10;
  auto w = make_block<double>(dim, ffn, 99, false);
  auto x = randn<double>({1, dim}, 3, false);

  auto y = aunet::block_forward(x, w, 4, 0);

  // With one position the softmax is a singleton, so attention returns v.
  auto xn = aunet::rmsnorm(x, w.g_attn, aunet::kRmsNormEps);
  auto v = aunet::matmul(xn, w.wv);
  auto h = aunet::add(x, aunet::matmul(v, w.wo));
  auto hn = aunet::rmsnorm(h, w.g_mlp, aunet::kRmsNormEps);
  auto gated = aunet::silu_gate(aunet::matmul(hn, w.w1), aunet::matmul(hn, w.w2));
  auto want = aunet::add(h, aunet::matmul(gated, w.w3));

  for (std::int64_t j = 0; j < dim; ++j)
    CHECK(y->values[j] == doctest::Approx(want->values[j]).epsilon(1e-12));
}

TEST_CASE("perturbing a position leaves earlier outputs bit-exact") {
  const std::int64_t S = 7, dim = 8;
  aunet::StageWeights<double> stage;
  stage.layers = {make_block<double>(dim, 12, 5, false)};
  stage.head_dim = 4;

  for (std::int64_t win : {std::int64_t{0}, std::int64_t{3}}) {
    stage.window = win;
    auto x = randn<double>({S, dim}, 11, false);
    auto y0 = aunet::stage_forward(x, stage);
    const std::int64_t j = 4;
    auto x2 = aunet::make_tensor<double>(x->shape, x->values, false);
    x2->values[j * dim + 2] += 1.5;
    auto y1 = aunet::stage_forward(x2, stage);
    for (std::int64_t t = 0; t < j; ++t)
      for (std::int64_t c = 0; c < dim; ++c)
        CHECK(y0->values[t * dim + c] == y1->values[t * dim + c]);
    // and the perturbed row itself must change
    bool changed = false;
    for (std::int64_t c = 0; c < dim; ++c)
      changed |= y0->values[j * dim + c] != y1->values[j * dim + c];
    CHECK(changed);
  }
}

TEST_CASE("full-window attention depends only on relative positions") {
  aunet::StageWeights<double> stage;
  stage.layers = {make_block<double>(8, 12, 21, false)};
  stage.head_dim = 2;
  auto x = randn<double>({6, 8}, 13, false);
  auto y0 = aunet::stage_forward(x, stage, 0);
  auto y1 = aunet::stage_forward(x, stage, 1000);
  for (std::size_t i = 0; i < y0->values.size(); ++i)
    CHECK(y0->values[i] == doctest::Approx(y1->values[i]).epsilon(1e-9));
}

TEST_CASE("stage gradients agree with finite differences") {
  aunet::StageWeights<double> stage;
  stage.layers = {make_block<double>(4, 6, 77), make_block<double>(4, 6, 78)};
  stage.head_dim = 2;
  stage.window = 3;
  auto x = randn<double>({5, 4}, 17);

  std::vector<Tensor<double>> leaves = {x};
  for (auto& l : stage.layers) collect(l, leaves);
  fd_check(leaves, [&] { return aunet::sum_all(aunet::stage_forward(x, stage)); },
           1e-5, 2e-5);
}

TEST_CASE("mismatched shapes are rejected") {
  auto w = make_block<double>(8, 12, 1, false);
  auto x = randn<double>({3, 6}, 2, false);
  CHECK_THROWS_AS(aunet::block_forward(x, w, 2, 0), std::invalid_argument);
  auto x8 = randn<double>({3, 8}, 2, false);
  CHECK_THROWS_WITH(aunet::block_forward(x8, w, 3, 0),
                    doctest::Contains("not divisible by head_dim"));
}

}  // TEST_SUITE
