#include <aunet/ops.hpp>

#include <cmath>
#include <vector>

#include <doctest.h>

#include "fd_check.hpp"
#include "test_util.hpp"

using namespace aunet;

namespace {

// Straight-line attention with explicit probabilities, for cross-checking the
// fused op.
std::vector<double> attention_ref(const std::vector<double>& q, const std::vector<double>& k,
                                  const std::vector<double>& v, std::int64_t s, std::int64_t d,
                                  std::int64_t heads, std::int64_t window) {
  std::vector<double> out(s * d, 0.0);
  const std::int64_t hd = d / heads;
  for (std::int64_t h = 0; h < heads; ++h) {
    for (std::int64_t i = 0; i < s; ++i) {
      std::int64_t j0 = std::max<std::int64_t>(0, i - window + 1);
      std::vector<double> p;
      for (std::int64_t j = j0; j <= i; ++j) {
        double dot = 0;
        for (std::int64_t c = 0; c < hd; ++c)
          dot += q[i * d + h * hd + c] * k[j * d + h * hd + c];
        p.push_back(dot / std::sqrt(double(hd)));
      }
      double m = *std::max_element(p.begin(), p.end());
      double z = 0;
      for (auto& e : p) {
        e = std::exp(e - m);
        z += e;
      }
      for (std::int64_t j = j0; j <= i; ++j)
        for (std::int64_t c = 0; c < hd; ++c)
          out[i * d + h * hd + c] += p[j - j0] / z * v[j * d + h * hd + c];
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("ops") {

TEST_CASE("matmul forward and shape errors") {
  auto a = make_tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = make_tensor<double>({3, 2}, {7, 8, 9, 10, 11, 12});
  auto c = matmul(a, b);
  CHECK(c->shape == std::vector<std::int64_t>{2, 2});
  CHECK(c->values == std::vector<double>{58, 64, 139, 154});
  CHECK_THROWS_WITH_AS(matmul(a, a), "matmul: incompatible shapes [2 x 3] and [2 x 3]",
                       std::invalid_argument);
}

TEST_CASE("matmul gradients") {
  auto a = randn({3, 4}, 1);
  auto b = randn({4, 2}, 2);
  auto w = randn({3, 2}, 3, false);
  fd_check({a, b}, [&] { return sum_all(mul(matmul(a, b), w)); });
}

TEST_CASE("matmul in single precision") {
  auto a = make_tensor<float>({1, 2}, {2.f, 3.f});
  auto b = make_tensor<float>({2, 1}, {4.f, 5.f});
  CHECK(matmul(a, b)->values[0] == 23.f);
}

TEST_CASE("elementwise ops") {
  auto a = randn({2, 3}, 4);
  auto b = randn({2, 3}, 5);
  auto w = randn({2, 3}, 6, false);
  fd_check({a, b}, [&] { return sum_all(mul(mul(add(a, b), w), b)); });
  fd_check({a}, [&] { return sum_all(scale(a, -1.7)); });
  CHECK_THROWS_AS(add(a, randn({3, 2}, 7)), std::invalid_argument);
  CHECK_THROWS_AS(mul(a, randn({2, 2}, 8)), std::invalid_argument);
}

TEST_CASE("silu_gate matches the definition") {
  auto u = make_tensor<double>({1, 1}, {1.0});
  auto v = make_tensor<double>({1, 1}, {2.0});
  double sig = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(silu_gate(u, v)->values[0] == doctest::Approx(1.0 * sig * 2.0));
  auto ur = randn({3, 5}, 9);
  auto vr = randn({3, 5}, 10);
  auto w = randn({3, 5}, 11, false);
  fd_check({ur, vr}, [&] { return sum_all(mul(silu_gate(ur, vr), w)); });
}

TEST_CASE("softmax rows normalize and differentiate") {
  auto x = randn({4, 6}, 12);
  {
    NoGradGuard ng;
    auto y = softmax_rows(x);
    for (int i = 0; i < 4; ++i) {
      double z = 0;
      for (int j = 0; j < 6; ++j) z += y->values[i * 6 + j];
      CHECK(z == doctest::Approx(1.0));
    }
  }
  auto w = randn({4, 6}, 13, false);
  fd_check({x}, [&] { return sum_all(mul(softmax_rows(x), w)); });
  // A huge shift must not overflow.
  auto big = make_tensor<double>({1, 2}, {1000.0, 1000.0});
  CHECK(softmax_rows(big)->values[0] == doctest::Approx(0.5));
}

TEST_CASE("rmsnorm") {
  auto x = make_tensor<double>({1, 2}, {3.0, 4.0});
  auto g = make_tensor<double>({2}, {1.0, 1.0});
  double r = 1.0 / std::sqrt((9.0 + 16.0) / 2.0 + 1e-5);
  auto y = rmsnorm(x, g, 1e-5);
  CHECK(y->values[0] == doctest::Approx(3.0 * r));
  CHECK(y->values[1] == doctest::Approx(4.0 * r));
  // eps keeps an all-zero row finite.
  auto zero = make_tensor<double>({1, 2});
  CHECK(rmsnorm(zero, g, 1e-5)->values[0] == 0.0);
  CHECK_THROWS_AS(rmsnorm(x, make_tensor<double>({3}), 1e-5), std::invalid_argument);

  auto xr = randn({3, 8}, 14);
  auto gr = randn({8}, 15);
  auto w = randn({3, 8}, 16, false);
  fd_check({xr, gr}, [&] { return sum_all(mul(rmsnorm(xr, gr, 1e-5), w)); });
}

TEST_CASE("gather and scatter rows") {
  auto x = make_tensor<double>({3, 2}, {1, 2, 3, 4, 5, 6});
  auto g = gather_rows(x, {2, 0, 2});
  CHECK(g->values == std::vector<double>{5, 6, 1, 2, 5, 6});
  CHECK_THROWS_AS(gather_rows(x, {3}), std::out_of_range);

  auto s = scatter_rows(g, {1, 4, 1}, 5);
  CHECK(s->shape == std::vector<std::int64_t>{5, 2});
  CHECK(s->values[1 * 2] == 10.0);  // duplicate targets accumulate
  CHECK(s->values[4 * 2] == 1.0);
  CHECK(s->values[0] == 0.0);
  CHECK_THROWS_AS(scatter_rows(g, {0, 5, 1}, 5), std::out_of_range);
  CHECK_THROWS_AS(scatter_rows(g, {0, 1}, 5), std::invalid_argument);

  auto xr = randn({4, 3}, 17);
  auto w = randn({6, 3}, 18, false);
  fd_check({xr}, [&] {
    return sum_all(mul(scatter_rows(gather_rows(xr, {1, 3, 1, 0, 2}), {0, 2, 4, 4, 5}, 6), w));
  });
}

TEST_CASE("concat rows") {
  auto a = make_tensor<double>({1, 2}, {1, 2});
  auto b = make_tensor<double>({2, 2}, {3, 4, 5, 6});
  CHECK(concat_rows(a, b)->values == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(concat_rows(a, make_tensor<double>({1, 3})), std::invalid_argument);
  auto ar = randn({2, 3}, 19);
  auto br = randn({3, 3}, 20);
  auto w = randn({5, 3}, 21, false);
  fd_check({ar, br}, [&] { return sum_all(mul(concat_rows(ar, br), w)); });
}

TEST_CASE("rope rotates pairs by position") {
  // One head, one pair: position p rotates by exactly p radians at exponent 0.
  auto x = make_tensor<double>({2, 2}, {1.0, 0.0, 1.0, 0.0});
  auto y = rope(x, 1, 10000.0, 0);
  CHECK(y->values[0] == doctest::Approx(1.0));
  CHECK(y->values[1] == doctest::Approx(0.0));
  CHECK(y->values[2] == doctest::Approx(std::cos(1.0)));
  CHECK(y->values[3] == doctest::Approx(std::sin(1.0)));
  // pos0 shifts the whole sequence.
  auto y5 = rope(x, 1, 10000.0, 5);
  CHECK(y5->values[0] == doctest::Approx(std::cos(5.0)));
  CHECK(y5->values[1] == doctest::Approx(std::sin(5.0)));

  // Norms are preserved pairwise.
  auto xr = randn({3, 8}, 22);
  {
    NoGradGuard ng;
    auto yr = rope(xr, 2, 10000.0, 3);
    for (int i = 0; i < 3; ++i)
      for (int t = 0; t < 4; ++t) {
        double n0 = std::hypot(xr->values[i * 8 + 2 * t], xr->values[i * 8 + 2 * t + 1]);
        double n1 = std::hypot(yr->values[i * 8 + 2 * t], yr->values[i * 8 + 2 * t + 1]);
        CHECK(n0 == doctest::Approx(n1));
      }
  }
  auto w = randn({3, 8}, 23, false);
  fd_check({xr}, [&] { return sum_all(mul(rope(xr, 2, 10000.0, 3), w)); });
  CHECK_THROWS_AS(rope(xr, 3, 10000.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(rope(make_tensor<double>({2, 3}), 1, 10000.0, 0), std::invalid_argument);
}

TEST_CASE("attention matches the reference") {
  const std::int64_t s = 7, d = 6, heads = 3;
  auto q = randn({s, d}, 24);
  auto k = randn({s, d}, 25);
  auto v = randn({s, d}, 26);
  for (std::int64_t window : {std::int64_t(1), std::int64_t(3), std::int64_t(100)}) {
    NoGradGuard ng;
    auto out = causal_windowed_attention(q, k, v, heads, window);
    auto ref = attention_ref(q->values, k->values, v->values, s, d, heads, window);
    for (std::int64_t i = 0; i < s * d; ++i)
      CHECK(out->values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
  {
    // window 1 is pure self-attention: softmax over one key.
    NoGradGuard ng;
    auto out = causal_windowed_attention(q, k, v, heads, 1);
    for (std::int64_t i = 0; i < s * d; ++i) CHECK(out->values[i] == doctest::Approx(v->values[i]));
  }
  CHECK_THROWS_WITH_AS(causal_windowed_attention(q, k, v, heads, 0),
                       "causal_windowed_attention: window must be at least 1, got 0",
                       std::invalid_argument);
  CHECK_THROWS_AS(causal_windowed_attention(q, k, randn({s, d + 2}, 27), heads, 2),
                  std::invalid_argument);

  auto w = randn({s, d}, 28, false);
  fd_check({q, k, v},
           [&] { return sum_all(mul(causal_windowed_attention(q, k, v, heads, 3), w)); }, 1e-6,
           1e-5);
}

TEST_CASE("cross entropy") {
  // Uniform logits cost ln(V) regardless of target.
  auto flat = make_tensor<double>({2, 8});
  CHECK(cross_entropy_logits(flat, {3, 5}, -1)->values[0] == doctest::Approx(std::log(8.0)));

  // Ignored rows do not contribute.
  auto x = randn({4, 5}, 29);
  auto kept = cross_entropy_logits(x, {1, -1, 3, -1}, -1);
  auto a = cross_entropy_logits(gather_rows(x, {0}), {1}, -1);
  auto b = cross_entropy_logits(gather_rows(x, {2}), {3}, -1);
  CHECK(kept->values[0] == doctest::Approx((a->values[0] + b->values[0]) / 2));

  CHECK_THROWS_WITH_AS(cross_entropy_logits(x, {-1, -1, -1, -1}, -1),
                       "cross_entropy: all positions ignored", std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy_logits(x, {0, 1, 5, 0}, -1), std::out_of_range);
  CHECK_THROWS_AS(cross_entropy_logits(x, {0, 1}, -1), std::invalid_argument);

  fd_check({x}, [&] { return cross_entropy_logits(x, {1, -1, 3, 0}, -1); });
}

TEST_CASE("sum_all") {
  auto x = make_tensor<double>({2, 2}, {1, 2, 3, 4});
  auto ssum = sum_all(x);
  CHECK(ssum->shape.empty());
  CHECK(ssum->values[0] == 10.0);
}

TEST_CASE("segment_mean averages over (prev, bound] spans") {
  auto x = make_tensor<double>({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8}, true);
  auto y = segment_mean(x, {0, 2, 3});
  REQUIRE(y->shape == std::vector<std::int64_t>({3, 2}));
  CHECK(y->values == std::vector<double>({1, 2, 4, 5, 7, 8}));

  CHECK_THROWS_AS(segment_mean(x, {2, 1}), std::invalid_argument);
  CHECK_THROWS_AS(segment_mean(x, {5}), std::invalid_argument);
  CHECK(segment_mean(x, {})->shape == std::vector<std::int64_t>({0, 2}));

  fd_check({x}, [&] { return sum_all(mul(segment_mean(x, {1, 3}), segment_mean(x, {1, 3}))); });
}

TEST_CASE("indexed_linear picks a source row and a map per output row") {
  auto src = make_tensor<double>({2, 2}, {1, 2, 3, 4}, true);
  auto m0 = make_tensor<double>({2, 3}, {1, 0, 0, 0, 1, 0}, true);
  auto m1 = make_tensor<double>({2, 3}, {0, 0, 1, 0, 0, 2}, true);
  auto y = indexed_linear<double>(src, {m0, m1}, {0, 1, 0}, {0, 1, 1});
  REQUIRE(y->shape == std::vector<std::int64_t>({3, 3}));
  CHECK(y->values == std::vector<double>({1, 2, 0, 0, 0, 11, 0, 0, 5}));

  CHECK_THROWS_AS(indexed_linear<double>(src, {}, {0}, {0}), std::invalid_argument);
  CHECK_THROWS_AS((indexed_linear<double>(src, {m0, m1}, {2}, {0})), std::out_of_range);
  CHECK_THROWS_AS((indexed_linear<double>(src, {m0, m1}, {0}, {2})), std::out_of_range);
  CHECK_THROWS_AS((indexed_linear<double>(src, {m0, m1}, {0, 1}, {0})), std::invalid_argument);
  auto bad = make_tensor<double>({3, 3}, std::vector<double>(9, 0.0));
  CHECK_THROWS_AS((indexed_linear<double>(src, {bad}, {0}, {0})), std::invalid_argument);

  auto s2 = randn<double>({3, 4}, 31);
  auto a = randn<double>({4, 2}, 32);
  auto b = randn<double>({4, 2}, 33);
  fd_check({s2, a, b}, [&] {
    auto out = indexed_linear<double>(s2, {a, b}, {0, 2, 1, 2}, {0, 1, 1, 0});
    return sum_all(mul(out, out));
  });
}

}  // TEST_SUITE
