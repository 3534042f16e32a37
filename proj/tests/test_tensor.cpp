#include <aunet/ops.hpp>
#include <aunet/tensor.hpp>

#include <doctest.h>

#include "test_util.hpp"

using namespace aunet;

TEST_SUITE("tensor") {

TEST_CASE("shapes, scalars, element counts") {
  auto s = make_tensor<double>({});
  CHECK(s->numel() == 1);
  CHECK(s->values.size() == 1);
  auto m = make_tensor<double>({3, 4});
  CHECK(m->numel() == 12);
  CHECK(m->rows() == 3);
  CHECK(m->cols() == 4);
  CHECK_THROWS_AS(make_tensor<double>({2, -1}), std::invalid_argument);
  CHECK_THROWS_AS(make_tensor<double>({2, 2}, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("backward accumulates until zero_grad") {
  auto x = make_tensor<double>({2}, {1.0, 2.0}, true);
  backward(sum_all(scale(x, 3.0)));
  CHECK(x->grad[0] == 3.0);
  backward(sum_all(scale(x, 3.0)));
  CHECK(x->grad[0] == 6.0);
  zero_grad<double>({x});
  CHECK(x->grad[1] == 0.0);
}

TEST_CASE("backward wants a scalar") {
  auto x = make_tensor<double>({2}, true);
  CHECK_THROWS_AS(backward(x), std::invalid_argument);
  CHECK_THROWS_AS(backward(Tensor<double>{}), std::invalid_argument);
}

TEST_CASE("reused input shows up once per path") {
  auto x = make_tensor<double>({3}, {1.0, -2.0, 0.5}, true);
  backward(sum_all(add(x, x)));
  for (double g : x->grad) CHECK(g == 2.0);
  zero_grad<double>({x});
  backward(sum_all(mul(x, x)));
  CHECK(x->grad[0] == doctest::Approx(2.0));
  CHECK(x->grad[1] == doctest::Approx(-4.0));
}

TEST_CASE("graph keeps intermediates alive") {
  auto x = randn({4}, 7);
  Tensor<double> loss;
  {
    auto a = scale(x, 2.0);
    auto b = add(a, x);
    loss = sum_all(b);
  }
  backward(loss);
  for (double g : x->grad) CHECK(g == 3.0);
}

TEST_CASE("NoGradGuard suppresses recording") {
  auto x = randn({2, 2}, 1);
  NoGradGuard ng;
  auto y = add(x, x);
  CHECK(!y->node);
  CHECK(!y->requires_grad);
}

TEST_CASE("detach copies values without history") {
  auto x = randn({2}, 3);
  auto y = scale(x, 2.0);
  auto d = detach(y);
  CHECK(d->values == y->values);
  CHECK(!d->node);
  CHECK(!d->requires_grad);
}

TEST_CASE("nan screens catch the offending op") {
  bool was = nan_screens_enabled();
  set_nan_screens(true);
  auto x = make_tensor<double>({1}, std::vector<double>{1e308});
  CHECK_THROWS_WITH_AS(add(x, x), "add produced a non-finite value", std::runtime_error);
  set_nan_screens(false);
  CHECK_NOTHROW(add(x, x));
  set_nan_screens(was);
}

}  // TEST_SUITE
