#pragma once

#include <aunet/tensor.hpp>

#include <cstdint>
#include <random>
#include <vector>

template <typename T = double>
aunet::Tensor<T> randn(std::vector<std::int64_t> shape, unsigned seed, bool requires_grad = true,
                       T sd = T(1)) {
  auto t = aunet::make_tensor<T>(std::move(shape), requires_grad);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& v : t->values) v = static_cast<T>(nd(rng)) * sd;
  return t;
}
