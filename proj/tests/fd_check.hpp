#pragma once

#include <aunet/tensor.hpp>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <doctest.h>

// Rebuilds the graph via f (which must read the current leaf values), runs
// backward from its scalar result, and checks every leaf gradient against
// central differences.
inline void fd_check(const std::vector<aunet::Tensor<double>>& leaves,
                     const std::function<aunet::Tensor<double>()>& f, double h = 1e-6,
                     double tol = 1e-6) {
  for (auto& leaf : leaves) REQUIRE(leaf->requires_grad);
  aunet::zero_grad(leaves);
  auto loss = f();
  aunet::backward(loss);
  auto eval = [&] {
    aunet::NoGradGuard ng;
    return f()->values[0];
  };
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    // Leaves the graph never touched keep an unallocated (all-zero) gradient.
    for (std::size_t i = 0; i < leaf->values.size(); ++i) {
      const double saved = leaf->values[i];
      leaf->values[i] = saved + h;
      const double up = eval();
      leaf->values[i] = saved - h;
      const double down = eval();
      leaf->values[i] = saved;
      const double fd = (up - down) / (2 * h);
      const double got = leaf->grad.empty() ? 0.0 : leaf->grad[i];
      INFO("leaf ", li, " element ", i, ": fd=", fd, " grad=", got);
      CHECK(std::abs(got - fd) <= tol * std::max(1.0, std::abs(fd)));
    }
  }
}
