#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace aunet {

// Runtime toggle for non-finite screening of op outputs. On by default in
// debug builds, off in release; flip at runtime when chasing an instability.
bool nan_screens_enabled();
void set_nan_screens(bool enabled);

// While an instance is alive, ops on this thread do not record autodiff nodes.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

std::string shape_str(const std::vector<std::int64_t>& shape);

template <typename T>
struct TensorData;

// Tensors are shared handles; ops hand back new handles wired into the graph.
template <typename T>
using Tensor = std::shared_ptr<TensorData<T>>;

template <typename T>
struct Node {
  std::vector<Tensor<T>> parents;
  std::function<void()> backward;
};

// Dense row-major tensor. Rank 0 is a scalar, rank 2 a [rows, cols] matrix.
// grad stays empty until something accumulates into it.
template <typename T>
struct TensorData {
  std::vector<std::int64_t> shape;
  std::vector<T> values;
  std::vector<T> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
  std::int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
  }
};

template <typename T>
Tensor<T> make_tensor(std::vector<std::int64_t> shape, bool requires_grad = false) {
  for (auto d : shape)
    if (d < 0) throw std::invalid_argument("make_tensor: negative extent in shape " + shape_str(shape));
  auto t = std::make_shared<TensorData<T>>();
  t->shape = std::move(shape);
  t->values.assign(static_cast<std::size_t>(t->numel()), T(0));
  t->requires_grad = requires_grad && grad_enabled();
  return t;
}

template <typename T>
Tensor<T> make_tensor(std::vector<std::int64_t> shape, std::vector<T> values, bool requires_grad = false) {
  auto t = make_tensor<T>(std::move(shape), requires_grad);
  if (static_cast<std::int64_t>(values.size()) != t->numel())
    throw std::invalid_argument("make_tensor: " + std::to_string(values.size()) +
                                " values for shape " + shape_str(t->shape));
  t->values = std::move(values);
  return t;
}

template <typename T>
Tensor<T> make_tensor(std::vector<std::int64_t> shape, std::initializer_list<T> values,
                      bool requires_grad = false) {
  return make_tensor(std::move(shape), std::vector<T>(values), requires_grad);
}

// Reverse-mode accumulation from a scalar. Grads add onto whatever is already
// stored, so call zero_grad between optimization steps, not between rows.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss) throw std::invalid_argument("backward: null tensor");
  if (loss->numel() != 1)
    throw std::invalid_argument("backward: expected a scalar, got shape " + shape_str(loss->shape));
  loss->ensure_grad();
  loss->grad[0] += T(1);
  if (!loss->node) return;

  // Iterative post-order over tensors that carry nodes; reversed, every
  // consumer runs before its producers.
  std::vector<TensorData<T>*> order;
  std::unordered_set<const TensorData<T>*> visited;
  std::vector<std::pair<TensorData<T>*, std::size_t>> stack;
  visited.insert(loss.get());
  stack.emplace_back(loss.get(), 0);
  while (!stack.empty()) {
    auto& top = stack.back();
    auto& parents = top.first->node->parents;
    std::size_t& i = top.second;
    while (i < parents.size() && (!parents[i]->node || visited.count(parents[i].get()))) ++i;
    if (i == parents.size()) {
      order.push_back(top.first);
      stack.pop_back();
    } else {
      TensorData<T>* next = parents[i].get();
      ++i;
      visited.insert(next);
      stack.emplace_back(next, 0);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->node->backward();
}

template <typename T>
void zero_grad(const std::vector<Tensor<T>>& params) {
  for (auto& p : params)
    if (p && !p->grad.empty()) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

// Drops the autodiff history, keeping the buffer shared.
template <typename T>
Tensor<T> detach(const Tensor<T>& t) {
  auto out = std::make_shared<TensorData<T>>();
  out->shape = t->shape;
  out->values = t->values;
  return out;
}

}  // namespace aunet
