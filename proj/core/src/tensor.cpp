#include "aunet/tensor.hpp"

#include <atomic>
#include <sstream>

namespace aunet {

namespace {

std::atomic<bool> g_nan_screens{
#ifdef NDEBUG
    false
#else
    true
#endif
};

thread_local int g_no_grad_depth = 0;

}  // namespace

bool nan_screens_enabled() { return g_nan_screens.load(std::memory_order_relaxed); }
void set_nan_screens(bool enabled) { g_nan_screens.store(enabled, std::memory_order_relaxed); }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

std::string shape_str(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace aunet
