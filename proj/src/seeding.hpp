#pragma once

#include <cstdint>
#include <mutex>

#include <torch/torch.h>

namespace turbo::detail {

// Module constructors draw from torch's global generator. Holding this scope
// while constructing makes initialization a function of the seed alone.
class SeededScope {
 public:
  explicit SeededScope(std::uint64_t seed) : lock_(mutex()) { torch::manual_seed(seed); }

 private:
  static std::mutex& mutex() {
    static std::mutex m;
    return m;
  }
  std::lock_guard<std::mutex> lock_;
};

}  // namespace turbo::detail
