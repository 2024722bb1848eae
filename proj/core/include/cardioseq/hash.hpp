#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace cardioseq {

/// 64-bit FNV-1a, used for parameter and configuration digests.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes) {
    for (auto b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) {
    update(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  template <typename T>
  void update_values(std::span<const T> values) {
    update(std::span(reinterpret_cast<const std::uint8_t*>(values.data()), values.size_bytes()));
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace cardioseq
