#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace trace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// One global seed fans out to independent deterministic streams keyed by
// small labels (component tag, item index, ...). Parallel loops draw from
// per-item streams so results do not depend on thread count.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> labels) {
  std::uint64_t s = splitmix64(base ^ 0x5175D1F7C0FFEE42ULL);
  for (std::uint64_t label : labels) {
    s = splitmix64(s ^ splitmix64(label));
  }
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t base,
                                std::initializer_list<std::uint64_t> labels) {
  return std::mt19937_64(derive_seed(base, labels));
}

}  // namespace trace
