#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace rarforge {

// Deterministic across standard libraries, unlike std::uniform_int_distribution.
// The modulo bias is at most n / 2^64.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

template <typename T>
void fisher_yates(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace rarforge
