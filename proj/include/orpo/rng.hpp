#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace orpo {

using Rng = std::mt19937_64;

/// Engine seeded from a tuple of integers, e.g. (seed, epoch) or
/// (seed, prompt_index, round). Distinct tuples give independent streams.
inline Rng make_rng(std::initializer_list<std::uint64_t> keys) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * keys.size());
  for (std::uint64_t k : keys) {
    words.push_back(static_cast<std::uint32_t>(k & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Uniform double strictly inside (0, 1) from the top 53 bits. Used instead
/// of std::uniform_real_distribution so sampled values do not depend on the
/// standard library implementation.
inline double uniform_open01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_open01(rng);
}

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform_open01(rng) * static_cast<double>(n)) % n;
}

/// Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

}  // namespace orpo
