#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace entroloss {

using Rng = std::mt19937_64;

/// Generator for a named sub-stream of `seed` (e.g. one per sample or epoch).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::seed_seq::result_type words[16];
  std::size_t n = 0;
  auto push = [&](std::uint64_t v) {
    words[n++] = static_cast<std::seed_seq::result_type>(v & 0xffffffffu);
    words[n++] = static_cast<std::seed_seq::result_type>(v >> 32);
  };
  push(seed);
  for (std::uint64_t s : stream) {
    if (n + 2 > std::size(words)) {
      break;
    }
    push(s);
  }
  std::seed_seq seq(words, words + n);
  return Rng(seq);
}

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace entroloss
