#pragma once

// Named, hierarchically derived random streams. Every stream is a fresh
// mt19937_64 seeded through std::seed_seq from (root seed, purpose, path...),
// so a stream's output depends only on its coordinates and never on how many
// other streams were consumed before it.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

#include "rlvr/errors.hpp"

namespace rlvr {

using Stream = std::mt19937_64;

enum class StreamPurpose : std::uint32_t {
  kTaskGeneration = 1,
  kTaskShuffle = 2,
  kGroupTask = 3,
  kSample = 4,
  kEvaluation = 5,
  kHeldOut = 6,
};

inline Stream derive_stream(std::uint64_t root, StreamPurpose purpose,
                            std::initializer_list<std::uint64_t> path = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(3 + 2 * path.size());
  words.push_back(static_cast<std::uint32_t>(root));
  words.push_back(static_cast<std::uint32_t>(root >> 32));
  words.push_back(static_cast<std::uint32_t>(purpose));
  for (std::uint64_t p : path) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Stream(seq);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Stream& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t uniform_index(Stream& rng, std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  // Lemire-style rejection keeps the draw exactly uniform.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

inline bool bernoulli(Stream& rng, double p) { return uniform01(rng) < p; }

// Inverse-CDF draw from a probability vector that sums to one.
inline std::size_t sample_categorical(Stream& rng,
                                      std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Round-off: fall back to the last bucket with non-zero mass.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  throw InvalidArgument("sample_categorical: no probability mass");
}

}  // namespace rlvr
