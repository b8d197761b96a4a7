#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ltssl {

using Rng = std::mt19937_64;

/// Stream domains. Each consumer of randomness draws from its own domain so
/// that adding draws in one place never shifts another.
enum class StreamTag : std::uint64_t {
  kGenerate = 1,
  kTestPool = 2,
  kSplit = 3,
  kBatch = 4,
  kAugLabeled = 5,
  kAugUnlabeled = 6,
  kInit = 7,
  kSweep = 8,
  kSubsample = 9,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Order-sensitive hash of a key tuple into a 64-bit seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> keys);

/// Counter-based stream: the generator state depends only on the keys, never
/// on how many draws happened elsewhere.
inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  return Rng(mix_seed({seed, static_cast<std::uint64_t>(tag), a, b}));
}

}  // namespace ltssl
