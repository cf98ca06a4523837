#pragma once

#include <cstdint>
#include <random>

namespace nasopt {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent seeds from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `stream` under `master`. Streams are keyed by task index,
/// never by worker index, so results do not depend on the thread count.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
  return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

}  // namespace nasopt
